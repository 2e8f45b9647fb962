"""Distributed-subarray mmWave massive MIMO: channels, beam-steering rates, closed forms and DMT curves."""

from __future__ import annotations

__version__ = "0.1.0"

from .arrays import ArrayKind, ArraySpec, SteeringVector, coherence, embed_response, ula_response, upa_response
from .beamforming import BeamformerPair, PowerAllocation, achievable_rate, build_beamsteering, waterfill
from .channel import AngleLaw, ChannelRealization, LinkConfig, PathComponent, PathLaw, SystemGeometry, sample_channel
from .closedform import Architecture, DmtCurve, HomogeneousEnsemble, dmt_curve, ergodic_rate_homogeneous
from .special import delta, exp_integral_e1

__all__ = [
    "__version__",
    "ArrayKind", "ArraySpec", "SteeringVector", "coherence", "embed_response", "ula_response", "upa_response",
    "BeamformerPair", "PowerAllocation", "achievable_rate", "build_beamsteering", "waterfill",
    "AngleLaw", "ChannelRealization", "LinkConfig", "PathComponent", "PathLaw", "SystemGeometry", "sample_channel",
    "Architecture", "DmtCurve", "HomogeneousEnsemble", "dmt_curve", "ergodic_rate_homogeneous",
    "delta", "exp_integral_e1",
]
