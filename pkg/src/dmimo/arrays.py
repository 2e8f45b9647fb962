"""Array response vectors for ULA/UPA subarrays and their distributed embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "ArrayKind",
    "ArraySpec",
    "SteeringVector",
    "ula_response",
    "upa_response",
    "array_response",
    "embed_response",
    "coherence",
]


class ArrayKind(str, Enum):
    ULA = "ULA"
    UPA = "UPA"


@dataclass(frozen=True)
class ArraySpec:
    """Geometry of one subarray.

    Spacings are in carrier wavelengths. For a ULA, ``n_h`` is the element
    count and ``n_v`` must be 1.
    """

    kind: ArrayKind = ArrayKind.ULA
    n_h: int = 1
    n_v: int = 1
    d_h: float = 0.5
    d_v: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        for name in ("n_h", "n_v"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("d_h", "d_v"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be a finite positive spacing, got {value!r}")
            object.__setattr__(self, name, value)
        if self.kind is ArrayKind.ULA and self.n_v != 1:
            raise ValueError("a ULA has n_v = 1")

    @classmethod
    def ula(cls, n: int, spacing: float = 0.5) -> "ArraySpec":
        return cls(ArrayKind.ULA, n, 1, spacing, spacing)

    @classmethod
    def upa(cls, n_h: int, n_v: int, d_h: float = 0.5, d_v: float = 0.5) -> "ArraySpec":
        return cls(ArrayKind.UPA, n_h, n_v, d_h, d_v)

    @property
    def size(self) -> int:
        return self.n_h * self.n_v


@dataclass(frozen=True)
class SteeringVector:
    """A unit-norm array response, optionally embedded into a distributed array.

    ``rau_index`` is 1-based and set only for embedded vectors.
    """

    entries: np.ndarray
    rau_index: int | None = None

    @property
    def total_length(self) -> int:
        return self.entries.shape[0]

    def __len__(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _check_angle(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _ula_entries(n: int, spacing: float, angle: float) -> np.ndarray:
    k = np.arange(n)
    return np.exp(2j * np.pi * spacing * k * math.sin(angle)) / math.sqrt(n)


def ula_response(spec: ArraySpec, azimuth: float) -> SteeringVector:
    """ULA response; entry k is exp(j 2 pi k d sin(azimuth)) / sqrt(N)."""
    if spec.kind is not ArrayKind.ULA:
        raise ValueError("ula_response needs a ULA spec")
    azimuth = _check_angle(azimuth, "azimuth")
    return SteeringVector(_ula_entries(spec.n_h, spec.d_h, azimuth))


def upa_response(spec: ArraySpec, azimuth: float, elevation: float) -> SteeringVector:
    """UPA response: horizontal ULA factor (kron) vertical ULA factor."""
    if spec.kind is not ArrayKind.UPA:
        raise ValueError("upa_response needs a UPA spec")
    azimuth = _check_angle(azimuth, "azimuth")
    elevation = _check_angle(elevation, "elevation")
    horizontal = _ula_entries(spec.n_h, spec.d_h, azimuth)
    vertical = _ula_entries(spec.n_v, spec.d_v, elevation)
    return SteeringVector(np.kron(horizontal, vertical))


def array_response(spec: ArraySpec, azimuth: float, elevation: float = 0.0) -> SteeringVector:
    # ULA ignores elevation by construction
    if spec.kind is ArrayKind.ULA:
        return ula_response(spec, azimuth)
    return upa_response(spec, azimuth, elevation)


def response_matrix(spec: ArraySpec, azimuths: np.ndarray, elevations: np.ndarray) -> np.ndarray:
    """Column-stacked responses for many angles at once (size x n_angles)."""
    azimuths = np.asarray(azimuths, dtype=float)
    elevations = np.asarray(elevations, dtype=float)
    if not (np.all(np.isfinite(azimuths)) and np.all(np.isfinite(elevations))):
        raise ValueError("angles must be finite")
    kh = np.arange(spec.n_h)[:, None]
    horizontal = np.exp(2j * np.pi * spec.d_h * kh * np.sin(azimuths)[None, :]) / math.sqrt(spec.n_h)
    if spec.kind is ArrayKind.ULA:
        return horizontal
    kv = np.arange(spec.n_v)[:, None]
    vertical = np.exp(2j * np.pi * spec.d_v * kv * np.sin(elevations)[None, :]) / math.sqrt(spec.n_v)
    # column-wise Kronecker product, horizontal index major
    return (horizontal[:, None, :] * vertical[None, :, :]).reshape(spec.size, -1)


def embed_response(local: SteeringVector, rau_index: int, num_raus: int) -> SteeringVector:
    """Place ``local`` into window ((rau_index-1)*n, rau_index*n] of a num_raus*n vector."""
    if not 1 <= rau_index <= num_raus:
        raise IndexError(f"rau_index {rau_index} outside 1..{num_raus}")
    entries = np.asarray(local.entries)
    n = entries.shape[0]
    out = np.zeros(num_raus * n, dtype=complex)
    out[(rau_index - 1) * n : rau_index * n] = entries
    return SteeringVector(out, rau_index=rau_index)


def coherence(v1: SteeringVector | np.ndarray, v2: SteeringVector | np.ndarray) -> float:
    """|<v1, v2>|."""
    a = np.asarray(v1)
    b = np.asarray(v2)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)))
