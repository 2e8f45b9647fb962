"""Clustered multipath channel for a (K_t, N_t, K_r, N_r) distributed MIMO link.

Every subarray pair (i, j) contributes L_ij single-ray clusters. Each ray has a
CN(0, 1) gain and independent arrival/departure angles. The full channel is
the block matrix of scaled subchannels, or equivalently the sum of L_s
rank-one terms built from block-embedded steering vectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .arrays import ArraySpec, response_matrix

__all__ = [
    "AngleLaw",
    "PathLaw",
    "SystemGeometry",
    "LinkConfig",
    "PathComponent",
    "ChannelRealization",
    "ChannelAssemblyError",
    "draw_path_counts",
    "sample_paths",
    "sort_paths",
    "assemble_channel",
    "sample_channel",
    "write_path_dump",
]


class AngleLaw(str, Enum):
    # sin(angle) uniform on [-1, 1): uniformly spread spatial frequencies
    UNIFORM_SPATIAL_FREQUENCY = "uniform_spatial_frequency"
    # azimuth uniform on [-pi, pi), elevation uniform on [-pi/2, pi/2]
    UNIFORM_AZIMUTH = "uniform_azimuth"


class PathLaw(str, Enum):
    FIXED = "fixed"
    POISSON = "poisson"


class ChannelAssemblyError(RuntimeError):
    """Block-form and rank-one-sum constructions of H disagree."""


@dataclass(frozen=True)
class SystemGeometry:
    k_t: int
    k_r: int
    tx_array: ArraySpec
    rx_array: ArraySpec

    def __post_init__(self):
        for name in ("k_t", "k_r"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def n_t(self) -> int:
        return self.tx_array.size

    @property
    def n_r(self) -> int:
        return self.rx_array.size

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of H: (K_r N_r, K_t N_t)."""
        return self.k_r * self.n_r, self.k_t * self.n_t

    @classmethod
    def symmetric_ula(cls, k: int, n: int, spacing: float = 0.5) -> "SystemGeometry":
        array = ArraySpec.ula(n, spacing)
        return cls(k, k, array, array)


@dataclass(frozen=True)
class LinkConfig:
    """Large-scale gains and the path-count law for every subarray pair.

    ``g`` and ``path_counts`` are K_r x K_t. Under the Poisson law the counts
    are drawn per realization with mean ``mean_paths`` and conditioned on
    being at least one.
    """

    g: np.ndarray
    path_law: PathLaw = PathLaw.FIXED
    path_counts: np.ndarray | None = None
    mean_paths: float | None = None
    angle_law: AngleLaw = AngleLaw.UNIFORM_SPATIAL_FREQUENCY

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if g.ndim != 2 or not np.all(np.isfinite(g)):
            raise ValueError("g must be a finite K_r x K_t matrix")
        if np.any(g < 0):
            raise ValueError("large-scale gains g_ij must be nonnegative")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "path_law", PathLaw(self.path_law))
        object.__setattr__(self, "angle_law", AngleLaw(self.angle_law))
        if self.path_law is PathLaw.FIXED:
            if self.path_counts is None:
                raise ValueError("a fixed path law needs path_counts")
            counts = np.asarray(self.path_counts)
            if counts.ndim == 0:
                counts = np.full(g.shape, counts)
            if counts.shape != g.shape:
                raise ValueError(f"path_counts shape {counts.shape} != g shape {g.shape}")
            if np.any(counts != np.round(counts)) or np.any(counts < 1):
                raise ValueError("fixed path counts L_ij must be integers >= 1")
            object.__setattr__(self, "path_counts", counts.astype(int))
        else:
            mean = self.mean_paths
            if mean is None or not math.isfinite(mean) or mean <= 0:
                raise ValueError("a Poisson path law needs a positive mean_paths")
            object.__setattr__(self, "mean_paths", float(mean))

    @classmethod
    def fixed(cls, k_r: int, k_t: int, paths: int, g: float = 1.0, **kwargs) -> "LinkConfig":
        return cls(np.full((k_r, k_t), float(g)), PathLaw.FIXED,
                   path_counts=np.full((k_r, k_t), paths), **kwargs)

    @classmethod
    def poisson(cls, k_r: int, k_t: int, mean_paths: float, g: float = 1.0, **kwargs) -> "LinkConfig":
        return cls(np.full((k_r, k_t), float(g)), PathLaw.POISSON, mean_paths=mean_paths, **kwargs)

    @property
    def is_homogeneous(self) -> bool:
        """Equal g and equal fixed L for every pair (so every path has the same gamma-tilde)."""
        if self.path_law is not PathLaw.FIXED:
            return False
        return bool(np.all(self.g == self.g.flat[0]) and np.all(self.path_counts == self.path_counts.flat[0]))

    def expected_path_count(self) -> float:
        """E[L_ij] per pair; the Poisson law is biased upward by the >= 1 conditioning."""
        if self.path_law is PathLaw.FIXED:
            return float(np.mean(self.path_counts))
        lam = self.mean_paths
        return lam / -math.expm1(-lam)


@dataclass(frozen=True)
class PathComponent:
    """One propagation path. RAU indices are 1-based; ``draw`` is the global draw order."""

    rx_rau: int
    tx_rau: int
    draw: int
    alpha: complex
    alpha_tilde: complex
    aoa_az: float
    aoa_el: float
    aod_az: float
    aod_el: float

    @property
    def psi(self) -> float:
        return math.atan2(self.alpha_tilde.imag, self.alpha_tilde.real)


@dataclass
class ChannelRealization:
    geometry: SystemGeometry
    link: LinkConfig
    path_counts: np.ndarray
    paths: list[PathComponent]
    H: np.ndarray
    # embedded steering vectors, one column per path in sorted order
    rx_vectors: np.ndarray = field(repr=False)
    tx_vectors: np.ndarray = field(repr=False)

    @property
    def l_s(self) -> int:
        return len(self.paths)

    @property
    def alpha_tilde(self) -> np.ndarray:
        return np.array([p.alpha_tilde for p in self.paths], dtype=complex)

    @property
    def path_gains(self) -> np.ndarray:
        """|alpha_tilde_l|^2 in descending order."""
        return np.abs(self.alpha_tilde) ** 2


def _draw_angles(rng: np.random.Generator, n: int, law: AngleLaw) -> np.ndarray:
    # columns: aoa_az, aoa_el, aod_az, aod_el
    u = rng.random((n, 4))
    if law is AngleLaw.UNIFORM_SPATIAL_FREQUENCY:
        return np.arcsin(2.0 * u - 1.0)
    scale = np.array([np.pi, np.pi / 2, np.pi, np.pi / 2])
    return (2.0 * u - 1.0) * scale


def draw_path_counts(geometry: SystemGeometry, link: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    shape = (geometry.k_r, geometry.k_t)
    if link.g.shape != shape:
        raise ValueError(f"link matrices are {link.g.shape}, geometry needs {shape}")
    if link.path_law is PathLaw.FIXED:
        return link.path_counts.copy()
    counts = rng.poisson(link.mean_paths, size=shape)
    # resample zeros until every pair has a path
    while np.any(counts == 0):
        zeros = counts == 0
        counts[zeros] = rng.poisson(link.mean_paths, size=int(zeros.sum()))
    return counts


def sample_paths(geometry: SystemGeometry, link: LinkConfig, rng: np.random.Generator) -> list[PathComponent]:
    """Draw every path of one realization, in (i, j, l) draw order.

    Draw order is fixed (counts, then gains, then angles) and does not depend
    on the array sizes, so realizations at different N share their randomness.
    """
    counts = draw_path_counts(geometry, link, rng)
    l_s = int(counts.sum())
    gauss = rng.standard_normal((l_s, 2)) * math.sqrt(0.5)
    alpha = gauss[:, 0] + 1j * gauss[:, 1]
    angles = _draw_angles(rng, l_s, link.angle_law)

    nn = geometry.n_t * geometry.n_r
    paths = []
    k = 0
    for i in range(geometry.k_r):
        for j in range(geometry.k_t):
            scale = math.sqrt(link.g[i, j] * nn / counts[i, j])
            for _ in range(counts[i, j]):
                a = complex(alpha[k])
                paths.append(PathComponent(
                    i + 1, j + 1, k, a, scale * a,
                    float(angles[k, 0]), float(angles[k, 1]), float(angles[k, 2]), float(angles[k, 3]),
                ))
                k += 1
    return paths


def sort_paths(paths: Iterable[PathComponent]) -> list[PathComponent]:
    """Descending |alpha_tilde|; ties by (rx_rau, tx_rau, draw) ascending."""
    return sorted(paths, key=lambda p: (-abs(p.alpha_tilde), p.rx_rau, p.tx_rau, p.draw))


def _embedded(spec: ArraySpec, num_raus: int, rau: np.ndarray, az: np.ndarray, el: np.ndarray) -> np.ndarray:
    local = response_matrix(spec, az, el)
    n = spec.size
    out = np.zeros((num_raus * n, local.shape[1]), dtype=complex)
    for col, r in enumerate(rau):
        out[(r - 1) * n : r * n, col] = local[:, col]
    return out


def assemble_channel(
    paths: Sequence[PathComponent],
    geometry: SystemGeometry,
    link: LinkConfig,
    check: bool = True,
    atol: float = 1e-10,
) -> ChannelRealization:
    """Sort the paths and build H as a sum of rank-one terms.

    With ``check`` the block form (each subchannel built from its own rays,
    scaled by sqrt(g_ij) and placed in block (i, j)) is built independently
    and must agree entrywise within ``atol``.
    """
    if not paths:
        raise ValueError("need at least one path")
    ordered = sort_paths(paths)
    rx = np.array([p.rx_rau for p in ordered])
    tx = np.array([p.tx_rau for p in ordered])
    if rx.min() < 1 or rx.max() > geometry.k_r or tx.min() < 1 or tx.max() > geometry.k_t:
        raise ValueError("path RAU indices inconsistent with the geometry")
    if link.g.shape != (geometry.k_r, geometry.k_t):
        raise ValueError("link matrices inconsistent with the geometry")
    counts = np.zeros((geometry.k_r, geometry.k_t), dtype=int)
    np.add.at(counts, (rx - 1, tx - 1), 1)

    a_r = _embedded(geometry.rx_array, geometry.k_r, rx,
                    np.array([p.aoa_az for p in ordered]), np.array([p.aoa_el for p in ordered]))
    a_t = _embedded(geometry.tx_array, geometry.k_t, tx,
                    np.array([p.aod_az for p in ordered]), np.array([p.aod_el for p in ordered]))
    alpha_tilde = np.array([p.alpha_tilde for p in ordered], dtype=complex)
    H = (a_r * alpha_tilde) @ a_t.conj().T

    if check:
        block = _block_form(ordered, geometry, link, counts)
        err = float(np.max(np.abs(block - H))) if H.size else 0.0
        if err >= atol:
            raise ChannelAssemblyError(f"block form and rank-one sum differ by {err:.3e}")

    return ChannelRealization(geometry, link, counts, ordered, H, a_r, a_t)


def _block_form(paths, geometry, link, counts) -> np.ndarray:
    n_r, n_t = geometry.n_r, geometry.n_t
    H = np.zeros(geometry.shape, dtype=complex)
    for i in range(geometry.k_r):
        for j in range(geometry.k_t):
            rays = [p for p in paths if p.rx_rau == i + 1 and p.tx_rau == j + 1]
            if not rays:
                continue
            ar = response_matrix(geometry.rx_array, [p.aoa_az for p in rays], [p.aoa_el for p in rays])
            at = response_matrix(geometry.tx_array, [p.aod_az for p in rays], [p.aod_el for p in rays])
            alpha = np.array([p.alpha for p in rays])
            sub = math.sqrt(n_t * n_r / counts[i, j]) * (ar * alpha) @ at.conj().T
            H[i * n_r : (i + 1) * n_r, j * n_t : (j + 1) * n_t] = math.sqrt(link.g[i, j]) * sub
    return H


def sample_channel(geometry: SystemGeometry, link: LinkConfig, rng: np.random.Generator,
                   check: bool = True) -> ChannelRealization:
    return assemble_channel(sample_paths(geometry, link, rng), geometry, link, check=check)


DUMP_FIELDS = ("trial", "i", "j", "l", "re_alpha", "im_alpha", "aoa_az", "aoa_el", "aod_az", "aod_el")


def write_path_dump(records: Iterable[tuple[int, Sequence[PathComponent]]], path) -> None:
    """Write (trial, paths) pairs as one CSV row per path; l counts rays within a pair."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DUMP_FIELDS)
        for trial, paths in records:
            seen: dict[tuple[int, int], int] = {}
            for p in sorted(paths, key=lambda q: q.draw):
                key = (p.rx_rau, p.tx_rau)
                seen[key] = seen.get(key, 0) + 1
                writer.writerow([
                    trial, p.rx_rau, p.tx_rau, seen[key],
                    repr(p.alpha.real), repr(p.alpha.imag),
                    repr(p.aoa_az), repr(p.aoa_el), repr(p.aod_az), repr(p.aod_el),
                ])
