"""Sensor-array geometry, steering vectors, and dictionary diagnostics.

Linear arrays are described by a virtual aperture of ``n`` unit-spaced
(half-wavelength) positions and a 1-based index set ``omega`` selecting the
physical sensors; a ULA is the special case ``omega = (1, ..., n)``.  Planar
arrays carry polar sensor positions and support steering/simulation only.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, SizeLimitError, UnsupportedGeometryError


@dataclass(frozen=True)
class ArrayGeometry:
    """Immutable sensor layout.

    Parameters
    ----------
    kind : {"ula", "sla", "planar"}
    n : int
        Virtual aperture size N (linear arrays only).
    omega : tuple of int
        Strictly increasing 1-based sensor indices, subset of {1..n}.
    radius, azimuth_deg : tuple of float
        Polar sensor positions for planar arrays (half-wavelength units,
        degrees).
    """

    kind: str
    n: int = 0
    omega: tuple = ()
    radius: tuple = ()
    azimuth_deg: tuple = ()

    def __post_init__(self):
        if self.kind in ("ula", "sla"):
            if self.n < 1:
                raise DomainError("virtual aperture must satisfy N >= 1")
            om = tuple(int(v) for v in self.omega)
            if len(om) < 1:
                raise DomainError("at least one sensor required")
            if any(b <= a for a, b in zip(om, om[1:])):
                raise DomainError("omega must be strictly increasing")
            if om[0] < 1 or om[-1] > self.n:
                raise DomainError("omega indices must lie in 1..N")
            object.__setattr__(self, "omega", om)
        elif self.kind == "planar":
            if len(self.radius) < 1 or len(self.radius) != len(self.azimuth_deg):
                raise DomainError("planar arrays need matching radius/azimuth lists")
            object.__setattr__(self, "radius", tuple(float(r) for r in self.radius))
            object.__setattr__(self, "azimuth_deg", tuple(float(t) for t in self.azimuth_deg))
        else:
            raise DomainError(f"unknown array kind {self.kind!r}")

    @property
    def m(self) -> int:
        """Number of physical sensors."""
        if self.kind == "planar":
            return len(self.radius)
        return len(self.omega)

    @property
    def is_linear(self) -> bool:
        return self.kind in ("ula", "sla")

    @property
    def positions(self) -> np.ndarray:
        """Sensor positions in half-wavelength units along the line (linear only)."""
        if not self.is_linear:
            raise UnsupportedGeometryError("positions defined for linear arrays only")
        return np.asarray(self.omega, dtype=float) - 1.0

    def to_json(self) -> str:
        if self.kind == "ula":
            return json.dumps({"kind": "ula", "m": self.m})
        if self.kind == "sla":
            return json.dumps({"kind": "sla", "n": self.n, "omega": list(self.omega)})
        return json.dumps(
            {"kind": "planar", "radius": list(self.radius), "azimuth_deg": list(self.azimuth_deg)}
        )

    @staticmethod
    def from_json(text: str) -> "ArrayGeometry":
        obj = json.loads(text)
        kind = obj.get("kind")
        if kind == "ula":
            return ula(int(obj["m"]))
        if kind == "sla":
            return sla(int(obj["n"]), obj["omega"])
        if kind == "planar":
            return planar(obj["radius"], obj["azimuth_deg"])
        raise DomainError(f"unknown geometry kind {kind!r}")


def ula(m: int) -> ArrayGeometry:
    """Uniform linear array with ``m`` unit-spaced sensors."""
    return ArrayGeometry(kind="ula", n=m, omega=tuple(range(1, m + 1)))


def sla(n: int, omega) -> ArrayGeometry:
    """Sparse linear array: sensors ``omega`` (1-based) of an N-element virtual ULA."""
    geom = ArrayGeometry(kind="sla", n=n, omega=tuple(omega))
    return geom


def planar(radius, azimuth_deg) -> ArrayGeometry:
    """General 2-D array with sensors at polar positions (r_m, theta_m degrees)."""
    return ArrayGeometry(kind="planar", radius=tuple(radius), azimuth_deg=tuple(azimuth_deg))


def wrap_frequency(f):
    """Wrap frequencies to the canonical interval (-1/2, 1/2]."""
    f = np.asarray(f, dtype=float)
    w = np.mod(f, 1.0)
    w = np.where(w > 0.5, w - 1.0, w)
    return w if w.ndim else float(w)


def wrap_distance(f1, f2):
    """Wrap-around distance |f1 - f2| on the unit circle of frequencies."""
    d = np.abs(np.mod(np.asarray(f1, dtype=float) - np.asarray(f2, dtype=float), 1.0))
    d = np.minimum(d, 1.0 - d)
    return d if d.ndim else float(d)


def min_separation(freqs) -> float:
    """Smallest pairwise wrap-around distance; inf for fewer than two entries."""
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    if f.size < 2:
        return math.inf
    d = wrap_distance(f[:, None], f[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def doa_to_freq(theta_deg: float) -> float:
    """Map a linear-array DOA in [0, 180) degrees to f = cos(theta)/2."""
    if not 0.0 <= theta_deg < 180.0:
        raise DomainError(f"DOA {theta_deg} outside [0, 180) degrees")
    return math.cos(math.radians(theta_deg)) / 2.0


def freq_to_doa(f: float) -> float:
    """Inverse of :func:`doa_to_freq`; frequency must lie in (-1/2, 1/2]."""
    if not -0.5 < f <= 0.5:
        raise DomainError(f"frequency {f} outside (-1/2, 1/2]")
    return math.degrees(math.acos(2.0 * f))


def steering_vector(geometry: ArrayGeometry, f=None, theta_deg=None) -> np.ndarray:
    """Array response to a unit source.

    For linear arrays entry m is exp(i 2 pi (omega_m - 1) f); a DOA in
    degrees is accepted instead of ``f``.  Planar arrays accept a DOA only,
    with entry m equal to exp(i pi r_m cos(theta - azimuth_m)).
    """
    if geometry.kind == "planar":
        if theta_deg is None:
            raise DomainError("planar arrays accept DOA input only")
        if not 0.0 <= theta_deg < 360.0:
            raise DomainError(f"planar DOA {theta_deg} outside [0, 360) degrees")
        r = np.asarray(geometry.radius)
        az = np.radians(np.asarray(geometry.azimuth_deg))
        return np.exp(1j * np.pi * r * np.cos(math.radians(theta_deg) - az))
    if f is None:
        if theta_deg is None:
            raise DomainError("either f or theta_deg is required")
        f = doa_to_freq(theta_deg)
    if not -0.5 < f <= 0.5:
        raise DomainError(f"frequency {f} outside (-1/2, 1/2]")
    return np.exp(2j * np.pi * geometry.positions * f)


def steering_matrix(geometry: ArrayGeometry, freqs) -> np.ndarray:
    """Stack steering vectors for several frequencies into an M x K matrix."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if freqs.size == 0:
        return np.zeros((geometry.m, 0), dtype=complex)
    return np.exp(2j * np.pi * np.outer(geometry.positions, freqs))


def full_aperture_steering(n: int, freqs) -> np.ndarray:
    """Steering matrix of the N-element virtual ULA (used in retrieval)."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if freqs.size == 0:
        return np.zeros((n, 0), dtype=complex)
    return np.exp(2j * np.pi * np.outer(np.arange(n), freqs))


@dataclass(frozen=True)
class SteeringDictionary:
    """On-grid steering dictionary: columns a(grid[n]) of squared norm M."""

    geometry: ArrayGeometry
    grid: np.ndarray
    matrix: np.ndarray

    @staticmethod
    def uniform(geometry: ArrayGeometry, n_grid: int | None = None) -> "SteeringDictionary":
        """Uniform frequency grid over (-1/2, 1/2]; defaults to 8M points."""
        if not geometry.is_linear:
            raise UnsupportedGeometryError("uniform frequency grids apply to linear arrays")
        if n_grid is None:
            n_grid = 8 * geometry.m
        grid = -0.5 + (np.arange(1, n_grid + 1)) / n_grid
        return SteeringDictionary(geometry, grid, steering_matrix(geometry, grid))

    @staticmethod
    def from_doa_grid(geometry: ArrayGeometry, thetas_deg) -> "SteeringDictionary":
        """Dictionary on a DOA grid in degrees (works for planar arrays too)."""
        thetas_deg = np.atleast_1d(np.asarray(thetas_deg, dtype=float))
        if geometry.kind == "planar":
            cols = [steering_vector(geometry, theta_deg=t) for t in thetas_deg]
            grid = thetas_deg  # planar dictionaries keep the DOA grid itself
            return SteeringDictionary(geometry, grid, np.stack(cols, axis=1))
        grid = np.array([doa_to_freq(t) for t in thetas_deg])
        return SteeringDictionary(geometry, grid, steering_matrix(geometry, grid))

    @property
    def n_atoms(self) -> int:
        return self.matrix.shape[1]


def mutual_coherence(a: np.ndarray) -> float:
    """Largest absolute correlation between two distinct columns, in [0, 1]."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[1] < 2:
        raise DegenerateInputError("need a matrix with at least two columns")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0.0):
        raise DegenerateInputError("zero column makes coherence undefined")
    g = np.abs(a.conj().T @ a) / np.outer(norms, norms)
    np.fill_diagonal(g, 0.0)
    return float(min(g.max(), 1.0))


def spark_bruteforce(a: np.ndarray, rank_tol: float | None = None) -> int:
    """Smallest cardinality of a linearly dependent column subset.

    Exhaustive over all subsets, so the column count is capped at 20.
    Returns M + 1 when every subset of size <= M is independent (always an
    upper bound on the spark).
    """
    a = np.asarray(a)
    m, n = a.shape
    if n > 20:
        raise SizeLimitError("spark_bruteforce is exhaustive; at most 20 columns")
    smax = np.linalg.norm(a, 2) if a.size else 0.0
    tol = (1e-9 * smax) if rank_tol is None else rank_tol * smax
    for k in range(2, min(m, n) + 1):
        for cols in itertools.combinations(range(n), k):
            s = np.linalg.svd(a[:, cols], compute_uv=False)
            if s[-1] <= tol:
                return k
    return m + 1


def identifiability_check(spark: int, rank_y: int, k: int) -> bool:
    """Sufficient-and-necessary unique-identifiability test K < (spark-1+rank)/2."""
    if spark < 2 or rank_y < 1 or k < 0:
        raise DomainError("need spark >= 2, rank_y >= 1, k >= 0")
    return k < (spark - 1 + rank_y) / 2.0


def row_selector(geometry: ArrayGeometry) -> np.ndarray:
    """M x N 0/1 matrix with row j selecting virtual position omega_j."""
    if not geometry.is_linear:
        raise UnsupportedGeometryError("row selectors apply to linear arrays")
    gam = np.zeros((geometry.m, geometry.n))
    for j, idx in enumerate(geometry.omega):
        gam[j, idx - 1] = 1.0
    return gam
