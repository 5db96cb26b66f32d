"""Synthetic snapshot generation and the structured matrices the solvers use.

The data model is Y = A(f) S + E with i.i.d. circular complex Gaussian noise
of variance sigma.  Hermitian Toeplitz matrices are parameterized by their
first row ``u`` (u[0] real); lag k of ``u`` holds sum_k p_k exp(-i 2 pi k f_k)
so that T(u) = A diag(p) A^H for on-aperture sources.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayGeometry, min_separation, steering_matrix
from .errors import DomainError, InvalidScenarioError, NotRedundancyArrayError


@dataclass(frozen=True)
class SnapshotMatrix:
    """Complex M x L array observations tied to their geometry."""

    data: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != self.geometry.m:
            raise DomainError("snapshot matrix must be M x L for the geometry")
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def l(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SourceScenario:
    """Ground-truth description of a synthetic scene.

    ``amplitude_model`` is "complex-gaussian" or "constant-modulus";
    ``correlation`` is "uncorrelated", ("coherent", master_index), or
    ("covariance", K x K PSD matrix).  ``noise_variance`` is the per-entry
    complex noise variance sigma.
    """

    freqs: tuple = ()
    powers: tuple = ()
    amplitude_model: str = "complex-gaussian"
    correlation: object = "uncorrelated"
    noise_variance: float = 0.0
    snapshots: int = 1
    seed: int = 0

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.freqs)
        powers = tuple(float(p) for p in self.powers)
        if len(freqs) != len(powers):
            raise InvalidScenarioError("freqs and powers must have equal length")
        if any(p <= 0 for p in powers):
            raise InvalidScenarioError("source powers must be positive")
        if len(freqs) >= 2 and min_separation(freqs) <= 0.0:
            raise InvalidScenarioError("duplicate source frequencies")
        if self.amplitude_model not in ("complex-gaussian", "constant-modulus"):
            raise InvalidScenarioError(f"unknown amplitude model {self.amplitude_model!r}")
        if self.noise_variance < 0:
            raise InvalidScenarioError("noise variance must be nonnegative")
        if self.snapshots < 1:
            raise InvalidScenarioError("need at least one snapshot")
        mode = self.correlation if isinstance(self.correlation, str) else self.correlation[0]
        if mode not in ("uncorrelated", "coherent", "covariance"):
            raise InvalidScenarioError(f"unknown correlation mode {mode!r}")
        if mode == "coherent" and len(freqs) < 2:
            raise InvalidScenarioError("coherent mode needs at least two sources")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "powers", powers)

    @property
    def k(self) -> int:
        return len(self.freqs)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples: two real Gaussians scaled by sqrt(v/2)."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _draw_sources(scenario: SourceScenario, rng: np.random.Generator) -> np.ndarray:
    k, l = scenario.k, scenario.snapshots
    p = np.asarray(scenario.powers)
    mode = scenario.correlation if isinstance(scenario.correlation, str) else scenario.correlation[0]

    if mode == "covariance":
        cov = np.asarray(scenario.correlation[1], dtype=complex)
        if cov.shape != (k, k):
            raise InvalidScenarioError("source covariance must be K x K")
        w, v = np.linalg.eigh((cov + cov.conj().T) / 2.0)
        if w.min() < -1e-10 * max(w.max(), 1.0):
            raise InvalidScenarioError("source covariance must be PSD")
        root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
        return root @ complex_normal(rng, (k, l))

    if mode == "coherent":
        master = scenario.correlation[1] if not isinstance(scenario.correlation, str) else 0
        if not 0 <= master < k:
            raise InvalidScenarioError("coherent master index out of range")
        base = (
            complex_normal(rng, (l,), p[master])
            if scenario.amplitude_model == "complex-gaussian"
            else np.sqrt(p[master]) * np.exp(2j * np.pi * rng.random(l))
        )
        phases = np.exp(2j * np.pi * rng.random(k))
        phases[master] = 1.0
        scales = np.sqrt(p / p[master])
        return (scales * phases)[:, None] * base[None, :]

    if scenario.amplitude_model == "complex-gaussian":
        return np.sqrt(p)[:, None] * complex_normal(rng, (k, l))
    return np.sqrt(p)[:, None] * np.exp(2j * np.pi * rng.random((k, l)))


def simulate(scenario: SourceScenario, geometry: ArrayGeometry):
    """Draw Y = A(f) S + E; returns (SnapshotMatrix, truth dict).

    Deterministic for a fixed seed.  The truth dict carries the source
    matrix S, the noiseless signal Z, and the noise E.
    """
    rng = np.random.default_rng(scenario.seed)
    m, l = geometry.m, scenario.snapshots
    if geometry.kind == "planar":
        # planar scenarios interpret freqs as DOAs in degrees
        from .arrays import steering_vector

        a = (
            np.stack([steering_vector(geometry, theta_deg=t) for t in scenario.freqs], axis=1)
            if scenario.k
            else np.zeros((m, 0), dtype=complex)
        )
    else:
        a = steering_matrix(geometry, scenario.freqs)
    s = _draw_sources(scenario, rng) if scenario.k else np.zeros((0, l), dtype=complex)
    z = a @ s
    e = complex_normal(rng, (m, l), scenario.noise_variance) if scenario.noise_variance > 0 else np.zeros((m, l), dtype=complex)
    y = SnapshotMatrix(z + e, geometry)
    return y, {"S": s, "Z": z, "E": e}


def sample_covariance(y) -> np.ndarray:
    """R = Y Y^H / L, Hermitian PSD by construction."""
    data = y.data if isinstance(y, SnapshotMatrix) else np.asarray(y, dtype=complex)
    r = data @ data.conj().T / data.shape[1]
    return (r + r.conj().T) / 2.0


# ---------------------------------------------------------------------------
# Hermitian Toeplitz parameterization and its adjoint
# ---------------------------------------------------------------------------

def toeplitz(u: np.ndarray) -> np.ndarray:
    """Hermitian Toeplitz matrix with first row ``u`` (u[0] real)."""
    u = np.asarray(u, dtype=complex)
    n = u.size
    if n and abs(u[0].imag) > 1e-12 * max(1.0, abs(u[0])):
        raise DomainError("u[0] must be real for T(u) to be Hermitian")
    idx = np.subtract.outer(np.arange(n), np.arange(n))  # i - j
    t = np.where(idx <= 0, u[np.abs(idx)], np.conj(u[np.abs(idx)]))
    return t


def diag_sum(mat: np.ndarray) -> np.ndarray:
    """Adjoint of u -> T(u) under the real inner product Re tr(A^H B).

    Satisfies Re<T(u), M> = Re<u, diag_sum(M)> for every u with real u[0].
    Lag 0 returns the real part of the trace; lag k returns the k-th
    superdiagonal sum plus the conjugated subdiagonal sum.
    """
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    out = np.empty(n, dtype=complex)
    out[0] = np.trace(mat).real
    for k in range(1, n):
        out[k] = np.trace(mat, offset=k) + np.conj(np.trace(mat, offset=-k))
    return out


def toeplitz_gram_weights(n: int) -> np.ndarray:
    """Diagonal Gram of u -> T(u): ||T(e_k)||_F^2 per real coordinate."""
    w = 2.0 * (n - np.arange(n))
    w[0] = float(n)
    return w


def coarray_average(r_omega: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Estimate u by averaging sample-covariance entries of equal lag.

    Requires a redundancy array: every lag 0..N-1 must be realized by some
    sensor pair.  Exact when ``r_omega`` equals Gamma T(u) Gamma^T.
    """
    r_omega = np.asarray(r_omega, dtype=complex)
    om = np.asarray(geometry.omega)
    if r_omega.shape != (geometry.m, geometry.m):
        raise DomainError("covariance must be M x M for the geometry")
    lags = np.subtract.outer(om, om)  # lags[i, j] = omega_i - omega_j
    u = np.zeros(geometry.n, dtype=complex)
    for k in range(geometry.n):
        mask = lags.T == k  # omega_j - omega_i = k picks entries equal to u_k
        if not mask.any():
            raise NotRedundancyArrayError(f"lag {k} not realized by the array")
        u[k] = r_omega[mask].mean()
    u[0] = u[0].real
    return u


def virtual_snapshot(u: np.ndarray) -> np.ndarray:
    """Fold u into one snapshot of a virtual (2N-1)-element ULA."""
    u = np.asarray(u, dtype=complex)
    n = u.size
    v = np.concatenate([u[::-1], np.conj(u[1:])])
    assert v.size == 2 * n - 1
    return v


def hankel_lift(z: np.ndarray, m: int) -> np.ndarray:
    """Block-Hankel lift: H(z) per snapshot, blocks concatenated columnwise.

    For an N-vector the result is m x (N+1-m) with entry (i, j) = z[i+j];
    an N x L matrix yields the m x ((N+1-m) L) concatenation.
    """
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    if single:
        z = z[:, None]
    n_len = z.shape[0]
    if not 1 <= m <= n_len:
        raise DomainError(f"pencil size m={m} outside 1..{n_len}")
    n = n_len + 1 - m
    blocks = [np.lib.stride_tricks.sliding_window_view(z[:, t], n)[:m] for t in range(z.shape[1])]
    return np.concatenate(blocks, axis=1)


def hankel_adjoint(mat: np.ndarray, n_len: int, m: int, l: int) -> np.ndarray:
    """Adjoint of z -> H(z): anti-diagonal sums per snapshot block."""
    mat = np.asarray(mat, dtype=complex)
    n = n_len + 1 - m
    out = np.zeros((n_len, l), dtype=complex)
    for t in range(l):
        block = mat[:, t * n : (t + 1) * n]
        for i in range(m):
            out[i : i + n, t] += block[i, :]
    return out


def hankel_counts(n_len: int, m: int) -> np.ndarray:
    """Number of Hankel cells containing z[s]: min(s+1, m, n, N-s)."""
    n = n_len + 1 - m
    s = np.arange(n_len)
    return np.minimum.reduce([s + 1, np.full(n_len, m), np.full(n_len, n), n_len - s])


# ---------------------------------------------------------------------------
# Snapshot file formats (CSV with one row per sensor, or a JSON container)
# ---------------------------------------------------------------------------

def _fmt_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def snapshots_to_csv(y: SnapshotMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sensor"] + [f"t{t + 1}" for t in range(y.l)])
    for i in range(y.m):
        writer.writerow([i + 1] + [_fmt_complex(z) for z in y.data[i]])
    return buf.getvalue()


def snapshots_from_csv(text: str, geometry: ArrayGeometry) -> SnapshotMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "sensor":
        raise DomainError("snapshot CSV must start with a 'sensor' header")
    data = np.array([[complex(cell) for cell in row[1:]] for row in rows[1:]], dtype=complex)
    return SnapshotMatrix(data, geometry)


def snapshots_to_json(y: SnapshotMatrix) -> str:
    return json.dumps(
        {
            "m": y.m,
            "l": y.l,
            "re": y.data.real.ravel().tolist(),
            "im": y.data.imag.ravel().tolist(),
        }
    )


def snapshots_from_json(text: str, geometry: ArrayGeometry) -> SnapshotMatrix:
    obj = json.loads(text)
    m, l = int(obj["m"]), int(obj["l"])
    data = (np.asarray(obj["re"]) + 1j * np.asarray(obj["im"])).reshape(m, l)
    return SnapshotMatrix(data, geometry)
