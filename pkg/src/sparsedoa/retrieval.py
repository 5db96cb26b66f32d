"""Frequency and power retrieval from structured matrices.

The workhorse is the Vandermonde decomposition of a rank-deficient PSD
Toeplitz matrix via a matrix pencil, plus its noise-split variant that peels
off sigma = lambda_min first.  MUSIC/ESPRIT baselines, an eigenvalue-gap
model-order rule, and assignment-based scoring round out the module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment, nnls

from .arrays import full_aperture_steering, min_separation, wrap_distance, wrap_frequency
from .errors import DegenerateInputError, DomainError


@dataclass(frozen=True)
class LineSpectrum:
    """Retrieved (frequency, power) pairs with an optional noise floor."""

    freqs: np.ndarray
    powers: np.ndarray
    sigma: float | None = None
    method: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.atleast_1d(np.asarray(self.freqs, dtype=float)))
        object.__setattr__(self, "powers", np.atleast_1d(np.asarray(self.powers, dtype=float)))
        if self.freqs.shape != self.powers.shape:
            raise DomainError("freqs and powers must have matching shapes")

    @property
    def count(self) -> int:
        return int(self.freqs.size)

    def sorted(self) -> "LineSpectrum":
        order = np.argsort(self.freqs)
        return LineSpectrum(self.freqs[order], self.powers[order], self.sigma, self.method, self.extras)

    def to_json(self) -> str:
        payload = {
            "freqs": self.freqs.tolist(),
            "powers": self.powers.tolist(),
            "sigma": self.sigma,
            "method": self.method,
        }
        payload.update({k: v for k, v in self.extras.items()})
        return json.dumps(payload)


def empty_spectrum(method: str = "", sigma: float | None = None) -> LineSpectrum:
    return LineSpectrum(np.zeros(0), np.zeros(0), sigma, method)


def _psd_check(t: np.ndarray, tol_scale: float = 1e-8) -> np.ndarray:
    t = np.asarray(t, dtype=complex)
    herm = (t + t.conj().T) / 2.0
    if np.linalg.norm(t - herm) > 1e-10 * max(1.0, np.linalg.norm(t)):
        raise DomainError("matrix is not Hermitian to tolerance")
    w = np.linalg.eigvalsh(herm)
    if w.min() < -tol_scale * max(w.max(), 0.0) - 1e-12:
        raise DomainError("matrix is not PSD to tolerance")
    return herm


def _nnls_powers(t: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Refit powers by nonnegative least squares on the full matrix fit."""
    n = t.shape[0]
    if freqs.size == 0:
        return np.zeros(0)
    a = full_aperture_steering(n, freqs)
    design = np.empty((2 * n * n, freqs.size))
    for k in range(freqs.size):
        outer = np.outer(a[:, k], a[:, k].conj())
        design[:, k] = np.concatenate([outer.real.ravel(), outer.imag.ravel()])
    target = np.concatenate([t.real.ravel(), t.imag.ravel()])
    p, _ = nnls(design, target)
    return p


def vandermonde_decompose(t: np.ndarray, rank_tol: float = 1e-8) -> LineSpectrum:
    """r-atomic decomposition T = sum_k p_k a(f_k) a(f_k)^H of a PSD Toeplitz T.

    Frequencies come from the generalized eigenvalues of the shifted-factor
    pencil; pencil eigenvalues are projected onto the unit circle and powers
    are refit by nonnegative least squares for robustness.  A full-rank T is
    handled by peeling off an atom at f = 0 first.
    """
    t = _psd_check(t)
    n = t.shape[0]
    w, v = np.linalg.eigh(t)
    w = np.clip(w, 0.0, None)
    rank = int(np.sum(w > rank_tol * max(w.max(), 0.0))) if w.size else 0
    if rank == 0:
        return empty_spectrum(method="vandermonde")
    if rank == n:
        # full-rank branch: remove a deterministic atom at f = 0, then recurse
        a0 = np.ones(n, dtype=complex)
        p0 = 1.0 / float(np.real(a0.conj() @ np.linalg.solve(t, a0)))
        rest = vandermonde_decompose(t - p0 * np.outer(a0, a0.conj()), rank_tol)
        freqs = np.concatenate([rest.freqs, [0.0]])
        powers = _nnls_powers(t, freqs)
        return LineSpectrum(freqs, powers, method="vandermonde").sorted()

    idx = np.argsort(w)[::-1][:rank]
    factor = v[:, idx] * np.sqrt(w[idx])  # T = factor factor^H
    v_top = factor[:-1, :]  # rows 1..N-1
    v_bot = factor[1:, :]  # rows 2..N
    lhs = v_top.conj().T @ v_bot  # V_{-N}^H V_{-1}
    rhs = v_top.conj().T @ v_top  # V_{-N}^H V_{-N}
    z = np.linalg.eigvals(np.linalg.solve(rhs, lhs))
    z = z / np.abs(z)  # project onto the unit circle
    freqs = wrap_frequency(np.angle(z) / (2.0 * np.pi))
    freqs = np.atleast_1d(freqs)
    powers = _nnls_powers(t, freqs)
    keep = powers > 0.0
    return LineSpectrum(freqs[keep], powers[keep], method="vandermonde").sorted()


def noise_split_decompose(t: np.ndarray, rank_tol: float = 1e-8) -> LineSpectrum:
    """Unique split T = sum_k p_k a(f_k) a(f_k)^H + sigma I with sigma = lambda_min."""
    t = _psd_check(t)
    n = t.shape[0]
    w = np.linalg.eigvalsh(t)
    sigma = float(max(w[0], 0.0))
    signal = t - sigma * np.eye(n)
    spec = vandermonde_decompose(signal, rank_tol)
    return LineSpectrum(spec.freqs, spec.powers, sigma=sigma, method="noise-split")


def music(
    r: np.ndarray,
    k: int,
    search_grid_size: int = 2048,
    refine: bool = True,
) -> LineSpectrum:
    """Noise-subspace pseudospectrum peak search on the full aperture.

    ``r`` is an N x N covariance-like Hermitian PSD matrix.  Returns the k
    largest pseudospectrum peaks; golden-section refinement polishes each
    peak inside its grid cell.
    """
    r = np.asarray(r, dtype=complex)
    n = r.shape[0]
    if k >= n:
        raise DomainError("MUSIC needs K < N")
    if k == 0:
        return empty_spectrum(method="music")
    w, v = np.linalg.eigh((r + r.conj().T) / 2.0)
    noise = v[:, : n - k]  # eigenvectors of the N-K smallest eigenvalues

    grid = -0.5 + np.arange(1, search_grid_size + 1) / search_grid_size
    a = full_aperture_steering(n, grid)
    denom = np.sum(np.abs(noise.conj().T @ a) ** 2, axis=0)
    pseudo = 1.0 / np.maximum(denom, 1e-300)

    # local maxima on the circular grid
    left = np.roll(pseudo, 1)
    right = np.roll(pseudo, -1)
    peaks = np.where((pseudo >= left) & (pseudo >= right))[0]
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(pseudo))])
    peaks = peaks[np.argsort(pseudo[peaks])[::-1][:k]]

    def cost(f):
        af = np.exp(2j * np.pi * np.arange(n) * f)
        return float(np.sum(np.abs(noise.conj().T @ af) ** 2))

    freqs = []
    cell = 1.0 / search_grid_size
    for p in peaks:
        f0 = grid[p]
        if refine:
            lo, hi = f0 - cell, f0 + cell
            phi = (math.sqrt(5.0) - 1.0) / 2.0
            x1 = hi - phi * (hi - lo)
            x2 = lo + phi * (hi - lo)
            f1, f2 = cost(x1), cost(x2)
            for _ in range(60):
                if f1 < f2:
                    hi, x2, f2 = x2, x1, f1
                    x1 = hi - phi * (hi - lo)
                    f1 = cost(x1)
                else:
                    lo, x1, f1 = x1, x2, f2
                    x2 = lo + phi * (hi - lo)
                    f2 = cost(x2)
            f0 = (lo + hi) / 2.0
        freqs.append(wrap_frequency(f0))
    freqs = np.array(sorted(freqs))

    sigma = float(np.clip(np.mean(w[: n - k]), 0.0, None))
    powers = _nnls_powers(r - sigma * np.eye(n), freqs)
    keep = powers > 0
    if not np.all(keep):  # keep requested peaks even when the LS power hits zero
        powers = np.maximum(powers, 1e-300)
    return LineSpectrum(freqs, powers, sigma=sigma, method="music")


def esprit(r: np.ndarray, k: int) -> LineSpectrum:
    """Rotational-invariance frequency estimates from the signal subspace."""
    r = np.asarray(r, dtype=complex)
    n = r.shape[0]
    if k >= n:
        raise DomainError("ESPRIT needs K < N")
    if k == 0:
        return empty_spectrum(method="esprit")
    w, v = np.linalg.eigh((r + r.conj().T) / 2.0)
    sig = v[:, np.argsort(w)[::-1][:k]]
    psi = np.linalg.lstsq(sig[:-1, :], sig[1:, :], rcond=None)[0]
    z = np.linalg.eigvals(psi)
    freqs = np.sort(np.atleast_1d(wrap_frequency(np.angle(z) / (2.0 * np.pi))))
    return LineSpectrum(freqs, np.ones(k), method="esprit")


class ModelOrder(NamedTuple):
    k: int
    confident: bool


def model_order(eigenvalues, ratio_threshold: float = 10.0) -> ModelOrder:
    """Largest eigen-gap rule: K = argmax lambda_k / lambda_{k+1}.

    The candidate range is 1..N-2; eigenvalues below 1e-14 * lambda_1 are
    floored before forming ratios.  When no ratio clears the confidence
    threshold the rule reports K = N-1 with ``confident=False``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size < 3:
        raise DegenerateInputError("need at least three eigenvalues")
    if np.any(np.diff(lam) > 1e-12 * max(lam[0], 1.0)) or lam[-1] < -1e-12 * max(lam[0], 1.0):
        raise DomainError("eigenvalues must be nonincreasing and nonnegative")
    floor = 1e-14 * max(lam[0], 0.0)
    lam = np.maximum(lam, floor)
    n = lam.size
    ratios = lam[: n - 2] / lam[1 : n - 1]
    best = int(np.argmax(ratios))
    if ratios[best] < ratio_threshold:
        return ModelOrder(n - 1, False)
    return ModelOrder(best + 1, True)


@dataclass(frozen=True)
class MatchReport:
    """Optimal wrap-around assignment between a true and estimated spectrum."""

    pairs: tuple  # ((f_true, f_est), ...)
    errors: np.ndarray
    unmatched_truth: int
    unmatched_estimate: int
    rmse: float
    success: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "pairs": [list(p) for p in self.pairs],
                "errors": self.errors.tolist(),
                "unmatched_truth": self.unmatched_truth,
                "unmatched_estimate": self.unmatched_estimate,
                "rmse": self.rmse,
                "success": self.success,
            }
        )


def match_and_score(truth: LineSpectrum, est: LineSpectrum, success_threshold: float) -> MatchReport:
    """Assign estimates to true sources minimizing summed wrap-around distance.

    Success requires every true source matched with error below the
    threshold; surplus estimates only show up in ``unmatched_estimate``.
    """
    kt, ke = truth.count, est.count
    if kt == 0:
        return MatchReport((), np.zeros(0), 0, ke, 0.0, True)
    if ke == 0:
        return MatchReport((), np.zeros(0), kt, 0, math.inf, False)
    d = wrap_distance(truth.freqs[:, None], est.freqs[None, :])
    rows, cols = linear_sum_assignment(d)
    pairs = tuple((float(truth.freqs[i]), float(est.freqs[j])) for i, j in zip(rows, cols))
    errors = d[rows, cols]
    rmse = float(np.sqrt(np.mean(errors**2)))
    success = (kt <= ke) and bool(np.all(errors < success_threshold))
    return MatchReport(pairs, errors, kt - len(rows), ke - len(cols), rmse, success)
