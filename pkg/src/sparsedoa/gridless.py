"""Gridless estimators assembled from the PSD-block ADMM engine.

All methods encode the frequencies in a Hermitian Toeplitz matrix T(u) (or
a block-Hankel lift) and retrieve them afterwards.  Atomic-norm problems
use the scalings

    SMV:  min (x + u_1)/2                    (value = atomic norm)
    MMV:  min (tr X + tr T(u)) / (2 sqrt N)  (value = atomic norm)

the engine is fed the unscaled costs, so ``SdpSolution.objective`` is
x + u_1 resp. tr X + tr T.  Covariance fitting (the gridless SPICE family)
reuses the same block with fixed data Z and a Hermitian trace weight.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmConfig, BlockSdpProblem, SdpSolution, admm_solve
from .arrays import ArrayGeometry, full_aperture_steering, row_selector, steering_matrix, ula
from .errors import DomainError, UnsupportedGeometryError
from .retrieval import LineSpectrum, empty_spectrum, model_order, music, noise_split_decompose
from .signals import (
    SnapshotMatrix,
    coarray_average,
    hankel_lift,
    sample_covariance,
    toeplitz,
    virtual_snapshot,
)


@dataclass
class GridlessConfig:
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    ram_epsilon0: float | None = None  # None: scaled from the data
    ram_decay: float = 0.1
    ram_outer_iters: int = 4
    emac_m: int | None = None
    noise_variance_hint: float | None = None
    power_floor: float = 1e-6  # prune atoms below power_floor * max power

    def __post_init__(self):
        if self.ram_epsilon0 is not None and self.ram_epsilon0 <= 0:
            raise DomainError("RAM epsilon0 must be positive")
        if not 0.0 < self.ram_decay <= 1.0:
            raise DomainError("RAM epsilon decay must lie in (0, 1]")


def _as_matrix(y):
    data = y.data if isinstance(y, SnapshotMatrix) else np.asarray(y, dtype=complex)
    return data[:, None] if data.ndim == 1 else data


def _require_linear(geometry: ArrayGeometry):
    if not geometry.is_linear:
        raise UnsupportedGeometryError("gridless estimators support ULA/SLA geometries only")


def _toeplitz_psd(u: np.ndarray, n: int) -> np.ndarray:
    """T(u) lifted onto the PSD cone: ADMM iterates can be indefinite at the
    solver tolerance, so any negative floor is shifted into the noise part."""
    t = toeplitz(u)
    lam_min = float(np.linalg.eigvalsh(t).min())
    if lam_min < 0.0:
        t = t - lam_min * np.eye(n)
    return t


def _prune(spec: LineSpectrum, floor: float, method: str, sigma=None, extras=None) -> LineSpectrum:
    if spec.count == 0:
        return LineSpectrum(np.zeros(0), np.zeros(0), sigma, method, extras or {})
    keep = spec.powers > floor * spec.powers.max()
    return LineSpectrum(spec.freqs[keep], spec.powers[keep], sigma, method, extras or {})


def default_lambda(m: int, n: int, l: int, sigma: float) -> float:
    """Regularization rules for the noisy atomic-norm problems.

    Single snapshot: sqrt(M log M sigma) for full data, sqrt(M log N sigma)
    when only M of N rows are observed.  Multiple snapshots:
    sqrt(M (L + log M + sqrt(2 L log M)) sigma), with log N replacing log M
    in the subsampled case.
    """
    if sigma <= 0:
        raise DomainError("noise variance must be positive")
    logn = math.log(m) if m == n else math.log(n)
    if l == 1:
        return math.sqrt(m * logn * sigma)
    return math.sqrt(m * (l + logn + math.sqrt(2.0 * l * logn)) * sigma)


def default_eta(m: int, l: int, sigma: float) -> float:
    """Two-sigma bound on the Frobenius noise norm, sqrt(sigma (ML + 2 sqrt(ML)))."""
    ml = m * l
    return math.sqrt(max(sigma, 0.0) * (ml + 2.0 * math.sqrt(ml)))


def _anm_problem(y, geometry, mode, eta, lam, weight=None, weight_x_scale=None):
    """Assemble the Toeplitz-block problem for (weighted) atomic-norm runs."""
    data = _as_matrix(y)
    n = geometry.n
    l = data.shape[1]
    smv = l == 1
    if weight is None:
        w_t = np.eye(n) / n if smv else np.eye(n)
        w_x = 1.0
    else:
        w_t = (math.sqrt(n) / 2.0) * np.asarray(weight, dtype=complex)
        w_x = 1.0 / (2.0 * math.sqrt(n))
    if weight_x_scale is not None:
        w_x = weight_x_scale
    kwargs = dict(kind="toeplitz", n=n, data=data, omega=geometry.omega, weight_x=w_x, weight_t=w_t)
    if mode == "exact":
        kwargs.update(data_mode="equality")
    elif mode == "ball":
        if eta is None or eta < 0:
            raise DomainError("ball mode needs a nonnegative eta")
        kwargs.update(data_mode="ball", eta=float(eta))
    elif mode == "regularized":
        if lam is None or lam <= 0:
            raise DomainError("regularized mode needs a positive lambda")
        scale = lam / 2.0 if smv and weight is None else lam / (2.0 * math.sqrt(n))
        if weight is not None:
            scale = lam
        kwargs.update(data_mode="quadratic", lam_data=1.0, weight_x=w_x * scale)
        kwargs["weight_t"] = w_t * scale
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return BlockSdpProblem(**kwargs), smv


def anm(
    y,
    geometry: ArrayGeometry,
    mode: str = "exact",
    eta: float | None = None,
    lam: float | None = None,
    cfg: GridlessConfig | None = None,
):
    """Atomic-norm minimization on a ULA or SLA, single or multiple snapshots.

    Returns (SdpSolution, LineSpectrum).  Frequencies come from the
    noise-split decomposition of T(u); reported powers are per-snapshot
    source powers ||s_k||^2 / L.
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    data = _as_matrix(y)
    l = data.shape[1]
    problem, smv = _anm_problem(data, geometry, mode, eta, lam)
    sol = admm_solve(problem, cfg.admm)
    spec = noise_split_decompose(_toeplitz_psd(sol.u, geometry.n))
    amp = spec.powers if smv else math.sqrt(geometry.n) * spec.powers
    powers = amp**2 / l
    spec = _prune(
        LineSpectrum(spec.freqs, powers), cfg.power_floor, "anm",
        extras={"residuals": [sol.primal_residual, sol.dual_residual], "iterations": sol.iterations},
    )
    return sol, spec


def weighted_anm(
    y,
    geometry: ArrayGeometry,
    weight: np.ndarray,
    mode: str = "exact",
    eta: float | None = None,
    lam: float | None = None,
    cfg: GridlessConfig | None = None,
    retrieve: bool = True,
):
    """Weighted atomic norm with w(f) = (a(f)^H W a(f))^{-1/2}.

    The SDP cost is (sqrt(N)/2) tr(W T(u)) + tr(X) / (2 sqrt N); W must be
    Hermitian PSD.  W = I/N reproduces the plain (MMV-scaled) atomic norm.
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    w = np.asarray(weight, dtype=complex)
    ew = np.linalg.eigvalsh((w + w.conj().T) / 2.0)
    if ew.min() < -1e-10 * max(abs(ew.max()), 1.0):
        raise DomainError("weighting matrix must be PSD")
    problem, _ = _anm_problem(y, geometry, mode, eta, lam, weight=w)
    sol = admm_solve(problem, cfg.admm)
    if not retrieve:
        return sol, empty_spectrum("weighted-anm")
    spec = noise_split_decompose(_toeplitz_psd(sol.u, geometry.n))
    l = _as_matrix(y).shape[1]
    powers = (math.sqrt(geometry.n) * spec.powers) ** 2 / l
    spec = _prune(
        LineSpectrum(spec.freqs, powers), cfg.power_floor, "weighted-anm",
        extras={"residuals": [sol.primal_residual, sol.dual_residual], "iterations": sol.iterations},
    )
    return sol, spec


# ---------------------------------------------------------------------------
# Gridless SPICE (covariance fitting)
# ---------------------------------------------------------------------------

def gls(y, geometry: ArrayGeometry, cfg: GridlessConfig | None = None):
    """Gridless covariance fitting; hyper-parameter free.

    Picks the weighted criterion when the sample covariance is nonsingular
    (L >= M) and the unweighted one otherwise, then splits T(u) into signal
    atoms plus a noise floor sigma = lambda_min.  At most N - 1 sources are
    reported.  Returns (SdpSolution, LineSpectrum).
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    data = _as_matrix(y)
    m, l = data.shape
    if np.linalg.norm(data) == 0.0:
        sol = SdpSolution(
            u=np.zeros(geometry.n, dtype=complex), z=np.zeros((geometry.n, 0)), x_block=np.zeros((0, 0)),
            objective=0.0, primal_residual=0.0, dual_residual=0.0, iterations=0, converged=True, status="converged",
        )
        return sol, empty_spectrum("gls", sigma=0.0)
    r_t = sample_covariance(data)
    ew = np.linalg.eigvalsh(r_t)
    if l >= m and ew[0] > 1e-12 * ew[-1]:
        return gls_from_covariance(r_t, geometry, cfg)
    # small-snapshot branch with the (1/L) Y (Y^H Y)^{1/2} reduction
    gram = data.conj().T @ data
    wg, vg = np.linalg.eigh((gram + gram.conj().T) / 2.0)
    root = vg @ np.diag(np.sqrt(np.clip(wg, 0.0, None))) @ vg.conj().T
    y_tilde = data @ root / l
    w_t = (m / geometry.n) * np.eye(geometry.n)
    problem = BlockSdpProblem(
        kind="toeplitz", n=geometry.n, data=y_tilde, omega=geometry.omega,
        data_mode="equality", weight_x=1.0, weight_t=w_t,
    )
    sol = admm_solve(problem, cfg.admm)
    return sol, _gls_spectrum(sol, geometry, cfg)


def gls_from_covariance(r_hat: np.ndarray, geometry: ArrayGeometry, cfg: GridlessConfig | None = None):
    """Large-snapshot gridless SPICE directly from a sample covariance."""
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    r_hat = np.asarray(r_hat, dtype=complex)
    m = geometry.m
    if r_hat.shape != (m, m):
        raise DomainError("covariance must be M x M")
    w, v = np.linalg.eigh((r_hat + r_hat.conj().T) / 2.0)
    if w[0] <= 0:
        raise DomainError("weighted criterion needs a nonsingular sample covariance")
    root = (v * np.sqrt(w)) @ v.conj().T
    rinv = (v / w) @ v.conj().T
    gam = row_selector(geometry)
    w_t = gam.T @ rinv @ gam
    problem = BlockSdpProblem(
        kind="toeplitz", n=geometry.n, data=root, omega=geometry.omega,
        data_mode="equality", weight_x=1.0, weight_t=w_t,
    )
    sol = admm_solve(problem, cfg.admm)
    return sol, _gls_spectrum(sol, geometry, cfg)


def _gls_spectrum(sol: SdpSolution, geometry: ArrayGeometry, cfg: GridlessConfig) -> LineSpectrum:
    spec = noise_split_decompose(_toeplitz_psd(sol.u, geometry.n))
    extras = {
        "residuals": [sol.primal_residual, sol.dual_residual],
        "iterations": sol.iterations,
        "redundancy_array": _is_redundancy_array(geometry),
    }
    return _prune(spec, cfg.power_floor, "gls", sigma=spec.sigma, extras=extras)


def _is_redundancy_array(geometry: ArrayGeometry) -> bool:
    om = np.asarray(geometry.omega)
    lags = set(np.abs(np.subtract.outer(om, om)).ravel().tolist())
    return all(k in lags for k in range(geometry.n))


# ---------------------------------------------------------------------------
# Reweighted atomic-norm minimization
# ---------------------------------------------------------------------------

def ram(
    y,
    geometry: ArrayGeometry,
    eta: float,
    cfg: GridlessConfig | None = None,
):
    """Iteratively reweighted atomic norm with a log-det surrogate.

    Starts from the plain atomic norm (u = 0 gives a flat weighting), then
    reweights with W_j = (T(u_j) + eps I)^{-1} / N while shrinking eps by
    ``ram_decay`` per outer iteration.  Returns (LineSpectrum, info); the
    info dict carries the surrogate objective log det(T(u)+eps I) + tr(X)
    evaluated per outer iteration together with the eps schedule.
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    data = _as_matrix(y)
    n, l = geometry.n, data.shape[1]
    eps = cfg.ram_epsilon0
    if eps is None:
        eps = float(np.linalg.norm(data) ** 2 / (n * l))
    u = np.zeros(n, dtype=complex)
    objectives = []
    epsilons = []
    sol = None
    for _ in range(cfg.ram_outer_iters):
        w_j = np.linalg.inv(toeplitz(u) + eps * np.eye(n)) / n
        w_j = (w_j + w_j.conj().T) / 2.0
        sol, _ = weighted_anm(data, geometry, w_j, mode="ball", eta=eta, cfg=cfg, retrieve=False)
        u = sol.u
        sign, logdet = np.linalg.slogdet(toeplitz(u) + eps * np.eye(n))
        objectives.append(float(logdet.real + np.trace(sol.x_block).real))
        epsilons.append(eps)
        eps *= cfg.ram_decay
    spec = noise_split_decompose(_toeplitz_psd(u, n))
    spec = _prune(spec, cfg.power_floor, "ram")
    # refit powers against the observed rows for reporting
    if spec.count:
        a_om = steering_matrix(geometry, spec.freqs)
        coef = np.linalg.lstsq(a_om, data, rcond=None)[0]
        powers = np.sum(np.abs(coef) ** 2, axis=1) / l
        spec = LineSpectrum(spec.freqs, np.maximum(powers, 1e-300), method="ram")
    info = {
        "objective_trace": np.asarray(objectives),
        "epsilons": np.asarray(epsilons),
        "residuals": [sol.primal_residual, sol.dual_residual] if sol else [0.0, 0.0],
        "iterations": sol.iterations if sol else 0,
    }
    return spec, info


# ---------------------------------------------------------------------------
# Hankel-lift nuclear norm (EMaC)
# ---------------------------------------------------------------------------

def matrix_pencil(h: np.ndarray, k: int) -> np.ndarray:
    """Frequencies from the shift invariance of a Hankel matrix's column space."""
    if k == 0:
        return np.zeros(0)
    u_mat, _, _ = np.linalg.svd(h, full_matrices=False)
    sig = u_mat[:, :k]
    psi = np.linalg.lstsq(sig[:-1, :], sig[1:, :], rcond=None)[0]
    z = np.linalg.eigvals(psi)
    from .arrays import wrap_frequency

    return np.sort(np.atleast_1d(wrap_frequency(np.angle(z) / (2.0 * np.pi))))


def emac(
    y,
    geometry: ArrayGeometry,
    m: int | None = None,
    mode: str = "exact",
    eta: float = 0.0,
    k: int | None = None,
    cfg: GridlessConfig | None = None,
):
    """Enhanced matrix completion via the Hankel nuclear norm.

    Completes the virtual-aperture signal from the observed rows, then
    retrieves frequencies by matrix pencil on the completed Hankel lift.
    ``m`` defaults to ceil(N/2); pass ``k`` to fix the model order,
    otherwise the eigen-gap rule on the Hankel singular values is used.
    Returns (LineSpectrum, SdpSolution).
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    data = _as_matrix(y)
    n, l = geometry.n, data.shape[1]
    if m is None:
        m = cfg.emac_m if cfg.emac_m is not None else math.ceil(n / 2)
    if not 1 <= m <= n:
        raise DomainError("infeasible pencil split m")
    problem = BlockSdpProblem(
        kind="hankel", n=n, data=data, omega=geometry.omega,
        data_mode={"exact": "equality", "ball": "ball", "regularized": "quadratic"}[mode],
        eta=eta, hankel_m=m,
    )
    sol = admm_solve(problem, cfg.admm)
    h = hankel_lift(sol.z, m)
    sv = np.linalg.svd(h, compute_uv=False)
    if k is None:
        pad = np.concatenate([sv, [max(sv[0], 1.0) * 1e-18]])
        k = model_order(pad**2, ratio_threshold=10.0).k if sv.size >= 2 else 1
        k = min(k, min(h.shape) - 1)
    freqs = matrix_pencil(h, k)
    if freqs.size == 0:
        return empty_spectrum("emac"), sol
    a_full = full_aperture_steering(n, freqs)
    coef = np.linalg.lstsq(a_full, sol.z, rcond=None)[0]
    powers = np.sum(np.abs(coef) ** 2, axis=1) / l
    spec = _prune(
        LineSpectrum(freqs, np.maximum(powers, 1e-300)), cfg.power_floor, "emac",
        extras={"residuals": [sol.primal_residual, sol.dual_residual], "iterations": sol.iterations},
    )
    return spec, sol


# ---------------------------------------------------------------------------
# Coarray covariance pipelines
# ---------------------------------------------------------------------------

def anm_smv_cov(
    y,
    geometry: ArrayGeometry,
    sigma: float,
    eta: float | None = None,
    cfg: GridlessConfig | None = None,
) -> LineSpectrum:
    """Covariance-domain SMV atomic norm on the (2N-1)-element virtual array.

    Averages the sample covariance into a lag estimate, unfolds it into a
    virtual snapshot, and runs ball-mode SMV ANM.  The noise variance must
    be supplied; the default radius eta = 2 sigma sqrt((2N-1)/L) is a
    heuristic stand-in for the co-array error bound.
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    data = _as_matrix(y)
    l = data.shape[1]
    r_t = sample_covariance(data)
    u_est = coarray_average(r_t - sigma * np.eye(geometry.m), geometry)
    v = virtual_snapshot(u_est)
    if eta is None:
        eta = 2.0 * sigma * math.sqrt((2 * geometry.n - 1) / l)
    virtual = ula(2 * geometry.n - 1)
    sol, _ = anm(v, virtual, mode="ball", eta=eta, cfg=cfg)
    spec = noise_split_decompose(_toeplitz_psd(sol.u, virtual.n))
    spec = _prune(spec, cfg.power_floor, "anm-smv-cov",
                  extras={"residuals": [sol.primal_residual, sol.dual_residual]})
    return spec


def nnm_music(
    y,
    geometry: ArrayGeometry,
    k: int,
    eta: float | None = None,
    sigma: float | None = None,
    cfg: GridlessConfig | None = None,
) -> LineSpectrum:
    """Nuclear-norm denoising of the averaged Toeplitz estimate, then MUSIC.

    ``eta`` defaults to sqrt(N) sigma when the noise variance is given.
    """
    cfg = cfg or GridlessConfig()
    _require_linear(geometry)
    data = _as_matrix(y)
    r_t = sample_covariance(data)
    u_est = coarray_average(r_t, geometry)
    g = toeplitz(u_est)
    if eta is None:
        if sigma is None:
            raise DomainError("need eta or a noise-variance hint")
        eta = math.sqrt(geometry.n) * sigma
    denoised = nuclear_ball_denoise(g, eta)
    psd = denoised - min(float(np.linalg.eigvalsh(denoised).min()), 0.0) * np.eye(geometry.n)
    spec = music(psd, k)
    return LineSpectrum(spec.freqs, spec.powers, sigma=spec.sigma, method="nnm-music")


def nuclear_ball_denoise(g: np.ndarray, eta: float) -> np.ndarray:
    """argmin ||R||_* subject to ||R - G||_F <= eta, for Hermitian G.

    Solved exactly by soft-thresholding the eigenvalues with the smallest
    threshold that lands inside the ball.
    """
    g = np.asarray(g, dtype=complex)
    herm = (g + g.conj().T) / 2.0
    if eta <= 0:
        return herm
    w, v = np.linalg.eigh(herm)
    mag = np.abs(w)
    if np.sqrt(np.sum(mag**2)) <= eta:
        return np.zeros_like(herm)

    def spent(t):
        return float(np.sum(np.minimum(mag, t) ** 2))

    lo, hi = 0.0, float(mag.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spent(mid) > eta**2:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    shrunk = np.sign(w) * np.maximum(mag - t, 0.0)
    out = (v * shrunk) @ v.conj().T
    return (out + out.conj().T) / 2.0


# ---------------------------------------------------------------------------
# Snapshot reduction and the tiny-instance atomic l0 oracle
# ---------------------------------------------------------------------------

def reduce_snapshots_gridless(y) -> np.ndarray:
    """Replace Y (M x L) by the M x M root (Y Y^H)^{1/2}; identity when L <= M.

    Any downstream atomic-norm or weighted run returns the same u as on the
    original data.
    """
    data = _as_matrix(y)
    m, l = data.shape
    if l <= m:
        return data
    gram = data @ data.conj().T
    w, v = np.linalg.eigh((gram + gram.conj().T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def atomic_l0_bruteforce(z: np.ndarray, grid_size: int = 24, tol: float = 1e-6, k_max: int | None = None) -> int:
    """Smallest number of grid atoms reproducing z, by exhaustive search.

    A dense-grid lower-bound oracle for tiny instances (intended N <= 6);
    cost grows combinatorially in both the grid and the atom count.
    """
    z = np.asarray(z, dtype=complex).ravel()
    n = z.size
    if np.linalg.norm(z) == 0.0:
        return 0
    grid = -0.5 + np.arange(1, grid_size + 1) / grid_size
    a = full_aperture_steering(n, grid)
    k_max = n if k_max is None else min(k_max, n)
    for k in range(1, k_max + 1):
        for combo in itertools.combinations(range(grid_size), k):
            sub = a[:, combo]
            coef, *_ = np.linalg.lstsq(sub, z, rcond=None)
            if np.linalg.norm(sub @ coef - z) <= tol * np.linalg.norm(z):
                return k
    return k_max + 1
