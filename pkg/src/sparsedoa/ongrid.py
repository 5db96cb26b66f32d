"""On-grid joint-sparse solvers over a fixed steering dictionary.

Convex l2,1 programs are solved by accelerated proximal gradient with
restart and certified through their group soft-threshold optimality
conditions.  The reweighted family (FOCUSS, SLIM), the covariance-fitting
SPICE iterations, and an EM ascent of the Gaussian likelihood all descend
their objectives monotonically; each returns its objective trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrays import SteeringDictionary
from .errors import DomainError, FeasibilityError
from .signals import SnapshotMatrix, sample_covariance


@dataclass
class GridSolverConfig:
    q: float = 1.0
    max_iters: int = 20000
    tol: float = 1e-8
    epsilon_floor: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise DomainError("q must lie in (0, 1]")


@dataclass
class RowSparseSolution:
    """Row-sparse coefficient matrix with derived spectrum and diagnostics."""

    x: np.ndarray
    row_powers: np.ndarray
    support: np.ndarray
    objective_trace: np.ndarray
    status: str = "converged"
    kkt_resid: float = float("nan")
    sigma: float | None = None
    method: str = ""

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "row_powers": self.row_powers.tolist(),
            "support": self.support.tolist(),
            "sigma": self.sigma,
            "objective_trace": self.objective_trace.tolist(),
        }


def _as_matrix(y) -> np.ndarray:
    data = y.data if isinstance(y, SnapshotMatrix) else np.asarray(y, dtype=complex)
    if data.ndim == 1:
        data = data[:, None]
    return data


def _solution(x, lam_support, trace, status, kkt, method, sigma=None) -> RowSparseSolution:
    l = x.shape[1]
    powers = np.sum(np.abs(x) ** 2, axis=1) / l
    pmax = powers.max() if powers.size else 0.0
    support = np.where(powers > lam_support * pmax)[0] if pmax > 0 else np.zeros(0, dtype=int)
    return RowSparseSolution(
        x=x,
        row_powers=powers,
        support=support,
        objective_trace=np.asarray(trace, dtype=float),
        status=status,
        kkt_resid=kkt,
        sigma=sigma,
        method=method,
    )


# ---------------------------------------------------------------------------
# Group-lasso core (accelerated proximal gradient with restart)
# ---------------------------------------------------------------------------

def _group_norms(x: np.ndarray, groups) -> np.ndarray:
    return np.array([np.linalg.norm(x[g]) for g in groups])


def _group_prox(x: np.ndarray, groups, thresh: float) -> np.ndarray:
    out = x.copy()
    for g in groups:
        nrm = np.linalg.norm(out[g])
        out[g] *= 0.0 if nrm <= thresh else 1.0 - thresh / nrm
    return out


def _group_kkt(x, grad, lam, groups) -> float:
    """Max violation of the group soft-threshold stationarity conditions."""
    worst = 0.0
    for g in groups:
        xg = x[g]
        nrm = np.linalg.norm(xg)
        if nrm > 0:
            worst = max(worst, float(np.linalg.norm(grad[g] - lam * xg / nrm)))
        else:
            worst = max(worst, max(0.0, float(np.linalg.norm(grad[g])) - lam))
    return worst


def group_lasso(
    y,
    a: np.ndarray,
    lam: float,
    groups=None,
    cfg: GridSolverConfig | None = None,
    x0: np.ndarray | None = None,
):
    """Solve min lam * sum_g ||X_g||_F + 0.5 ||A X - Y||_F^2.

    Returns (X, objective_trace, status, kkt_resid).  ``groups`` lists row
    index arrays; None means one group per row (the l2,1 norm).
    """
    cfg = cfg or GridSolverConfig()
    if lam <= 0:
        raise DomainError("lam must be positive")
    y = _as_matrix(y)
    n = a.shape[1]
    groups = [np.array([i]) for i in range(n)] if groups is None else [np.asarray(g) for g in groups]
    step = 1.0 / max(np.linalg.norm(a, 2) ** 2, 1e-300)

    x = np.zeros((n, y.shape[1]), dtype=complex) if x0 is None else x0.copy()
    z = x.copy()
    t_mom = 1.0

    def objective(v):
        return lam * float(np.sum(_group_norms(v, groups))) + 0.5 * np.linalg.norm(a @ v - y) ** 2

    trace = [objective(x)]
    status = "max-iters"
    for _ in range(cfg.max_iters):
        resid = a @ z - y
        grad = a.conj().T @ resid
        x_new = _group_prox(z - step * grad, groups, step * lam)
        obj = objective(x_new)
        if obj > trace[-1]:  # function-value restart
            t_mom = 1.0
            z = x.copy()
            resid = a @ z - y
            grad = a.conj().T @ resid
            x_new = _group_prox(z - step * grad, groups, step * lam)
            obj = objective(x_new)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2)) / 2.0
        z = x_new + ((t_mom - 1.0) / t_next) * (x_new - x)
        x, t_mom = x_new, t_next
        trace.append(obj)
        if abs(trace[-2] - trace[-1]) <= cfg.tol * max(abs(trace[-1]), 1e-12):
            kkt = _group_kkt(x, a.conj().T @ (y - a @ x), lam, groups)
            if kkt <= cfg.tol * lam * 10 + 1e-12:
                status = "converged"
                break
    kkt = _group_kkt(x, a.conj().T @ (y - a @ x), lam, groups)
    return x, np.asarray(trace), status, kkt


def l21_lasso(y, dictionary: SteeringDictionary, lam: float, cfg: GridSolverConfig | None = None):
    """Row-sparse LASSO: min lam ||X||_{2,1} + 0.5 ||A X - Y||_F^2."""
    cfg = cfg or GridSolverConfig()
    x, trace, status, kkt = group_lasso(y, dictionary.matrix, lam, None, cfg)
    return _solution(x, cfg.epsilon_floor, trace, status, kkt, "l21-lasso")


def _l21_equality(y, a, cfg: GridSolverConfig):
    """Primal-dual solve of min ||X||_{2,1} subject to A X = Y."""
    m, n = a.shape
    l = y.shape[1]
    opn = np.linalg.norm(a, 2)
    sig = tau = 1.0 / max(opn, 1e-300)
    x = np.zeros((n, l), dtype=complex)
    xbar = x.copy()
    p = np.zeros((m, l), dtype=complex)
    trace = []
    status = "max-iters"
    for it in range(cfg.max_iters):
        p = p + sig * (a @ xbar - y)
        x_new = _group_prox(x - tau * (a.conj().T @ p), [np.array([i]) for i in range(n)], tau)
        xbar = 2 * x_new - x
        x = x_new
        feas = np.linalg.norm(a @ x - y)
        trace.append(float(np.sum(np.linalg.norm(x, axis=1))))
        if feas <= cfg.tol * max(np.linalg.norm(y), 1e-12) and it > 10:
            if abs(trace[-1] - trace[-2]) <= cfg.tol * max(trace[-1], 1e-12):
                status = "converged"
                break
    return x, np.asarray(trace), status


def l21_bpdn(y, dictionary: SteeringDictionary, eta: float, cfg: GridSolverConfig | None = None):
    """Row-sparse BPDN: min ||X||_{2,1} subject to ||A X - Y||_F <= eta.

    Solved through the LASSO path, bisecting on lam until the residual norm
    hits eta; eta = 0 falls back to a primal-dual equality solve.
    """
    cfg = cfg or GridSolverConfig()
    if eta < 0:
        raise DomainError("eta must be nonnegative")
    y = _as_matrix(y)
    a = dictionary.matrix
    ynorm = np.linalg.norm(y)
    if eta >= ynorm:
        x = np.zeros((a.shape[1], y.shape[1]), dtype=complex)
        return _solution(x, cfg.epsilon_floor, [0.0], "converged", 0.0, "l21-bpdn")
    if eta <= 1e-12 * ynorm:
        x, trace, status = _l21_equality(y, a, cfg)
        resid = np.linalg.norm(a @ x - y)
        if status != "converged" and resid > 1e-6 * ynorm:
            raise FeasibilityError("equality-constrained BPDN did not reach AX = Y")
        return _solution(x, cfg.epsilon_floor, trace, status, float("nan"), "l21-bpdn")

    lam_hi = float(np.max(np.linalg.norm(a.conj().T @ y, axis=1)))
    lam_lo = 0.0
    x = np.zeros((a.shape[1], y.shape[1]), dtype=complex)
    best = None
    trace = []
    for _ in range(60):
        lam = lam_hi if lam_lo == 0.0 else 0.5 * (lam_lo + lam_hi)
        x, _, status, kkt = group_lasso(y, a, lam, None, cfg, x0=x)
        resid = float(np.linalg.norm(a @ x - y))
        trace.append(float(np.sum(np.linalg.norm(x, axis=1))))
        if resid <= eta:
            best = (x.copy(), kkt, status)
            lam_lo = lam
        else:
            lam_hi = lam
        if abs(resid - eta) <= 1e-6 * eta:
            best = (x.copy(), kkt, status)
            break
        if lam_lo == 0.0:
            # residual at lam_hi already exceeds eta: shrink the bracket
            lam_lo, lam_hi = 1e-12 * lam_hi, lam
    if best is None:
        raise FeasibilityError("bisection could not reach the target residual")
    x, kkt, status = best
    return _solution(x, cfg.epsilon_floor, trace, status, kkt, "l21-bpdn")


def sr_lasso(y, a: np.ndarray, tau: float = 1.0, cfg: GridSolverConfig | None = None):
    """Square-root LASSO min tau ||x||_1 + ||y - A x||_2 (single snapshot).

    Solved as a damped fixed point lam = tau * ||y - A x(lam)|| over the
    LASSO path.  Returns (x, objective).
    """
    cfg = cfg or GridSolverConfig()
    y = _as_matrix(y)
    if y.shape[1] != 1:
        raise DomainError("sr_lasso is a single-snapshot solver")
    ynorm = np.linalg.norm(y)
    if ynorm == 0.0:
        return np.zeros((a.shape[1], 1), dtype=complex), 0.0
    lam_max = float(np.max(np.abs(a.conj().T @ y)))
    if tau * ynorm >= lam_max:
        return np.zeros((a.shape[1], 1), dtype=complex), float(ynorm)
    # at the optimum lam = tau * residual(lam); residual is nondecreasing in
    # lam, so bisect the sign change of lam - tau * residual(lam)
    inner = GridSolverConfig(q=cfg.q, max_iters=20000, tol=1e-8, epsilon_floor=cfg.epsilon_floor)
    x = np.zeros((a.shape[1], 1), dtype=complex)
    lo, hi = 0.0, lam_max
    for _ in range(50):
        lam = 0.5 * (lo + hi)
        x, _, _, _ = group_lasso(y, a, lam, None, inner, x0=x)
        if lam - tau * float(np.linalg.norm(a @ x - y)) > 0:
            hi = lam
        else:
            lo = lam
        if hi - lo <= 1e-12 * lam_max:
            break
    lam = 0.5 * (lo + hi)
    x, _, _, _ = group_lasso(y, a, lam, None, cfg, x0=x)
    obj = tau * float(np.sum(np.abs(x))) + float(np.linalg.norm(a @ x - y))
    return x, obj


# ---------------------------------------------------------------------------
# Reweighted least squares family
# ---------------------------------------------------------------------------

def _weight_floor(y: np.ndarray, n: int) -> float:
    return 1e-12 * np.linalg.norm(y) ** 2 / (n * y.shape[1])


def m_focuss(y, dictionary: SteeringDictionary, q: float, lam: float = 0.0, cfg: GridSolverConfig | None = None):
    """Reweighted least squares for the l2,q objective (lam = 0: A X = Y exactly)."""
    cfg = cfg or GridSolverConfig(q=q)
    y = _as_matrix(y)
    a = dictionary.matrix
    m, n = a.shape
    eps_w = _weight_floor(y, n)

    x = np.linalg.lstsq(a, y, rcond=None)[0]

    def objective(v):
        rows_q = np.sum((np.sum(np.abs(v) ** 2, axis=1)) ** (q / 2.0))
        if lam == 0.0:
            return float(rows_q)
        return float(lam * rows_q + 0.5 * np.linalg.norm(a @ v - y) ** 2)

    trace = [objective(x)]
    status = "max-iters"
    for _ in range(cfg.max_iters):
        d = (np.sum(np.abs(x) ** 2, axis=1) + eps_w) ** ((2.0 - q) / 2.0)
        ada = (a * d) @ a.conj().T
        if lam == 0.0:
            x = (d[:, None] * a.conj().T) @ np.linalg.solve(ada + 1e-14 * np.trace(ada).real / m * np.eye(m), y)
        else:
            x = (d[:, None] * a.conj().T) @ np.linalg.solve(ada + lam * q * np.eye(m), y)
        trace.append(objective(x))
        if abs(trace[-2] - trace[-1]) <= cfg.tol * max(abs(trace[-1]), 1e-12):
            status = "converged"
            break
    return _solution(x, cfg.epsilon_floor, trace, status, float("nan"), "m-focuss")


def slim(y, dictionary: SteeringDictionary, q: float, cfg: GridSolverConfig | None = None):
    """Hyper-parameter-free reweighted solver; jointly updates X and the noise level.

    Returns (solution, eta_hat) where eta_hat is the estimated noise power.
    """
    cfg = cfg or GridSolverConfig(q=q)
    y = _as_matrix(y)
    a = dictionary.matrix
    m, n = a.shape
    l = y.shape[1]
    if np.linalg.norm(y) == 0.0:
        x = np.zeros((n, l), dtype=complex)
        return _solution(x, cfg.epsilon_floor, [0.0], "converged", float("nan"), "slim", sigma=0.0), 0.0
    eps_w = _weight_floor(y, n)

    x = a.conj().T @ y / m
    eta = float(np.linalg.norm(a @ x - y) ** 2 / (m * l))

    def objective(v, e):
        rows_q = np.sum((np.sum(np.abs(v) ** 2, axis=1)) ** (q / 2.0))
        return float(m * l * np.log(max(e, 1e-300)) + np.linalg.norm(a @ v - y) ** 2 / max(e, 1e-300) + (2.0 / q) * rows_q)

    trace = [objective(x, eta)]
    status = "max-iters"
    for _ in range(cfg.max_iters):
        d = (np.sum(np.abs(x) ** 2, axis=1) + eps_w) ** ((2.0 - q) / 2.0)
        ada = (a * d) @ a.conj().T
        x = (d[:, None] * a.conj().T) @ np.linalg.solve(ada + eta * np.eye(m), y)
        eta = float(np.linalg.norm(a @ x - y) ** 2 / (m * l))
        trace.append(objective(x, eta))
        if abs(trace[-2] - trace[-1]) <= cfg.tol * max(abs(trace[-1]), 1.0):
            status = "converged"
            break
        if eta <= 1e-28 * np.linalg.norm(y) ** 2:
            status = "converged"  # residual hit numerical zero
            break
    sol = _solution(x, cfg.epsilon_floor, trace, status, float("nan"), "slim", sigma=eta)
    return sol, eta


# ---------------------------------------------------------------------------
# SPICE covariance fitting
# ---------------------------------------------------------------------------

def spice(y, dictionary: SteeringDictionary, max_iters: int = 2000, tol: float = 1e-10):
    """Sparse iterative covariance-based estimation.

    Uses the weighted fitting criterion for L >= M with nonsingular sample
    covariance and the unweighted one otherwise (automatic switch).  Returns
    (p, sigma, r_hat, info) with the per-iteration criterion values in
    ``info['objective_trace']`` and the branch in ``info['branch']``.
    """
    y = _as_matrix(y)
    a = dictionary.matrix
    m, n = a.shape
    l = y.shape[1]
    if np.linalg.norm(y) == 0.0:
        info = {"branch": "h2", "objective_trace": np.zeros(1), "status": "converged"}
        return np.zeros(n), 0.0, np.zeros((m, m), dtype=complex), info

    r_t = sample_covariance(y)
    w_eig = np.linalg.eigvalsh(r_t)
    use_h1 = l >= m and w_eig[0] > 1e-12 * w_eig[-1]
    status_note = ""
    if l >= m and not use_h1:
        status_note = "singular sample covariance: switched to the unweighted criterion"

    if use_h1:
        ew, ev = np.linalg.eigh(r_t)
        data = ev @ np.diag(np.sqrt(np.clip(ew, 0.0, None))) @ ev.conj().T  # R_t^{1/2}
        r_inv = ev @ np.diag(1.0 / ew) @ ev.conj().T
        w_src = np.real(np.sum(a.conj() * (r_inv @ a), axis=0))
        w_sig = float(np.trace(r_inv).real)
        branch = "h1"
    else:
        data = r_t
        w_src = np.full(n, float(m))
        w_sig = float(m)
        branch = "h2"

    p = np.real(np.sum(a.conj() * (r_t @ a), axis=0)) / m**2  # beamformer init
    sigma = float(max(w_eig[0], 1e-12 * max(w_eig[-1], 1e-30)))

    def criterion(pv, sv):
        r = (a * pv) @ a.conj().T + sv * np.eye(m)
        sol = np.linalg.solve(r, data)
        return float(np.real(np.vdot(data, sol))) + float(np.dot(w_src, pv)) + w_sig * sv

    trace = [criterion(p, sigma)]
    status = "max-iters"
    for _ in range(max_iters):
        r = (a * p) @ a.conj().T + sigma * np.eye(m)
        c_core = np.linalg.solve(r, data)  # R^{-1} data
        row_norm = np.linalg.norm(a.conj().T @ c_core, axis=1)  # ||a_n^H R^{-1} data||
        p = p * row_norm / np.sqrt(w_src)
        sigma = sigma * float(np.linalg.norm(c_core)) / np.sqrt(w_sig)
        sigma = max(sigma, 1e-300)
        trace.append(criterion(p, sigma))
        if abs(trace[-2] - trace[-1]) <= tol * max(abs(trace[-1]), 1e-12):
            status = "converged"
            break
    r_hat = (a * p) @ a.conj().T + sigma * np.eye(m)
    info = {
        "branch": branch,
        "objective_trace": np.asarray(trace),
        "status": status,
        "note": status_note,
    }
    return p, sigma, r_hat, info


# ---------------------------------------------------------------------------
# Maximum likelihood by expectation-maximization
# ---------------------------------------------------------------------------

def mle_em(y, dictionary: SteeringDictionary, iters: int = 200, sigma_floor: float = 1e-12):
    """EM descent of the Gaussian negative log-likelihood over (p, sigma).

    Returns (p, sigma, info); info carries the likelihood trace, which is
    nonincreasing by the EM guarantee.
    """
    if iters < 1:
        raise DomainError("need at least one EM iteration")
    y = _as_matrix(y)
    a = dictionary.matrix
    m, n = a.shape
    l = y.shape[1]
    r_t = sample_covariance(y)
    if np.linalg.norm(y) == 0.0:
        return np.zeros(n), 0.0, {"objective_trace": np.zeros(1)}

    p = np.real(np.sum(a.conj() * (r_t @ a), axis=0)) / m**2
    sigma = max(float(np.trace(r_t).real / m) * 0.1, sigma_floor)

    def neg_loglik(pv, sv):
        r = (a * pv) @ a.conj().T + sv * np.eye(m)
        sign, logdet = np.linalg.slogdet(r)
        return float(logdet.real + np.trace(np.linalg.solve(r, r_t)).real)

    trace = [neg_loglik(p, sigma)]
    for _ in range(iters):
        r = (a * p) @ a.conj().T + sigma * np.eye(m)
        rinv_a = np.linalg.solve(r, a)
        mu = (p[:, None] * a.conj().T) @ np.linalg.solve(r, y)  # posterior means
        var_diag = np.clip(p - p**2 * np.real(np.sum(a.conj() * rinv_a, axis=0)), 0.0, None)
        # tr(A Sigma A^H) with Sigma = P - P A^H R^{-1} A P, via G = A P A^H
        g = (a * p) @ a.conj().T
        tr_asa = float(np.trace(g).real - np.trace(g @ np.linalg.solve(r, g)).real)
        p = np.sum(np.abs(mu) ** 2, axis=1) / l + var_diag
        resid = y - a @ mu
        sigma = (np.linalg.norm(resid) ** 2 / l + max(tr_asa, 0.0)) / m
        sigma = max(float(sigma), sigma_floor)
        trace.append(neg_loglik(p, sigma))
    return p, sigma, {"objective_trace": np.asarray(trace)}


# ---------------------------------------------------------------------------
# Dimensionality reduction
# ---------------------------------------------------------------------------

def reduce_snapshots(y):
    """Replace Y by an M x r matrix with the same outer product Y Y^H.

    Computed from the eigendecomposition of Y Y^H; solving the l2,1 programs
    on the reduced data yields identical row-power spectra.
    """
    y = _as_matrix(y)
    m, l = y.shape
    gram = y @ y.conj().T
    w, v = np.linalg.eigh((gram + gram.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    r = int(np.sum(keep))
    y_dr = v[:, keep] * np.sqrt(w[keep])
    return y_dr, {"rank": r, "l_original": l}


def l21_svd_reduce(y, k: int):
    """Keep the K dominant right singular directions: Y_SV = U_K Sigma_K."""
    y = _as_matrix(y)
    m, l = y.shape
    if not 1 <= k <= min(m, l):
        raise DomainError(f"K={k} outside 1..min(M, L)")
    u, s, _ = np.linalg.svd(y, full_matrices=False)
    return u[:, :k] * s[:k]
