"""ADMM engine for the toolkit's PSD-block semidefinite programs.

Two block shapes are supported.  The Toeplitz shape optimizes

    min  weight_x tr(X) + tr(W T(u))   s.t.  [[X, Z^H], [Z, T(u)]] >= 0

with Z tied to observed data rows by an equality, Frobenius-ball, or
quadratic-penalty coupling.  The Hankel shape minimizes the nuclear-norm
bound (tr(Q1) + tr(Q2)) / 2 of a block-Hankel lift under the same data
couplings.  Each ADMM step is an exact closed-form minimization: the
(X, u, Z) block is separable quadratic, the PSD copy is an eigenvalue
projection, and the multiplier ascends the residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .signals import (
    diag_sum,
    hankel_adjoint,
    hankel_counts,
    hankel_lift,
    toeplitz,
    toeplitz_gram_weights,
)


@dataclass
class AdmmConfig:
    beta: float = 1.0
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    max_iters: int = 50000
    adapt: bool = True
    adapt_ratio: float = 10.0
    adapt_factor: float = 2.0
    log_stream: object = None  # optional file-like; CSV rows (iter, objective, primal, dual)


@dataclass
class BlockSdpProblem:
    """Canonical PSD-block SDP consumed by :func:`admm_solve`.

    ``kind`` is "toeplitz" or "hankel".  ``n`` is the virtual signal length
    N.  ``data`` holds the observed rows (|omega| x C); ``omega`` lists the
    observed 1-based virtual rows (None means all N).  ``data_mode`` is
    "equality", "ball" (radius ``eta``), or "quadratic" (adds
    0.5 * lam_data ||Z_omega - Y||_F^2 to the cost).  For the Toeplitz kind
    the cost is weight_x tr(X) + tr(weight_t T(u)) with Hermitian weight_t
    (None = identity); the Hankel kind uses the fixed nuclear-norm cost and
    needs the pencil split ``hankel_m``.
    """

    kind: str
    n: int
    data: np.ndarray
    omega: tuple | None = None
    data_mode: str = "equality"
    eta: float = 0.0
    lam_data: float = 1.0
    weight_x: float = 1.0
    weight_t: np.ndarray | None = None
    hankel_m: int = 0

    def __post_init__(self):
        if self.kind not in ("toeplitz", "hankel"):
            raise DomainError(f"unknown block kind {self.kind!r}")
        if self.data_mode not in ("equality", "ball", "quadratic"):
            raise DomainError(f"unknown data mode {self.data_mode!r}")
        data = np.asarray(self.data, dtype=complex)
        if data.ndim == 1:
            data = data[:, None]
        object.__setattr__(self, "data", data)
        omega = tuple(range(1, self.n + 1)) if self.omega is None else tuple(int(i) for i in self.omega)
        if len(omega) != data.shape[0]:
            raise DomainError("data must have one row per omega index")
        if any(not 1 <= i <= self.n for i in omega) or len(set(omega)) != len(omega):
            raise DomainError("omega must be distinct indices in 1..N")
        object.__setattr__(self, "omega", omega)
        if self.weight_t is not None:
            w = np.asarray(self.weight_t, dtype=complex)
            if w.shape != (self.n, self.n) or np.linalg.norm(w - w.conj().T) > 1e-10 * max(1.0, np.linalg.norm(w)):
                raise DomainError("weight_t must be Hermitian N x N")
            object.__setattr__(self, "weight_t", w)
        if self.kind == "hankel" and not 1 <= self.hankel_m <= self.n:
            raise DomainError("hankel problems need a pencil split 1 <= m <= N")

    @property
    def snapshots(self) -> int:
        return self.data.shape[1]


@dataclass
class SdpSolution:
    u: np.ndarray | None
    z: np.ndarray
    x_block: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    status: str
    extras: dict = field(default_factory=dict)


def psd_project(h: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (input symmetrized first)."""
    h = np.asarray(h, dtype=complex)
    herm = (h + h.conj().T) / 2.0
    w, v = np.linalg.eigh(herm)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return (out + out.conj().T) / 2.0


def _herm(h):
    return (h + h.conj().T) / 2.0


def _project_data_rows(zstar, y, mode, eta, lam_data, beta, weights=None):
    """Exact minimizer of the Z-block quadratic over the data-coupling set.

    ``weights`` carries per-row multiplicities for the Hankel shape (each
    signal entry appears in several lift cells); None means unit weights.
    """
    if mode == "equality":
        return y.copy()
    if mode == "quadratic":
        if weights is None:
            return (lam_data * y + 2.0 * beta * zstar) / (lam_data + 2.0 * beta)
        w = weights[:, None]
        return (lam_data * y + 2.0 * beta * w * zstar) / (lam_data + 2.0 * beta * w)
    # ball mode
    if weights is None:
        d = zstar - y
        nrm = np.linalg.norm(d)
        if nrm <= eta:
            return zstar.copy()
        return y + d * (eta / max(nrm, 1e-300))
    # weighted ball: solve for the multiplier nu on ||z - y||_F = eta
    d = zstar - y
    if np.sqrt(np.sum(np.abs(d) ** 2)) <= eta:
        return zstar.copy()
    w = weights[:, None]

    def excess(nu):
        scale = w / (w + nu)
        return np.sum(np.abs(scale * d) ** 2) - eta**2

    lo, hi = 0.0, 1.0
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e18:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    nu = 0.5 * (lo + hi)
    return y + (w / (w + nu)) * d


def admm_solve(problem: BlockSdpProblem, cfg: AdmmConfig | None = None) -> SdpSolution:
    cfg = cfg or AdmmConfig()
    if problem.kind == "toeplitz":
        return _solve_toeplitz(problem, cfg)
    return _solve_hankel(problem, cfg)


def _solve_toeplitz(problem: BlockSdpProblem, cfg: AdmmConfig) -> SdpSolution:
    n = problem.n
    y = problem.data
    c = y.shape[1]
    rows = np.asarray(problem.omega) - 1
    w_cost = problem.weight_t if problem.weight_t is not None else np.eye(n, dtype=complex)
    g_cost = diag_sum(w_cost)
    gram = toeplitz_gram_weights(n)
    beta = cfg.beta

    dim = c + n
    q = np.zeros((dim, dim), dtype=complex)
    lam = np.zeros((dim, dim), dtype=complex)
    z = np.zeros((n, c), dtype=complex)
    z[rows] = y
    u = np.zeros(n, dtype=complex)
    x = np.zeros((c, c), dtype=complex)
    g = np.zeros((dim, dim), dtype=complex)

    def assemble(xb, zb, ub):
        g[:c, :c] = xb
        g[:c, c:] = zb.conj().T
        g[c:, :c] = zb
        g[c:, c:] = toeplitz(ub)
        return g

    def objective(xb, zb, ub):
        val = problem.weight_x * float(np.trace(xb).real)
        val += float(np.real(np.vdot(w_cost, toeplitz(ub))))
        if problem.data_mode == "quadratic":
            val += 0.5 * problem.lam_data * float(np.linalg.norm(zb[rows] - y) ** 2)
        return val

    assemble(x, z, u)
    status = "max-iters"
    it = 0
    r_p = r_d = float("inf")
    for it in range(1, cfg.max_iters + 1):
        p = q + lam / beta
        x = _herm(p[:c, :c]) - (problem.weight_x / beta) * np.eye(c)
        zstar = (p[c:, :c] + p[:c, c:].conj().T) / 2.0
        z = zstar.copy()
        z[rows] = _project_data_rows(zstar[rows], y, problem.data_mode, problem.eta, problem.lam_data, beta)
        du = diag_sum(_herm(p[c:, c:]))
        u = (du - g_cost / beta) / gram
        u[0] = u[0].real

        g_new = assemble(x, z, u)
        q_prev = q
        q = psd_project(g_new - lam / beta)
        lam = lam + beta * (q - g_new)

        r_p = float(np.linalg.norm(q - g_new)) / max(1.0, np.linalg.norm(q), np.linalg.norm(g_new))
        r_d = beta * float(np.linalg.norm(q - q_prev)) / max(1.0, np.linalg.norm(lam))
        if cfg.log_stream is not None and it % 50 == 0:
            cfg.log_stream.write(f"{it},{objective(x, z, u):.12g},{r_p:.3e},{r_d:.3e}\n")
        if r_p < cfg.tol_primal and r_d < cfg.tol_dual:
            status = "converged"
            break
        if cfg.adapt and it % 10 == 0:
            if r_p > cfg.adapt_ratio * r_d and beta < 1e8:
                beta *= cfg.adapt_factor
            elif r_d > cfg.adapt_ratio * r_p and beta > 1e-8:
                beta /= cfg.adapt_factor

    return SdpSolution(
        u=u,
        z=z,
        x_block=x,
        objective=objective(x, z, u),
        primal_residual=r_p,
        dual_residual=r_d,
        iterations=it,
        converged=status == "converged",
        status=status,
        extras={"psd_block": q, "beta": beta},
    )


def _solve_hankel(problem: BlockSdpProblem, cfg: AdmmConfig) -> SdpSolution:
    n = problem.n
    y = problem.data
    l = y.shape[1]
    m = problem.hankel_m
    nh = n + 1 - m
    rows = np.asarray(problem.omega) - 1
    counts = hankel_counts(n, m).astype(float)
    beta = cfg.beta

    dim = m + nh * l
    q = np.zeros((dim, dim), dtype=complex)
    lam = np.zeros((dim, dim), dtype=complex)
    z = np.zeros((n, l), dtype=complex)
    z[rows] = y

    def assemble(q1, q2, zb):
        g = np.zeros((dim, dim), dtype=complex)
        h = hankel_lift(zb, m)
        g[:m, :m] = q1
        g[:m, m:] = h
        g[m:, :m] = h.conj().T
        g[m:, m:] = q2
        return g

    def objective(q1, q2, zb):
        val = 0.5 * float(np.trace(q1).real + np.trace(q2).real)
        if problem.data_mode == "quadratic":
            val += 0.5 * problem.lam_data * float(np.linalg.norm(zb[rows] - y) ** 2)
        return val

    q1 = np.zeros((m, m), dtype=complex)
    q2 = np.zeros((nh * l, nh * l), dtype=complex)
    status = "max-iters"
    it = 0
    r_p = r_d = float("inf")
    for it in range(1, cfg.max_iters + 1):
        p = q + lam / beta
        q1 = _herm(p[:m, :m]) - (0.5 / beta) * np.eye(m)
        q2 = _herm(p[m:, m:]) - (0.5 / beta) * np.eye(nh * l)
        hstar = (p[:m, m:] + p[m:, :m].conj().T) / 2.0
        zstar = hankel_adjoint(hstar, n, m, l) / counts[:, None]
        z = zstar.copy()
        z[rows] = _project_data_rows(
            zstar[rows], y, problem.data_mode, problem.eta, problem.lam_data, beta, weights=counts[rows]
        )

        g_new = assemble(q1, q2, z)
        q_prev = q
        q = psd_project(g_new - lam / beta)
        lam = lam + beta * (q - g_new)

        r_p = float(np.linalg.norm(q - g_new)) / max(1.0, np.linalg.norm(q), np.linalg.norm(g_new))
        r_d = beta * float(np.linalg.norm(q - q_prev)) / max(1.0, np.linalg.norm(lam))
        if cfg.log_stream is not None and it % 50 == 0:
            cfg.log_stream.write(f"{it},{objective(q1, q2, z):.12g},{r_p:.3e},{r_d:.3e}\n")
        if r_p < cfg.tol_primal and r_d < cfg.tol_dual:
            status = "converged"
            break
        if cfg.adapt and it % 10 == 0:
            if r_p > cfg.adapt_ratio * r_d and beta < 1e8:
                beta *= cfg.adapt_factor
            elif r_d > cfg.adapt_ratio * r_p and beta > 1e-8:
                beta /= cfg.adapt_factor

    return SdpSolution(
        u=None,
        z=z,
        x_block=q1,
        objective=objective(q1, q2, z),
        primal_residual=r_p,
        dual_residual=r_d,
        iterations=it,
        converged=status == "converged",
        status=status,
        extras={"psd_block": q, "q2": q2, "beta": beta},
    )
