"""Squared empirical Gromov-Wasserstein discrepancy between two kernel matrices.

The solver is a proximal-point scheme: each outer step linearizes the
quadratic objective at the current plan and solves the entropic OT problem

    min_T <C(K1, K2, T_k), T> + gamma * KL(T || T_k)

by Sinkhorn scaling of ``T_k * exp(-C / gamma)``. For PSD kernels the
objective is concave on the transport polytope, so every exact step
decreases it; a guard rejects any step that would not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FEASIBILITY_ATOL = 1e-8
MONOTONE_SLACK = 1e-12
LOG_DOMAIN_SIZE = 10_000
MAX_BACKTRACKS = 6
BACKTRACK_FACTOR = 4.0


@dataclass
class OpCounter:
    """Tally of floating-point operations spent inside the solver."""
    flops: int = 0

    def reset(self) -> None:
        self.flops = 0


OPS = OpCounter()


@dataclass
class TransportPlan:
    matrix: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    def check(self, atol: float = FEASIBILITY_ATOL) -> None:
        T = self.matrix
        if T.shape != (self.mu.size, self.nu.size):
            raise ValueError(f"plan shape {T.shape} does not match marginals ({self.mu.size}, {self.nu.size})")
        if np.any(T < 0):
            raise ValueError("plan has negative entries")
        if not (np.allclose(T.sum(axis=1), self.mu, rtol=0, atol=atol)
                and np.allclose(T.sum(axis=0), self.nu, rtol=0, atol=atol)):
            raise ValueError("plan violates its marginals")

    @classmethod
    def product(cls, mu, nu) -> "TransportPlan":
        mu, nu = np.asarray(mu, float), np.asarray(nu, float)
        return cls(np.outer(mu, nu), mu, nu)


@dataclass
class GwConfig:
    proximal_weight: float = 0.01   # gamma = proximal_weight * mean(cost), recomputed each outer step
    outer_iters: int = 20
    sinkhorn_iters: int = 100
    tolerance: float = 1e-7

    def __post_init__(self):
        if not self.proximal_weight > 0:
            raise ValueError("proximal_weight must be positive")
        if self.outer_iters < 1 or self.sinkhorn_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class GwResult:
    plan: TransportPlan
    gw_squared: float
    objective_trace: list = field(default_factory=list)
    log_domain: bool = False
    steps: int = 0    # proximal subproblems solved, including rejected ones


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _check_shapes(k1, k2, T):
    M, L = T.shape
    if k1.shape != (M, M) or k2.shape != (L, L):
        raise ValueError(f"shape mismatch: K1 {k1.shape}, K2 {k2.shape}, plan {T.shape}")


def cost_matrix(k1: np.ndarray, k2: np.ndarray, plan: TransportPlan) -> np.ndarray:
    """``(K1*K1) mu 1^T + 1 nu^T (K2*K2)^T - 2 K1 T K2^T``.

    For a feasible plan, ``<cost, T>`` equals
    ``sum |K1[m,m'] - K2[l,l']|^2 T[m,l] T[m',l']``.
    """
    T = plan.matrix
    _check_shapes(k1, k2, T)
    M, L = T.shape
    row = (k1 * k1) @ plan.mu
    col = (k2 * k2) @ plan.nu
    cross = (k1 @ T) @ k2.T
    OPS.flops += 2 * (M * M * L + M * L * L) + 2 * (M * M + L * L) + 3 * M * L
    return row[:, None] + col[None, :] - 2.0 * cross


def gw_objective(k1, k2, plan: TransportPlan) -> float:
    return float(np.sum(cost_matrix(k1, k2, plan) * plan.matrix))


def grad_wrt_k1(k1: np.ndarray, k2: np.ndarray, plan: TransportPlan) -> np.ndarray:
    """Gradient of ``<cost_matrix(K1, K2, T), T>`` in ``K1`` at a fixed feasible plan."""
    T = plan.matrix
    _check_shapes(k1, k2, T)
    return 2.0 * k1 * np.outer(plan.mu, plan.mu) - 2.0 * (T @ k2) @ T.T


def plan_to_assignment(plan) -> np.ndarray:
    """Row-wise argmax of the plan; ties go to the smallest column index."""
    T = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan)
    return np.argmax(T, axis=1)


def _logsumexp(x, axis):
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return np.squeeze(mx, axis=axis) + np.log(np.sum(np.exp(x - mx), axis=axis))


def _round_to_feasible(P, mu, nu):
    # scale down overfull rows then columns, then restore the deficit with a rank-one term
    P = np.maximum(P, 0.0)
    P = P * np.minimum(1.0, mu / np.maximum(P.sum(axis=1), 1e-300))[:, None]
    P = P * np.minimum(1.0, nu / np.maximum(P.sum(axis=0), 1e-300))[None, :]
    err_r = np.maximum(mu - P.sum(axis=1), 0.0)
    err_c = np.maximum(nu - P.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        P = P + np.outer(err_r, err_c) / total
    return P


def _sinkhorn(log_kernel, mu, nu, iters, log_domain):
    """Scale ``exp(log_kernel)`` to marginals ``(mu, nu)``; returns (plan, used_log_domain)."""
    M, L = log_kernel.shape
    OPS.flops += M * L
    if not log_domain:
        shift = log_kernel.max()
        G = np.exp(log_kernel - shift)
        u = np.ones(M)
        ok = True
        for _ in range(iters):
            Gu = G.T @ u
            v = nu / Gu
            Gv = G @ v
            u = mu / Gv
            OPS.flops += 4 * M * L + M + L
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(Gu > 1e-290)
                    and np.all(Gv > 1e-290)):
                ok = False
                break
            if np.max(np.abs(u * Gv - mu)) < 1e-14:
                break
        if ok:
            return u[:, None] * G * v[None, :], False
    log_mu, log_nu = np.log(mu), np.log(nu)
    f = np.zeros(M)
    g = np.zeros(L)
    for _ in range(iters):
        g = log_nu - _logsumexp(log_kernel + f[:, None], axis=0)
        f = log_mu - _logsumexp(log_kernel + g[None, :], axis=1)
        OPS.flops += 6 * M * L + M + L
        row = np.exp(_logsumexp(log_kernel + f[:, None] + g[None, :], axis=1))
        if np.max(np.abs(row - mu)) < 1e-14:
            break
    return np.exp(log_kernel + f[:, None] + g[None, :]), True


def monotone_coupling(x: np.ndarray, mu: np.ndarray, y: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Optimal 1-D coupling of ``sum mu_i delta(x_i)`` and ``sum nu_j delta(y_j)`` (north-west corner on sorted values)."""
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    P = np.zeros((x.size, y.size))
    a, b = mu[ix].astype(float), nu[iy].astype(float)
    i = j = 0
    while i < a.size and j < b.size:
        m = min(a[i], b[j])
        P[ix[i], iy[j]] += m
        a[i] -= m
        b[j] -= m
        if a[i] <= 1e-15:
            i += 1
        if b[j] <= 1e-15:
            j += 1
    return P


def initial_plan(k1: np.ndarray, k2: np.ndarray, mu: np.ndarray, nu: np.ndarray, blend: float = 0.5) -> np.ndarray:
    """Interior starting plan: ``mu nu^T`` blended with the degree-quantile coupling.

    The product plan alone is a stationary point whenever the weighted row
    sums of a kernel are all equal, and multiplicative steps never revive a
    zero entry, so the start mixes the two.
    """
    P = monotone_coupling(k1 @ mu, mu, k2 @ nu, nu)
    return _round_to_feasible((1.0 - blend) * np.outer(mu, nu) + blend * P, mu, nu)


def solve(k1: np.ndarray, k2: np.ndarray, mu=None, nu=None, config: Optional[GwConfig] = None,
          warm_start: Optional[TransportPlan] = None) -> GwResult:
    """Proximal-point GW solver; always returns a feasible plan."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    M, L = k1.shape[0], k2.shape[0]
    if k1.shape != (M, M) or k2.shape != (L, L):
        raise ValueError("kernel matrices must be square")
    mu = uniform(M) if mu is None else np.asarray(mu, dtype=float)
    nu = uniform(L) if nu is None else np.asarray(nu, dtype=float)
    for name, p, n in (("mu", mu, M), ("nu", nu, L)):
        if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"{name} must be a probability vector of length {n}")
    config = config or GwConfig()

    # zero-mass rows/columns carry nothing; solve on the support and embed back
    rows, cols = np.flatnonzero(mu > 0), np.flatnonzero(nu > 0)
    K1, K2 = k1[np.ix_(rows, rows)], k2[np.ix_(cols, cols)]
    a, b = mu[rows], nu[cols]
    a, b = a / a.sum(), b / b.sum()

    if warm_start is not None:
        warm_start.check(atol=1e-6)
        if not (np.allclose(warm_start.mu, mu) and np.allclose(warm_start.nu, nu)):
            raise ValueError("warm start has different marginals")
        T = _round_to_feasible(warm_start.matrix[np.ix_(rows, cols)], a, b)
    else:
        T = initial_plan(K1, K2, a, b)

    log_domain = a.size * b.size > LOG_DOMAIN_SIZE
    used_log = log_domain
    plan = TransportPlan(T, a, b)
    C = cost_matrix(K1, K2, plan)
    obj = float(np.sum(C * T))
    trace = [obj]
    steps = 0
    for _ in range(config.outer_iters):
        gamma = config.proximal_weight * float(np.mean(C))
        if not gamma > 0:
            break
        accepted = False
        # an under-converged Sinkhorn solve can overshoot; retry with a more conservative prox step
        for _ in range(MAX_BACKTRACKS + 1):
            steps += 1
            with np.errstate(divide="ignore"):
                log_kernel = np.log(T) - C / gamma
            P, was_log = _sinkhorn(log_kernel, a, b, config.sinkhorn_iters, log_domain)
            used_log = used_log or was_log
            P = _round_to_feasible(P, a, b)
            cand = TransportPlan(P, a, b)
            C_new = cost_matrix(K1, K2, cand)
            new_obj = float(np.sum(C_new * P))
            if np.isfinite(new_obj) and new_obj <= obj + MONOTONE_SLACK:
                accepted = True
                break
            gamma *= BACKTRACK_FACTOR
        if not accepted:
            break
        T, C, plan = P, C_new, cand
        done = obj - new_obj < config.tolerance
        obj = new_obj
        trace.append(obj)
        if done:
            break

    full = np.zeros((M, L))
    full[np.ix_(rows, cols)] = T * mu[rows].sum()
    result_plan = TransportPlan(full, mu, nu)
    return GwResult(result_plan, max(obj, 0.0), trace, used_log, steps)
