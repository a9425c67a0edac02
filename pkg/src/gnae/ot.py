"""Fused Gromov-Wasserstein distances between step graphons.

The solver is a KL-proximal point method: each outer step linearises the
quadratic GW term at the current plan, multiplies the plan by the Gibbs
kernel of that cost and rebalances with a few Sinkhorn scalings.  Kernels are
handled in log space so costs far above ``beta`` do not underflow.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp

from ._random import check_random_state
from .exceptions import InvalidInputError

__all__ = [
    "SolverConfig",
    "TransportPlan",
    "FgwResult",
    "fgw_distance",
    "proximal_solve",
    "fgw_objective",
    "signal_cost",
    "sample_directions",
    "fgw_1d",
    "sliced_fgw",
    "sliced_fgw_with_grad",
]

_PLAN_FLOOR = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    """Proximal solver settings.

    ``beta`` is the base proximal temperature.  A step that would raise the
    objective is retried with ``beta`` multiplied by ``backtrack_factor``, at
    most ``max_backtracks`` times; if every retry fails the plan is kept.
    """

    outer_iters: int = 20
    sinkhorn_iters: int = 5
    beta: float = 0.005
    order: int = 2
    backtrack_factor: float = 4.0
    max_backtracks: int = 10

    def __post_init__(self):
        if self.outer_iters < 1 or self.sinkhorn_iters < 1:
            raise InvalidInputError("solver iteration counts must be >= 1")
        if not self.beta > 0:
            raise InvalidInputError("beta must be positive")
        if self.order not in (1, 2):
            raise InvalidInputError("order must be 1 or 2")
        if self.backtrack_factor <= 1 or self.max_backtracks < 1:
            raise InvalidInputError("backtracking needs a factor > 1 and at least one try")


@dataclass
class TransportPlan:
    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @property
    def mass(self):
        return float(self.matrix.sum())


@dataclass
class FgwResult:
    distance: float
    objective_trace: List[float] = field(default_factory=list)
    plan: TransportPlan = None


def _matmul(a, b):
    out = a @ b
    return np.asarray(out)


def _square(g):
    return g.multiply(g) if sp.issparse(g) else g * g


def _gw_linear_cost(G1, G2, T, row, col, order):
    """``sum_{n'm'} |g1[n,n'] - g2[m,m']|^p T[n',m']`` for every ``(n, m)``."""
    if order == 2:
        first = _matmul(_square(G1), row)[:, None]
        second = _matmul(_square(G2), col)[None, :]
        return first + second - 2.0 * _matmul(G1, _matmul(T, G2.T))
    # order 1 has no factorisation; loop over rows of G1 (tiny instances only)
    g1 = G1.toarray() if sp.issparse(G1) else np.asarray(G1)
    g2 = G2.toarray() if sp.issparse(G2) else np.asarray(G2)
    out = np.empty(T.shape)
    for n in range(g1.shape[0]):
        diff = np.abs(g1[n][:, None, None] - g2[None, :, :])  # (N', M, M')
        out[n] = np.einsum("amb,ab->m", diff, T)
    return out


def fgw_objective(G1, G2, Ds, T, order=2):
    """Exact ``<D_g, T (x) T> + <D_s, T>`` using the plan's actual marginals."""
    lin = _gw_linear_cost(G1, G2, T, T.sum(axis=1), T.sum(axis=0), order)
    return max(float(np.sum(lin * T) + np.sum(Ds * T)), 0.0)


class _Objective:
    """Evaluates the objective and the linearised cost, sharing the costly product."""

    def __init__(self, G1, G2, Ds, mu_p, mu_q, order):
        self.G1, self.G2, self.Ds, self.order = G1, G2, Ds, order
        self.sq1 = _square(G1) if order == 2 else None
        self.sq2 = _square(G2) if order == 2 else None
        if order == 2:
            # marginal part of the expanded square cost, fixed for the whole run
            self.g12 = (_matmul(self.sq1, mu_p)[:, None] + _matmul(self.sq2, mu_q)[None, :])
        self.mu_p, self.mu_q = mu_p, mu_q

    def evaluate(self, T):
        """Return ``(objective, cost for the next proximal step)``."""
        if self.order == 2:
            cross = _matmul(self.G1, _matmul(T, self.G2.T))
            row, col = T.sum(axis=1), T.sum(axis=0)
            exact = (_matmul(self.sq1, row)[:, None] + _matmul(self.sq2, col)[None, :]
                     - 2.0 * cross + self.Ds)
            step_cost = self.Ds + self.g12 - 2.0 * cross
        else:
            exact = self.Ds + _gw_linear_cost(self.G1, self.G2, T, None, None, 1)
            step_cost = exact
        return max(float(np.sum(exact * T)), 0.0), step_cost


def signal_cost(s1, s2, order=2):
    """Pairwise ``||s1_n - s2_m||_p^p`` between signal rows."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if order == 2:
        sq1 = np.sum(s1 * s1, axis=1)[:, None]
        sq2 = np.sum(s2 * s2, axis=1)[None, :]
        return np.maximum(sq1 + sq2 - 2.0 * s1 @ s2.T, 0.0)
    return np.abs(s1[:, None, :] - s2[None, :, :]).sum(axis=2)


def _logsumexp(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.sum(np.exp(x - m), axis=axis)) + np.squeeze(m, axis=axis)


def _sinkhorn_step(step_cost, T, beta, log_a, log_mu_p, log_mu_q, iters):
    log_kernel = -step_cost / beta + np.log(np.maximum(T, _PLAN_FLOOR))
    for _ in range(iters):
        log_b = log_mu_q - _logsumexp(log_kernel + log_a[:, None], axis=0)
        log_a = log_mu_p - _logsumexp(log_kernel + log_b[None, :], axis=1)
    return np.exp(log_a[:, None] + log_kernel + log_b[None, :]), log_a


def proximal_solve(G1, G2, Ds, row_marginal, col_marginal, cfg=None, callback=None):
    """Minimise the FGW objective over couplings of the two marginals.

    Parameters
    ----------
    G1, G2 : array or sparse matrix
        Structure matrices of the two step graphons, ``N x N`` and ``M x M``.
    Ds : ndarray
        ``N x M`` signal cost; zeros when signals are absent.
    row_marginal, col_marginal : ndarray
    cfg : SolverConfig
    callback : callable, optional
        ``callback(T, objective)`` is called with the initial plan and again
        after every outer iteration.

    Returns
    -------
    TransportPlan
        Its rows match ``row_marginal`` because the last Sinkhorn update of
        every outer step is the row scaling; columns are only approximate.
    """
    cfg = cfg or SolverConfig()
    Ds = np.asarray(Ds, dtype=float)
    mu_p = np.asarray(row_marginal, dtype=float)
    mu_q = np.asarray(col_marginal, dtype=float)
    if Ds.shape != (len(mu_p), len(mu_q)):
        raise InvalidInputError(f"cost shape {Ds.shape} does not match marginals")
    if not np.all(np.isfinite(Ds)):
        raise InvalidInputError("signal cost contains non-finite entries")
    for g in (G1, G2):
        data = g.data if sp.issparse(g) else np.asarray(g)
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("structure matrix contains non-finite entries")

    objective = _Objective(G1, G2, Ds, mu_p, mu_q, cfg.order)
    log_mu_p, log_mu_q = np.log(mu_p), np.log(mu_q)
    T = np.outer(mu_p, mu_q)
    log_a = log_mu_p.copy()
    value, step_cost = objective.evaluate(T)
    if callback is not None:
        callback(T, value)
    stalled = False
    for _ in range(cfg.outer_iters):
        # a step with no accepted retry leaves the state unchanged, so every
        # later step would fail identically; skip the recomputation
        if not stalled:
            stalled = True
            beta = cfg.beta
            for _ in range(cfg.max_backtracks):
                T_new, log_a_new = _sinkhorn_step(step_cost, T, beta, log_a, log_mu_p, log_mu_q,
                                                  cfg.sinkhorn_iters)
                value_new, cost_new = objective.evaluate(T_new)
                if value_new <= value:
                    T, log_a, value, step_cost = T_new, log_a_new, value_new, cost_new
                    stalled = False
                    break
                beta *= cfg.backtrack_factor
        if callback is not None:
            callback(T, value)
    return TransportPlan(T, mu_p, mu_q)


def _unpack(x):
    if isinstance(x, tuple):
        if len(x) == 1:
            return x[0], None
        return x[0], x[1]
    return x, None


def _graphon_bytes(g):
    vals = g.values.toarray() if sp.issparse(g.values) else g.values
    return np.ascontiguousarray(vals).tobytes()


def _needs_swap(g1, s1, g2, s2):
    """Canonical argument order: smaller graphon first, ties broken by raw bytes."""
    if g1.partitions != g2.partitions:
        return g2.partitions < g1.partitions
    b1, b2 = _graphon_bytes(g1), _graphon_bytes(g2)
    if b1 != b2:
        return b2 < b1
    if s1 is None:
        return False
    return np.ascontiguousarray(s2.values).tobytes() < np.ascontiguousarray(s1.values).tobytes()


def fgw_distance(x1, x2, cfg=None):
    """Order-p fused GW distance between two step graphons with optional signals.

    ``x1`` and ``x2`` are ``(StepGraphon, StepSignal or None)`` pairs.  The
    arguments are put in a canonical order before solving so the distance is
    exactly symmetric.  The returned plan is always ``N1 x N2``; its exact
    marginal is the row one unless the arguments were swapped, in which case
    it is the column one.
    """
    cfg = cfg or SolverConfig()
    g1, s1 = _unpack(x1)
    g2, s2 = _unpack(x2)
    if (s1 is None) != (s2 is None):
        raise InvalidInputError("signals must be given for both graphons or for neither")
    if s1 is not None:
        if s1.dim != s2.dim:
            raise InvalidInputError(f"signal dimensions differ: {s1.dim} vs {s2.dim}")
        if s1.partitions != g1.partitions or s2.partitions != g2.partitions:
            raise InvalidInputError("signal and graphon partitions differ")

    swap = _needs_swap(g1, s1, g2, s2)
    if swap:
        g1, s1, g2, s2 = g2, s2, g1, s1
    n, m = g1.partitions, g2.partitions
    mu_p, mu_q = np.full(n, 1.0 / n), np.full(m, 1.0 / m)
    Ds = np.zeros((n, m)) if s1 is None else signal_cost(s1.values, s2.values, cfg.order)
    G1, G2 = g1.values, g2.values

    trace = []
    plan = proximal_solve(G1, G2, Ds, mu_p, mu_q, cfg,
                          callback=lambda T, value: trace.append(value))
    if swap:
        plan = TransportPlan(plan.matrix.T.copy(), plan.col_marginal, plan.row_marginal)
    return FgwResult(trace[-1] ** (1.0 / cfg.order), trace, plan)


def sample_directions(L, dim, rng=None):
    """``L`` directions uniform on the unit sphere in ``dim`` dimensions."""
    rng = check_random_state(rng)
    d = rng.standard_normal((L, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _fgw_1d_value(a, b):
    da = (a[:, None] - a[None, :]) ** 2
    db = (b[:, None] - b[None, :]) ** 2
    return float(np.sum((da - db) ** 2) + np.sum((a - b) ** 2))


def fgw_1d(sorted_a, b_candidates):
    """Best of the candidate orderings of the 1D FGW objective against ``sorted_a``."""
    a = np.asarray(sorted_a, dtype=float)
    values = []
    for b in b_candidates:
        b = np.asarray(b, dtype=float)
        if b.shape != a.shape:
            raise InvalidInputError("1D FGW needs equally sized sample sets")
        values.append(_fgw_1d_value(a, b))
    return min(values)


def _check_samples(samples1, samples2):
    x = np.atleast_2d(np.asarray(samples1, dtype=float))
    y = np.atleast_2d(np.asarray(samples2, dtype=float))
    if x.shape != y.shape or x.shape[0] < 1:
        raise InvalidInputError(f"sample sets must have matching shapes, got {x.shape} and {y.shape}")
    return x, y


def sliced_fgw_with_grad(samples1, samples2, directions):
    """Empirical sliced FGW and its gradients w.r.t. both sample sets.

    Sorting permutations and the ascending/descending choice per direction are
    held fixed, which gives the gradient of the piecewise-smooth envelope.
    """
    x, y = _check_samples(samples1, samples2)
    n = x.shape[0]
    L = directions.shape[0]
    px = x @ directions.T  # (N, L)
    py = y @ directions.T
    total = 0.0
    gx = np.zeros_like(px)
    gy = np.zeros_like(py)
    for l in range(L):
        ia = np.argsort(px[:, l], kind="stable")
        ib = np.argsort(py[:, l], kind="stable")
        a = px[ia, l]
        best = None
        for ib_order in (ib, ib[::-1]):
            val = _fgw_1d_value(a, py[ib_order, l])
            if best is None or val < best[0]:
                best = (val, ib_order)
        val, ib_order = best
        b = py[ib_order, l]
        total += val
        d = (a[:, None] - a[None, :]) ** 2 - (b[:, None] - b[None, :]) ** 2
        ga = 8.0 * np.sum(d * (a[:, None] - a[None, :]), axis=1) + 2.0 * (a - b)
        gb = -8.0 * np.sum(d * (b[:, None] - b[None, :]), axis=1) - 2.0 * (a - b)
        gx[ia, l] = ga
        gy[ib_order, l] = gb
    scale = 1.0 / (n * L)
    return total * scale, scale * gx @ directions, scale * gy @ directions


def sliced_fgw(samples1, samples2, L=50, rng=None):
    """Empirical sliced FGW between two equally sized latent sample sets."""
    x, y = _check_samples(samples1, samples2)
    if L < 1:
        raise InvalidInputError("need at least one projection")
    directions = sample_directions(L, x.shape[1], rng)
    return sliced_fgw_with_grad(x, y, directions)[0]
