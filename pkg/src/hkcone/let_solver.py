"""Logarithmic entropy transport (LET) between discrete measures.

The HK distance is the square root of the minimum of

    E(pi) = sum_i a_i F(p_i / a_i) + sum_j b_j F(q_j / b_j) + sum_ij C_ij pi_ij,

with F(s) = s log s - s + 1, p = pi 1, q = pi^T 1, and ground cost
C_ij = -2 log cos |x_i - y_j| (infinite beyond pi/2).

``solve_let`` runs log-domain unbalanced Sinkhorn with epsilon annealing and
then, by default, an exact active-set refinement of the unregularized problem
(see ``_forest``). The refinement removes the entropic bias, which would
otherwise dominate small distances.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import _forest
from .errors import DimensionMismatch, EmptyMeasure, NoFeasiblePair, NonConvergence, ZeroMarginal
from .measures import DiscreteMeasure, _diameter

log = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``refine`` switches the exact forest refinement after annealing. With
    refinement on, annealing stages only seed it and stop at
    ``max(tol, seed_tol)``. ``edgewise`` selects the tangent construction used
    by ``hk_log``.
    """

    epsilon_start: float = 0.1
    epsilon_min: float = 1e-3
    epsilon_factor: float = 0.5
    tol: float = 1e-9
    max_iters: int = 10000
    refine: bool = True
    refine_tol: float = 1e-11
    seed_tol: float = 1e-6
    max_pivots: int | None = None
    edgewise: bool = True

    def __post_init__(self):
        if not (self.epsilon_start > 0 and self.epsilon_min > 0):
            raise ValueError("epsilon values must be positive")
        if self.epsilon_min > self.epsilon_start:
            raise ValueError("epsilon_min must not exceed epsilon_start")
        if not 0 < self.epsilon_factor < 1:
            raise ValueError("epsilon_factor must lie in (0, 1)")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters >= 1")


@dataclass(frozen=True)
class Coupling:
    weights: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "Coupling":
        weights = np.asarray(weights, dtype=float)
        return cls(weights, weights.sum(axis=1), weights.sum(axis=0))

    def support(self):
        """Nonzero entries as ``(rows, cols, values)`` in row-major order."""
        rows, cols = np.nonzero(self.weights)
        return rows, cols, self.weights[rows, cols]


@dataclass(frozen=True)
class LetSolution:
    coupling: Coupling
    hk_distance: float
    u_source: np.ndarray
    u_target: np.ndarray
    epsilon_final: float
    iterations: int
    converged: bool
    energy: float = 0.0
    stage_energies: tuple = ()
    refined: bool = False
    pivots: int = 0
    cost: np.ndarray | None = field(default=None, repr=False)


def ground_cost(x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    return float(_cost_from_distance(np.linalg.norm(x - y)))


def _cost_from_distance(dist):
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        # -2 log cos L = -log(1 - sin^2 L), accurate for small L
        c = -np.log1p(-np.sin(np.minimum(dist, HALF_PI)) ** 2)
    return np.where(dist < HALF_PI, c, np.inf)


def cost_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"dimensions {X.shape[1]} and {Y.shape[1]}")
    return _cost_from_distance(cdist(X, Y))


def _entropy_terms(marginal: np.ndarray, mass: np.ndarray) -> float:
    """sum_i a_i F(p_i/a_i), written in terms of delta = p/a - 1 for accuracy near 0."""
    delta = (marginal - mass) / mass
    with np.errstate(divide="ignore", invalid="ignore"):
        term = mass * ((1.0 + delta) * np.log1p(delta) - delta)
    term = np.where(marginal > 0, term, mass)
    return float(np.sum(term))


def let_objective(weights: np.ndarray, a: np.ndarray, b: np.ndarray, C: np.ndarray) -> float:
    """Unregularized LET functional evaluated at a dense coupling."""
    p = weights.sum(axis=1)
    q = weights.sum(axis=0)
    finite = np.isfinite(C)
    if np.any(weights[~finite] > 0):
        return np.inf
    transport = float(np.sum(weights[finite] * C[finite]))
    return _entropy_terms(p, a) + _entropy_terms(q, b) + transport


def _sparse_objective(rows, cols, flow, a, b, C) -> float:
    p = np.bincount(rows, weights=flow, minlength=a.size)
    q = np.bincount(cols, weights=flow, minlength=b.size)
    transport = float(np.sum(flow * C[rows, cols]))
    return _entropy_terms(p, a) + _entropy_terms(q, b) + transport


def _lse_rows(M: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp; rows of -inf give -inf."""
    top = M.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(M - safe[:, None]).sum(axis=1)) + safe


def _sinkhorn_stage(C, finite, loga, logb, f, g, eps, tol, max_iters):
    """Translation-invariant log-domain unbalanced Sinkhorn at fixed eps.

    Potentials are normalized so that pi_ij = a_i b_j exp((f_i + g_j - C_ij)/eps)
    and, at the unregularized limit, p_i = a_i exp(-f_i).
    """
    damp = eps / (1.0 + eps)
    negC = np.where(finite, -C / eps, -np.inf)
    negCT = np.ascontiguousarray(negC.T)
    a = np.exp(loga)
    b = np.exp(logb)
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        f_new = -damp * _lse_rows(negC + (logb + g / eps)[None, :])
        g_new = -damp * _lse_rows(negCT + (loga + f_new / eps)[None, :])
        # optimal common shift of the potentials, closed form for KL marginals
        with np.errstate(over="ignore"):
            sa = np.sum(a * np.exp(-f_new))
            sb = np.sum(b * np.exp(-g_new))
        if sa > 0 and sb > 0 and np.isfinite(sa) and np.isfinite(sb):
            shift = 0.5 * (np.log(sa) - np.log(sb))
            f_new = f_new + shift
            g_new = g_new - shift
        df = _max_change(f, f_new)
        dg = _max_change(g, g_new)
        f, g = f_new, g_new
        if max(df, dg) < tol:
            converged = True
            break
    return f, g, it, converged


def _max_change(old, new):
    ok = np.isfinite(old) & np.isfinite(new)
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(new[ok] - old[ok])))


def _log_plan(C, finite, loga, logb, f, g, eps):
    with np.errstate(invalid="ignore"):
        lp = loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - C) / eps
    return np.where(finite, lp, -np.inf)


def _check_inputs(mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    if len(mu0) == 0 or len(mu1) == 0:
        raise EmptyMeasure("LET needs two nonempty measures")
    if mu0.dim != mu1.dim:
        raise DimensionMismatch(f"dimensions {mu0.dim} and {mu1.dim}")


def solve_let(mu0: DiscreteMeasure, mu1: DiscreteMeasure,
              cfg: SolverConfig | None = None,
              init_support=None) -> LetSolution:
    """Solve the LET problem between two discrete measures.

    Parameters
    ----------
    mu0, mu1 : DiscreteMeasure
        Source and target measures.
    cfg : SolverConfig, optional
        Annealing schedule and refinement switches.
    init_support : sequence of (i, j) pairs, optional
        Candidate forest for the exact refinement. When given, annealing is
        skipped unless the refinement fails to certify optimality from it.

    Returns
    -------
    LetSolution
    """
    cfg = cfg or SolverConfig()
    _check_inputs(mu0, mu1)
    a, b = mu0.masses, mu1.masses
    C = cost_matrix(mu0.points, mu1.points)
    finite = np.isfinite(C)
    if not finite.any():
        raise NoFeasiblePair("every atom pair is at distance >= pi/2")
    joint = np.vstack([mu0.points, mu1.points])
    if _diameter(joint) >= HALF_PI:
        warnings.warn("combined support diameter >= pi/2; reaction-only mass may appear",
                      stacklevel=2)

    if init_support is not None and cfg.refine:
        pairs = np.asarray(init_support, dtype=int).reshape(-1, 2)
        sol = _refine_from(C, a, b, pairs[:, 0], pairs[:, 1], None, cfg,
                           epsilon=0.0, iterations=0, stage_energies=())
        if sol is not None:
            return sol
        log.info("warm-start forest not certified; falling back to annealing")

    loga, logb = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    eps = cfg.epsilon_start
    total_iters = 0
    all_converged = True
    energies = []
    stage_tol = max(cfg.tol, cfg.seed_tol) if cfg.refine else cfg.tol
    while True:
        f, g, it, ok = _sinkhorn_stage(C, finite, loga, logb, f, g, eps, stage_tol, cfg.max_iters)
        total_iters += it
        all_converged &= ok
        plan = np.exp(_log_plan(C, finite, loga, logb, f, g, eps))
        energies.append(let_objective(plan, a, b, C))
        log.debug("eps=%.3g iters=%d E=%.12g converged=%s", eps, it, energies[-1], ok)
        if eps <= cfg.epsilon_min * (1 + 1e-12):
            break
        eps = max(eps * cfg.epsilon_factor, cfg.epsilon_min)

    if cfg.refine:
        if mu0.dim == 1:
            rows, cols, flow = _staircase(mu0.points[:, 0], mu1.points[:, 0],
                                          plan.sum(axis=1), plan.sum(axis=0))
        else:
            lp = _log_plan(C, finite, loga, logb, f, g, eps)
            rows, cols = _candidate_edges(lp)
            order = np.argsort(-lp[rows, cols], kind="stable")
            rows, cols = rows[order], cols[order]
            flow = np.exp(lp[rows, cols])
        sol = _refine_from(C, a, b, rows, cols, flow, cfg, epsilon=eps,
                           iterations=total_iters, stage_energies=tuple(energies))
        if sol is not None and sol.energy <= energies[-1] + 1e-12:
            return sol
        log.info("exact refinement not certified; returning the entropic plan")

    if not all_converged:
        warnings.warn(f"Sinkhorn hit max_iters={cfg.max_iters} in at least one stage",
                      NonConvergence, stacklevel=2)
    return _finish(plan, a, b, C, eps, total_iters, all_converged, tuple(energies),
                   refined=False, pivots=0)


def _staircase(x: np.ndarray, y: np.ndarray, p: np.ndarray, q: np.ndarray):
    """North-west corner coupling of sorted 1-d marginals.

    Optimal 1-d plans for a convex function of |x - y| are monotone, so the
    staircase of the entropic marginals is a close initial forest.
    """
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    p = p[ix] / p.sum()
    q = q[iy] / q.sum()
    cp = np.concatenate([[0.0], np.cumsum(p)])
    cq = np.concatenate([[0.0], np.cumsum(q)])
    cp[-1] = cq[-1] = 1.0
    # every interval [cp_i, cp_i+1) x [cq_j, cq_j+1) overlap is one edge
    cuts = np.unique(np.concatenate([cp, cq]))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    widths = np.diff(cuts)
    ok = widths > 0
    ri = np.searchsorted(cp, mids[ok], side="right") - 1
    cj = np.searchsorted(cq, mids[ok], side="right") - 1
    return ix[ri], iy[cj], widths[ok] * np.sqrt(p.size * q.size)


def _candidate_edges(lp: np.ndarray, k: int = 8):
    """Top-k entries of the log-plan per row and per column."""
    n0, n1 = lp.shape
    kr = min(k, n1)
    kc = min(k, n0)
    row_top = np.argpartition(-lp, kr - 1, axis=1)[:, :kr]
    col_top = np.argpartition(-lp, kc - 1, axis=0)[:kc, :]
    rows = np.concatenate([np.repeat(np.arange(n0), kr), col_top.ravel()])
    cols = np.concatenate([row_top.ravel(), np.tile(np.arange(n1), kc)])
    keys = np.unique(rows * n1 + cols)
    rows, cols = np.divmod(keys, n1)
    ok = np.isfinite(lp[rows, cols])
    return rows[ok], cols[ok]


def _refine_from(C, a, b, rows, cols, flow, cfg, epsilon, iterations, stage_energies):
    n0, n1 = a.size, b.size
    keep = np.isfinite(C[rows, cols])
    rows, cols = rows[keep], cols[keep]
    if flow is not None:
        flow = flow[keep]
    tree = _forest.spanning_forest(n0, n1, rows, cols)
    rows, cols = rows[tree], cols[tree]
    if flow is None:
        flow = np.sqrt(a[rows] * b[cols]) * np.exp(-0.5 * C[rows, cols])
    else:
        flow = np.maximum(flow[tree], 1e-300)
    rows, cols, flow, _, _, certified, pivots = _forest.refine(
        C, a, b, rows, cols, flow, tol=cfg.refine_tol, max_pivots=cfg.max_pivots)
    if not certified:
        return None
    weights = np.zeros((n0, n1))
    weights[rows, cols] = flow
    return _finish(weights, a, b, C, epsilon, iterations, True, stage_energies,
                   refined=True, pivots=pivots,
                   energy=_sparse_objective(rows, cols, flow, a, b, C))


def _finish(weights, a, b, C, eps, iters, converged, energies, refined, pivots, energy=None):
    coupling = Coupling.from_weights(weights)
    if energy is None:
        energy = let_objective(weights, a, b, C)
    with np.errstate(divide="ignore"):
        u_src = np.where(coupling.source_marginal > 0, a / coupling.source_marginal, np.inf)
        u_tgt = np.where(coupling.target_marginal > 0, b / coupling.target_marginal, np.inf)
    return LetSolution(coupling=coupling, hk_distance=float(np.sqrt(max(energy, 0.0))),
                       u_source=u_src, u_target=u_tgt, epsilon_final=float(eps),
                       iterations=int(iters), converged=bool(converged),
                       energy=float(energy), stage_energies=tuple(energies),
                       refined=refined, pivots=int(pivots), cost=C)


def hk_distance(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cfg: SolverConfig | None = None) -> float:
    return solve_let(mu0, mu1, cfg).hk_distance


def density_factors(sol: LetSolution, mu0: DiscreteMeasure, mu1: DiscreteMeasure):
    """Return ``(u_source, u_target)`` with u = mass / coupling marginal."""
    p = sol.coupling.source_marginal
    q = sol.coupling.target_marginal
    if np.any(p <= 0):
        raise ZeroMarginal(int(np.argmin(p > 0)), "source")
    if np.any(q <= 0):
        raise ZeroMarginal(int(np.argmin(q > 0)), "target")
    return mu0.masses / p, mu1.masses / q


def conditional_weights(sol: LetSolution) -> np.ndarray:
    """Row-normalized coupling P_ij = pi_ij / sum_j pi_ij."""
    p = sol.coupling.source_marginal
    if np.any(p <= 0):
        raise ZeroMarginal(int(np.argmin(p > 0)), "source")
    return sol.coupling.weights / p[:, None]


def barycentric_map(sol: LetSolution, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> np.ndarray:
    """Conditional barycenter of the targets of every source atom, shape (n0, d)."""
    return conditional_weights(sol) @ mu1.points
