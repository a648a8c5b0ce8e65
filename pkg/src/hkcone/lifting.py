"""Lifting measures, geodesics and tangents to the cone, and projecting back."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cone import ConeTangentVec, cone_distance, cone_geodesic_point
from .errors import ApexAtom, AtomMismatch, RadialUnderflow, SingularPartDetected
from .hk_maps import HKTangent, hk_log
from .let_solver import LetSolution, SolverConfig, density_factors, solve_let
from .measures import ConeMeasure, ConePoint, DiscreteMeasure, merge_atoms

log = logging.getLogger(__name__)

RADIUS_FLOOR = 1e-8
# plan entries below this fraction of the total plan mass are not lifted
EDGE_FLOOR = 1e-14


@dataclass(frozen=True)
class ConeTangentField:
    """One cone tangent vector (a_i, b_i) per atom of ``anchored_on``."""

    anchored_on: ConeMeasure
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n, d = len(self.anchored_on), self.anchored_on.dim
        a = np.asarray(self.a, dtype=float).reshape(n, d)
        b = np.asarray(self.b, dtype=float).reshape(n)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def base(self) -> ConePoint:
        lam = self.anchored_on
        return ConePoint(lam.points, lam.radii)

    @property
    def vectors(self) -> ConeTangentVec:
        """All atoms' vectors as one batched ConeTangentVec."""
        return ConeTangentVec(self.base, self.a, self.b)

    def __len__(self) -> int:
        return self.b.shape[0]


def field_norm(V: ConeTangentField) -> float:
    lam = V.anchored_on
    sq = lam.radii**2 * np.sum(V.a**2, axis=1) + V.b**2
    return float(np.sqrt(np.sum(lam.masses * sq)))


def _require_deterministic(lam: ConeMeasure):
    if not lam.deterministic_radial():
        raise AtomMismatch("cone measure has several radii above one base point")


def lift_tangent(u: HKTangent, lam: ConeMeasure) -> ConeTangentField:
    if len(u.anchored_on) != len(lam) or u.anchored_on.dim != lam.dim:
        raise AtomMismatch(f"tangent has {len(u.anchored_on)} atoms, cone measure {len(lam)}")
    _require_deterministic(lam)
    return ConeTangentField(lam, u.v.copy(), 2.0 * u.beta * lam.radii)


def project_tangent(V: ConeTangentField, anchor: DiscreteMeasure | None = None) -> HKTangent:
    """Base tangent (a, b / 2r) anchored on the projection of the cone measure.

    ``anchor`` may supply the projected measure itself so the result is
    anchored on an existing object; it must match atom for atom.
    """
    lam = V.anchored_on
    if np.any(lam.radii <= 0):
        raise ApexAtom("cannot project a tangent at the apex")
    _require_deterministic(lam)
    if anchor is None:
        anchor = DiscreteMeasure(lam.points, lam.masses * lam.radii**2, lam.dim)
    if len(anchor) != len(lam):
        raise AtomMismatch("anchor does not match the cone measure atom for atom")
    return HKTangent(anchor, V.a.copy(), V.b / (2.0 * lam.radii))


def let_lift(mu0: DiscreteMeasure, mu1: DiscreteMeasure, sol: LetSolution):
    """Lift both measures with radii sqrt(u); the cone plan is the LET coupling itself.

    Returns ``(lam0, lam1, cone_plan)`` where lam0 has one atom per source atom
    (mass p_i, radius sqrt(u0_i)) and lam1 one per target atom.
    """
    p = sol.coupling.source_marginal
    q = sol.coupling.target_marginal
    lost = float(mu0.masses[p <= 0].sum() + mu1.masses[q <= 0].sum())
    if lost > 0:
        raise SingularPartDetected(lost)
    u0, u1 = density_factors(sol, mu0, mu1)
    lam0 = ConeMeasure(mu0.points, np.sqrt(u0), p, mu0.dim)
    lam1 = ConeMeasure(mu1.points, np.sqrt(u1), q, mu1.dim)
    return lam0, lam1, sol.coupling


def _plan_edges(sol: LetSolution):
    rows, cols, w = sol.coupling.support()
    keep = w > EDGE_FLOOR * w.sum()
    return rows[keep], cols[keep], w[keep]


def _edge_points(mu0, mu1, sol, t):
    """Cone geodesic points at time t for every lifted plan edge."""
    lam0, lam1, _ = let_lift(mu0, mu1, sol)
    rows, cols, w = _plan_edges(sol)
    z0 = ConePoint(lam0.points[rows], lam0.radii[rows])
    z1 = ConePoint(lam1.points[cols], lam1.radii[cols])
    if t == 0.0:
        z = z0
    elif t == 1.0:
        z = z1
    else:
        z = cone_geodesic_point(t, z0, z1)
    return rows, cols, w, z


def hk_interpolate(mu0: DiscreteMeasure, mu1: DiscreteMeasure, sol: LetSolution, t: float):
    """Point at time t on the HK geodesic, as (base measure, cone measure).

    Every lifted plan edge follows its cone geodesic; the cone measure keeps one
    atom per edge and the base measure merges atoms that land on the same point.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    _, _, w, z = _edge_points(mu0, mu1, sol, t)
    lam_t = ConeMeasure(z.x, z.r, w, mu0.dim)
    keep = z.r > 0
    mu_t, _ = merge_atoms(z.x[keep], (w * z.r**2)[keep], mu0.dim)
    return mu_t, lam_t


@dataclass
class LiftedPath:
    """Isometric lift of a discretized HK geodesic.

    ``measures[k]`` has one atom per atom of ``base_measures[k]``, with mass
    eta_k and radius sqrt(mu_k / eta_k). ``correspondences[k]`` holds the local
    plan edges ``(rows, cols, weights)`` from grid k to grid k + 1.
    """

    times: np.ndarray
    measures: list
    base_measures: list
    tangents: list
    correspondences: list
    local_solutions: list = field(default_factory=list, repr=False)
    global_solution: LetSolution | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def _grid_measures(mu0, mu1, sol, n_steps):
    """Base grid mu_k and, for every global plan edge, its atom index on each grid."""
    rows, cols, w = _plan_edges(sol)
    lam0, lam1, _ = let_lift(mu0, mu1, sol)
    z0 = ConePoint(lam0.points[rows], lam0.radii[rows])
    z1 = ConePoint(lam1.points[cols], lam1.radii[cols])
    grids, owners = [mu0], [rows]
    for k in range(1, n_steps):
        z = cone_geodesic_point(k / n_steps, z0, z1)
        mu_k, inverse = merge_atoms(z.x, w * z.r**2, mu0.dim)
        if len(mu_k) != inverse.max() + 1:
            raise AtomMismatch(f"grid {k}: an atom fell below the mass floor")
        grids.append(mu_k)
        owners.append(inverse)
    grids.append(mu1)
    owners.append(cols)
    return grids, owners


def isometric_lift(mu0: DiscreteMeasure, mu1: DiscreteMeasure, n_steps: int,
                   cfg: SolverConfig | None = None, sol: LetSolution | None = None) -> LiftedPath:
    """Lift the N-step discrete HK geodesic to the cone with a deterministic radial law.

    Particles start on mu0 at radius one. Each step pushes the particle mass
    eta through the local plan as a Markov kernel, and the radius above every
    grid atom is sqrt(mu_k / eta_k). Along an edge where the local map is
    injective this is r_{k+1} = r_k sqrt(u_{k+1}/u_k) exactly, and where several
    particles arrive at one atom it is the eta-weighted mean of their squared
    radii, which keeps the radial law deterministic and the projection exact.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    cfg = cfg or SolverConfig()
    if sol is None:
        sol = solve_let(mu0, mu1, cfg)
    grids, owners = _grid_measures(mu0, mu1, sol, n_steps)
    dt = 1.0 / n_steps

    eta = mu0.masses.copy()
    radii = np.ones(len(mu0))
    measures = [ConeMeasure(mu0.points, radii, eta, mu0.dim)]
    tangents, correspondences, local = [], [], []
    for k in range(n_steps):
        src, dst = grids[k], grids[k + 1]
        pairs = np.unique(np.column_stack([owners[k], owners[k + 1]]), axis=0)
        sol_k = solve_let(src, dst, cfg, init_support=pairs)
        if not sol_k.refined:
            log.info("step %d: local plan is entropic", k)
        u_k = hk_log(src, dst, sol_k, dt, edgewise=cfg.edgewise)
        tangents.append(lift_tangent(u_k, measures[-1]))

        P = sol_k.coupling.weights / sol_k.coupling.source_marginal[:, None]
        eta = eta @ P
        radii = np.sqrt(dst.masses / eta)
        if np.any(~np.isfinite(radii)) or radii.min() < RADIUS_FLOOR:
            raise RadialUnderflow(f"step {k}: lifted radius below {RADIUS_FLOOR}")
        measures.append(ConeMeasure(dst.points, radii, eta, dst.dim))
        correspondences.append(sol_k.coupling.support())
        local.append(sol_k)
    return LiftedPath(times=np.arange(n_steps + 1) * dt, measures=measures,
                      base_measures=grids, tangents=tangents,
                      correspondences=correspondences, local_solutions=local,
                      global_solution=sol)


# ------------------------------------------------------- cone Wasserstein

def _lse(M, axis):
    top = M.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return (np.log(np.sum(np.exp(M - top), axis=axis, keepdims=True)) + top).squeeze(axis)


def cone_wasserstein(lam0: ConeMeasure, lam1: ConeMeasure, eps_min: float = 1e-5,
                     tol: float = 1e-10, max_iters: int = 20000) -> float:
    """Balanced 2-Wasserstein distance on the cone by annealed log-domain Sinkhorn.

    The target masses are rescaled to the source total so small roundoff in the
    lifted marginals does not break balance. Returns sqrt(<D^2, plan>), the
    transport cost of the entropic plan without the entropy term.
    """
    a = lam0.masses
    b = lam1.masses * (a.sum() / lam1.masses.sum())
    z0 = ConePoint(lam0.points[:, None, :], lam0.radii[:, None])
    z1 = ConePoint(lam1.points[None, :, :], lam1.radii[None, :])
    C = cone_distance(z0, z1) ** 2
    scale = max(C.max(), 1e-300)
    Cs = C / scale
    loga, logb = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    eps = 1.0
    while True:
        for _ in range(max_iters):
            f_new = -eps * _lse(logb[None, :] + (g[None, :] - Cs) / eps, axis=1)
            g = -eps * _lse(loga[:, None] + (f_new[:, None] - Cs) / eps, axis=0)
            done = np.max(np.abs(f_new - f)) < tol
            f = f_new
            if done:
                break
        if eps <= eps_min:
            break
        eps = max(eps * 0.5, eps_min)
    plan = np.exp(loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - Cs) / eps)
    return float(np.sqrt(np.sum(plan * C)))
