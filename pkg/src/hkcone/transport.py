"""Approximate HK parallel transport through the isometric cone lift."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cone import ConeTangentVec, cone_parallel_transport, make_geodesic
from .errors import AtomMismatch, ZeroIncomingMass
from .hk_maps import HKTangent, hk_norm
from .let_solver import LetSolution, SolverConfig, solve_let
from .lifting import ConeTangentField, LiftedPath, field_norm, isometric_lift, lift_tangent, project_tangent
from .measures import ConePoint, DiscreteMeasure

# aggregation denominators below this mean no mass reaches the atom
INCOMING_FLOOR = 1e-15


@dataclass
class TransportResult:
    transported: HKTangent
    per_step_norms: list
    n_steps: int
    dropped_mass: float = 0.0
    path: LiftedPath | None = field(default=None, repr=False)


def _transport_edges(lam_src, lam_dst, U: ConeTangentField, rows, cols):
    """Cone PT of U at every edge source to the edge target, one geodesic per edge."""
    z0 = ConePoint(lam_src.points[rows], lam_src.radii[rows])
    z1 = ConePoint(lam_dst.points[cols], lam_dst.radii[cols])
    a = U.a[rows]
    b = U.b[rows]
    same = np.all(z0.x == z1.x, axis=1) & (z0.r == z1.r)
    out_a, out_b = a.copy(), b.copy()
    move = ~same
    if move.any():
        g = make_geodesic(ConePoint(z0.x[move], z0.r[move]), ConePoint(z1.x[move], z1.r[move]))
        u0 = ConeTangentVec(g.z0, a[move], b[move])
        ut = cone_parallel_transport(g, u0, 1.0)
        out_a[move] = ut.a
        out_b[move] = ut.b
    return out_a, out_b


def transport_step(lam_src, lam_dst, U: ConeTangentField, correspondence) -> ConeTangentField:
    """One aggregation step: edgewise cone PT, then the eta-weighted mean per target atom."""
    rows, cols, w = correspondence
    n_src, n_dst = len(lam_src), len(lam_dst)
    p = np.bincount(rows, weights=w, minlength=n_src)
    m = lam_src.masses[rows] * w / p[rows]
    # sort by target, then source, so the weighted sums run in a fixed order
    order = np.lexsort((rows, cols))
    rows, cols, m = rows[order], cols[order], m[order]
    a_e, b_e = _transport_edges(lam_src, lam_dst, U, rows, cols)
    denom = np.bincount(cols, weights=m, minlength=n_dst)
    if np.any(denom < INCOMING_FLOOR):
        raise ZeroIncomingMass(int(np.argmax(denom < INCOMING_FLOOR)))
    a = np.column_stack([np.bincount(cols, weights=m * a_e[:, k], minlength=n_dst)
                         for k in range(lam_dst.dim)]) / denom[:, None]
    b = np.bincount(cols, weights=m * b_e, minlength=n_dst) / denom
    return ConeTangentField(lam_dst, a, b)


def hk_parallel_transport(mu0: DiscreteMeasure, mu1: DiscreteMeasure, u0: HKTangent,
                          n_steps: int, cfg: SolverConfig | None = None,
                          path: LiftedPath | None = None,
                          sol: LetSolution | None = None) -> TransportResult:
    """Transport u0 (a tangent at mu0) along the HK geodesic to mu1 in ``n_steps`` steps.

    The tangent is lifted onto the isometric lift, carried edge by edge with
    the closed-form cone transport, averaged over incoming edges, and
    projected back at the end. A precomputed ``path`` may be passed to reuse
    the lift for several tangents.
    """
    if len(u0.anchored_on) != len(mu0):
        raise AtomMismatch("u0 is not anchored on mu0")
    if path is None:
        path = isometric_lift(mu0, mu1, n_steps, cfg, sol=sol)
    elif path.n_steps != n_steps:
        raise ValueError("path has a different number of steps")
    U = lift_tangent(u0, path.measures[0])
    norms = [field_norm(U)]
    for k in range(n_steps):
        U = transport_step(path.measures[k], path.measures[k + 1], U, path.correspondences[k])
        norms.append(field_norm(U))
    transported = project_tangent(U, anchor=mu1)
    dropped = float(mu1.masses.sum() - path.base_measures[-1].masses.sum())
    return TransportResult(transported=transported, per_step_norms=norms, n_steps=n_steps,
                           dropped_mass=abs(dropped), path=path)


def tangent_distance(u: HKTangent, w: HKTangent) -> float:
    """HK-metric norm of u - w for two tangents on the same anchor."""
    if len(u.anchored_on) != len(w.anchored_on):
        raise AtomMismatch("tangents live on different anchors")
    return hk_norm(HKTangent(u.anchored_on, u.v - w.v, u.beta - w.beta))


def transport_convergence_study(mu0: DiscreteMeasure, mu1: DiscreteMeasure, u0: HKTangent,
                                n_list, cfg: SolverConfig | None = None,
                                reference_factor: int = 4):
    """Deviation of the N-step transport from a fine reference, with halving ratios.

    Returns a list of dicts with keys ``n_steps``, ``deviation`` and ``ratio``
    (deviation(N) / deviation(2N) when 2N is also in the list, else None; nan
    when both deviations are zero),
    plus the reference result.
    """
    n_list = [int(n) for n in n_list]
    if n_list != sorted(n_list) or not n_list or n_list[0] < 1:
        raise ValueError("n_list must be ascending positive integers")
    cfg = cfg or SolverConfig()
    sol = solve_let(mu0, mu1, cfg)
    n_ref = reference_factor * max(n_list)
    ref = hk_parallel_transport(mu0, mu1, u0, n_ref, cfg, sol=sol)
    devs = {}
    for n in n_list:
        res = hk_parallel_transport(mu0, mu1, u0, n, cfg, sol=sol)
        devs[n] = tangent_distance(res.transported, ref.transported)
    table = []
    for n in n_list:
        ratio = None
        if 2 * n in devs:
            num, den = devs[n], devs[2 * n]
            if den > 0:
                ratio = num / den
            else:
                ratio = float("nan") if num == 0 else float("inf")
        table.append({"n_steps": n, "deviation": devs[n], "ratio": ratio})
    return table, ref
