"""Logarithmic and exponential maps of the HK geometry on discrete measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AtomMismatch, NegativeRatio
from .let_solver import LetSolution, conditional_weights, density_factors
from .measures import DiscreteMeasure, _header, _read_table, _spatial_columns, _write_table

# below this spatial speed the transport direction is undefined and v = 0
V_ZERO = 1e-14
# density ratios below this indicate a broken coupling
RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class HKTangent:
    """Tangent (v, beta) at a discrete measure: one velocity and one growth rate per atom."""

    anchored_on: DiscreteMeasure
    v: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        n, d = len(self.anchored_on), self.anchored_on.dim
        v = np.asarray(self.v, dtype=float)
        if v.ndim == 1 and d == 1:
            v = v.reshape(-1, 1)
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if v.shape != (n, d) or beta.shape != (n,):
            raise AtomMismatch(
                f"tangent shapes v{v.shape}, beta{beta.shape} do not fit {n} atoms in dimension {d}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls, mu: DiscreteMeasure) -> "HKTangent":
        return cls(mu, np.zeros((len(mu), mu.dim)), np.zeros(len(mu)))

    def __add__(self, other: "HKTangent") -> "HKTangent":
        if other.anchored_on is not self.anchored_on and len(other.anchored_on) != len(self.anchored_on):
            raise AtomMismatch("tangents anchored on different measures")
        return HKTangent(self.anchored_on, self.v + other.v, self.beta + other.beta)

    def scale(self, alpha: float) -> "HKTangent":
        return HKTangent(self.anchored_on, alpha * self.v, alpha * self.beta)


def hk_norm(u: HKTangent) -> float:
    a = u.anchored_on.masses
    return float(np.sqrt(np.sum(a * (np.sum(u.v**2, axis=1) + 4.0 * u.beta**2))))


def hk_inner(u: HKTangent, w: HKTangent) -> float:
    a = u.anchored_on.masses
    return float(np.sum(a * (np.sum(u.v * w.v, axis=1) + 4.0 * u.beta * w.beta)))


def _log_components(x, y, ratio, dt):
    """Per-pair (v, beta) for moving x to y with density ratio u1/u0."""
    if np.any(ratio < RATIO_FLOOR) or np.any(~np.isfinite(ratio)):
        raise NegativeRatio("density ratio u1/u0 is not positive; the coupling is broken")
    q = np.sqrt(ratio)
    diff = y - x
    L = np.sqrt(np.sum(diff**2, axis=1))
    # (y - x)/L * sin L, with the L -> 0 limit handled by sinc
    v = diff * (np.sinc(L / np.pi) * q / dt)[:, None]
    beta = (q * np.cos(L) - 1.0) / (2.0 * dt)
    return v, beta


def hk_log(mu0: DiscreteMeasure, mu1: DiscreteMeasure, sol: LetSolution,
           dt: float = 1.0, edgewise: bool = True) -> HKTangent:
    """Tangent at mu0 pointing along the HK geodesic to mu1, divided by ``dt``.

    With ``edgewise`` the per-edge tangents over the coupling support are
    averaged with the conditional weights pi_ij / p_i. Otherwise the target is
    the barycentric image, and its density factor is the conditional average of
    the target factors.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u_src, u_tgt = density_factors(sol, mu0, mu1)
    P = conditional_weights(sol)
    X, Y = mu0.points, mu1.points
    if edgewise:
        rows, cols = np.nonzero(P > 0)
        v_e, b_e = _log_components(X[rows], Y[cols], u_tgt[cols] / u_src[rows], dt)
        w = P[rows, cols]
        n = len(mu0)
        v = np.column_stack([np.bincount(rows, weights=w * v_e[:, k], minlength=n)
                             for k in range(mu0.dim)])
        beta = np.bincount(rows, weights=w * b_e, minlength=n)
    else:
        ybar = P @ Y
        u_bar = P @ u_tgt
        v, beta = _log_components(X, ybar, u_bar / u_src, dt)
    return HKTangent(mu0, v, beta)


def hk_exp(mu0: DiscreteMeasure, u: HKTangent, t: float = 1.0, return_dropped: bool = False):
    """Push mu0 along the HK geodesic with initial tangent u for time t.

    Atoms whose amplitude (t|v|, 1 + 2 t beta) vanishes carry no mass at time
    t and are removed; ``return_dropped=True`` also returns how many were.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if len(u.anchored_on) != len(mu0):
        raise AtomMismatch("tangent is not anchored on mu0")
    speed = np.sqrt(np.sum(u.v**2, axis=1))
    a_t = t * speed
    b_t = 1.0 + 2.0 * t * u.beta
    q2 = a_t**2 + b_t**2
    phi = np.arctan2(a_t, b_t)
    moving = speed >= V_ZERO
    direction = np.zeros_like(u.v)
    direction[moving] = u.v[moving] / speed[moving, None]
    points = mu0.points + direction * phi[:, None]
    masses = mu0.masses * q2
    alive = np.sqrt(q2) >= V_ZERO
    out = DiscreteMeasure(points[alive], masses[alive], mu0.dim)
    if return_dropped:
        return out, int(np.count_nonzero(~alive))
    return out


# ---------------------------------------------------------------- CSV format

def save_tangent_csv(path, u: HKTangent) -> None:
    mu = u.anchored_on
    header = _header("x", mu.dim) + ["mass"] + _header("v", mu.dim) + ["beta"]
    _write_table(path, header, np.column_stack([mu.points, mu.masses, u.v, u.beta]))


def load_tangent_csv(path) -> HKTangent:
    header, data = _read_table(path)
    d = _spatial_columns(header, "x")
    expected = _header("x", d) + ["mass"] + _header("v", d) + ["beta"]
    if header != expected:
        raise ValueError(f"{path}: expected columns {','.join(expected)}")
    masses = data[:, d]
    if np.any(masses <= 0):
        raise ValueError(f"{path}: masses must be positive")
    mu = DiscreteMeasure(data[:, :d], masses, d)
    if len(mu) != data.shape[0]:
        raise ValueError(f"{path}: atoms with negligible mass cannot carry a tangent")
    return HKTangent(mu, data[:, d + 1:2 * d + 1], data[:, 2 * d + 1])
