"""Geometry of the Euclidean metric cone with metric dr^2 + r^2 |dx|^2.

All functions broadcast over leading batch axes: a ``ConePoint`` may hold
``x`` of shape (..., d) and ``r`` of shape (...).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ApexBase, ApexEndpoint, DiameterViolation, DimensionMismatch
from .measures import ConePoint

SMALL_ANGLE = 1e-8
RADIAL_BRANCH = 1e-12


@dataclass(frozen=True)
class ConeTangentVec:
    """Tangent vector a + b d/dr anchored at ``base``."""

    base: ConePoint
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    def __add__(self, other: "ConeTangentVec") -> "ConeTangentVec":
        return ConeTangentVec(self.base, self.a + other.a, self.b + other.b)

    def scale(self, alpha) -> "ConeTangentVec":
        alpha = np.asarray(alpha, dtype=float)
        return ConeTangentVec(self.base, self.a * alpha[..., None], self.b * alpha)


@dataclass(frozen=True)
class ConeGeodesic:
    z0: ConePoint
    z1: ConePoint
    s: np.ndarray
    v0: ConeTangentVec
    q: np.ndarray
    c: np.ndarray
    rdot0: np.ndarray


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def _check_dims(z0: ConePoint, z1: ConePoint):
    if z0.dim != z1.dim:
        raise DimensionMismatch(f"cone points of dimension {z0.dim} and {z1.dim}")


def cone_norm(u: ConeTangentVec) -> np.ndarray:
    r = u.base.r
    return np.sqrt(r**2 * np.sum(u.a**2, axis=-1) + u.b**2)


def cone_inner(u: ConeTangentVec, w: ConeTangentVec) -> np.ndarray:
    r = u.base.r
    return r**2 * np.sum(u.a * w.a, axis=-1) + u.b * w.b


def cone_distance(z0: ConePoint, z1: ConePoint) -> np.ndarray:
    _check_dims(z0, z1)
    theta = np.minimum(_norm(z1.x - z0.x), np.pi)
    # (r0 - r1)^2 + 4 r0 r1 sin^2(theta/2) avoids cancellation near the diagonal
    d2 = (z0.r - z1.r) ** 2 + 4.0 * z0.r * z1.r * np.sin(0.5 * theta) ** 2
    return np.sqrt(d2)


def cone_geodesic_point(s, z0: ConePoint, z1: ConePoint) -> ConePoint:
    """Point at fraction ``s`` of the constant-speed geodesic from z0 to z1.

    The angular fraction is computed as atan2 of the planar chord, which equals
    the arccos form for angles below pi and keeps full precision near 0.
    """
    _check_dims(z0, z1)
    if np.any(z0.r <= 0) or np.any(z1.r <= 0):
        raise ApexEndpoint("cone geodesic endpoints must be off the apex")
    s = np.asarray(s, dtype=float)
    dx = z1.x - z0.x
    theta = _norm(dx)
    if np.any(theta >= np.pi):
        raise DiameterViolation("base points at distance >= pi")
    r0, r1 = z0.r, z1.r
    R = np.sqrt((1 - s) ** 2 * r0**2 + s**2 * r1**2
                + 2 * s * (1 - s) * r0 * r1 * np.cos(theta))
    small = theta < SMALL_ANGLE
    with np.errstate(invalid="ignore", divide="ignore"):
        rho_exact = np.arctan2(s * r1 * np.sin(theta), (1 - s) * r0 + s * r1 * np.cos(theta)) / theta
        rho_small = s * r1 / ((1 - s) * r0 + s * r1)
    rho = np.where(small, rho_small, rho_exact)
    return ConePoint(z0.x + rho[..., None] * dx, R)


def cone_exp(z0: ConePoint, v: ConeTangentVec) -> ConePoint:
    if np.any(z0.r <= 0):
        raise ApexBase("exp at the apex")
    nv = _norm(v.a)
    theta = np.arctan2(z0.r * nv, v.b + z0.r)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(nv[..., None] > 0, v.a / nv[..., None], 0.0)
    r1 = np.sqrt(nv**2 * z0.r**2 + (v.b + z0.r) ** 2)
    return ConePoint(z0.x + theta[..., None] * direction, r1)


def cone_log(z0: ConePoint, z1: ConePoint) -> ConeTangentVec:
    _check_dims(z0, z1)
    if np.any(z0.r <= 0):
        raise ApexBase("log at the apex")
    dx = z1.x - z0.x
    theta = _norm(dx)
    if np.any(theta >= np.pi):
        raise DiameterViolation("base points at distance >= pi")
    # sin(theta)/theta via sinc keeps the theta -> 0 limit exact
    factor = np.sinc(theta / np.pi) * z1.r / z0.r
    a = factor[..., None] * dx
    b = z1.r * np.cos(theta) - z0.r
    return ConeTangentVec(z0, a, b)


FieldFn = Callable[[np.ndarray, float], tuple]


def cone_covariant_derivative(X_field: FieldFn, Y_field: FieldFn, at: ConePoint,
                              h: float = 1e-6) -> ConeTangentVec:
    """Levi-Civita derivative of Y along X at a single cone point.

    Fields map ``(x, r)`` to ``(spatial, radial)``. With X = A + alpha d/dr and
    Y = B + beta d/dr the three cases of the cone connection combine into

        spatial: D_X B + (alpha / r) B + (beta / r) A
        radial:  D_X beta - r <A, B>

    where D_X is the coordinate directional derivative (central differences).
    """
    x = np.asarray(at.x, dtype=float)
    r = float(at.r)
    if r <= 0:
        raise ApexBase("covariant derivative at the apex")
    A, alpha = X_field(x, r)
    A = np.asarray(A, dtype=float)
    B, beta = Y_field(x, r)
    B = np.asarray(B, dtype=float)
    Bp, beta_p = Y_field(x + h * A, r + h * alpha)
    Bm, beta_m = Y_field(x - h * A, r - h * alpha)
    dB = (np.asarray(Bp) - np.asarray(Bm)) / (2 * h)
    dbeta = (beta_p - beta_m) / (2 * h)
    a = dB + (alpha / r) * B + (beta / r) * A
    b = dbeta - r * float(np.dot(A, B))
    return ConeTangentVec(at, a, b)


def curve_acceleration(curve: Callable[[float], ConePoint], t: float, h: float = 1e-4) -> ConeTangentVec:
    """Covariant acceleration of a cone curve from second differences.

    In coordinates this is (p'' + 2 r' p' / r) + (r'' - r |p'|^2) d/dr.
    """
    zm, z0, zp = curve(t - h), curve(t), curve(t + h)
    pdot = (zp.x - zm.x) / (2 * h)
    rdot = (zp.r - zm.r) / (2 * h)
    pddot = (zp.x - 2 * z0.x + zm.x) / h**2
    rddot = (zp.r - 2 * z0.r + zm.r) / h**2
    a = pddot + 2 * rdot / z0.r * pdot
    b = rddot - z0.r * np.sum(pdot**2, axis=-1)
    return ConeTangentVec(z0, a, b)


def make_geodesic(z0: ConePoint, z1: ConePoint) -> ConeGeodesic:
    v0 = cone_log(z0, z1)
    s = cone_distance(z0, z1)
    rdot0 = v0.b
    # angular momentum r0^2 p'(0), conserved along the geodesic
    q = (z0.r**2)[..., None] * v0.a
    c = _norm(q)
    lhs = c**2
    rhs = z0.r**2 * (s**2 - rdot0**2)
    if not np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12 * (1 + np.max(s**2) * np.max(z0.r**2))):
        raise ArithmeticError("angular momentum identity violated")
    return ConeGeodesic(z0, z1, s, v0, q, c, rdot0)


def geodesic_radius(g: ConeGeodesic, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    r0 = g.z0.r
    r2 = g.s**2 * t**2 + 2 * r0 * g.rdot0 * t + r0**2
    return np.sqrt(np.maximum(r2, 0.0))


def geodesic_angle(g: ConeGeodesic, t) -> np.ndarray:
    """Angle swept by the geodesic up to time t.

    arctan((s^2 t + r0 r0')/c) - arctan(r0 r0'/c) collapses, using
    c^2 + (r0 r0')^2 = r0^2 s^2, to atan2(t c, r0^2 + r0 r0' t).
    """
    t = np.asarray(t, dtype=float)
    r0 = g.z0.r
    return np.arctan2(t * g.c, r0**2 + r0 * g.rdot0 * t)


def cone_parallel_transport(g: ConeGeodesic, u0: ConeTangentVec, t) -> ConeTangentVec:
    """Closed-form parallel transport of u0 from g.z0 to the geodesic point at t."""
    t = np.asarray(t, dtype=float)
    r0 = g.z0.r
    rt = geodesic_radius(g, t)
    theta = geodesic_angle(g, t)
    radial = g.c <= RADIAL_BRANCH * g.s**2
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(radial[..., None], 0.0, g.q / g.c[..., None])
    alpha0 = np.sum(u0.a * e, axis=-1)
    a_perp = u0.a - alpha0[..., None] * e
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    along = (r0 * alpha0 * cos_t - u0.b * sin_t) / rt
    a_t = (r0 / rt)[..., None] * a_perp + along[..., None] * e
    b_t = r0 * alpha0 * sin_t + u0.b * cos_t
    a_t = np.where(radial[..., None], (r0 / rt)[..., None] * u0.a, a_t)
    b_t = np.where(radial, u0.b, b_t)
    if np.all(t == 1.0):
        base = g.z1
    elif np.all(t == 0.0):
        base = g.z0
    else:
        base = cone_geodesic_point(t, g.z0, g.z1)
    return ConeTangentVec(base, a_t, b_t)


def cone_pt_ode_oracle(g: ConeGeodesic, u0: ConeTangentVec, t=1.0,
                       step: float = 1e-4) -> ConeTangentVec:
    """Parallel transport by fixed-step RK4 on the geodesic and transport equations.

    The state (p, r, p', r', a, b) obeys
        p'' = -2 r' p' / r,    r'' = r |p'|^2,
        a'  = -(r'/r) a - (b/r) p',    b' = r <a, p'>,
    started from the initial velocity cone_log(z0, z1). The geodesic is
    integrated alongside the transport, so the closed-form radius and angle
    formulas are not used.
    """
    x0 = np.asarray(g.z0.x, dtype=float)
    r0 = np.asarray(g.z0.r, dtype=float)
    state = [x0.copy(), r0.copy(), np.asarray(g.v0.a, dtype=float).copy(),
             np.asarray(g.v0.b, dtype=float).copy(),
             np.asarray(u0.a, dtype=float).copy(), np.asarray(u0.b, dtype=float).copy()]

    def rhs(s):
        p, r, pd, rd, a, b = s
        dpd = -2 * (rd / r)[..., None] * pd
        drd = r * np.sum(pd * pd, axis=-1)
        da = -(rd / r)[..., None] * a - (b / r)[..., None] * pd
        db = r * np.sum(a * pd, axis=-1)
        return [pd, rd, dpd, drd, da, db]

    # an array t integrates every batch element to its own end time with a
    # common step count, so the step is at most ``step`` for all of them
    t = np.asarray(t, dtype=float)
    tmax = float(np.max(np.abs(t))) if t.size else 0.0
    nsteps = int(np.ceil(tmax / step)) if tmax > 0 else 0
    h = t / nsteps if nsteps else np.zeros_like(t)

    def axpy(s, k, c):
        return s + (c[..., None] if np.ndim(s) > np.ndim(c) else c) * k

    for _ in range(nsteps):
        k1 = rhs(state)
        k2 = rhs([axpy(s, k, 0.5 * h) for s, k in zip(state, k1)])
        k3 = rhs([axpy(s, k, 0.5 * h) for s, k in zip(state, k2)])
        k4 = rhs([axpy(s, k, h) for s, k in zip(state, k3)])
        state = [axpy(s, d1 + 2 * d2 + 2 * d3 + d4, h / 6)
                 for s, d1, d2, d3, d4 in zip(state, k1, k2, k3, k4)]
    p, r, _, _, a, b = state
    return ConeTangentVec(ConePoint(p, r), a, b)
