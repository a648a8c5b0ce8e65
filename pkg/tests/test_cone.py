import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkcone import (ApexBase, ApexEndpoint, ConePoint, ConeTangentVec, DiameterViolation,
                    DimensionMismatch, cone_covariant_derivative, cone_distance, cone_exp,
                    cone_geodesic_point, cone_log, cone_norm, cone_parallel_transport,
                    cone_pt_ode_oracle, make_geodesic)
from hkcone.cone import geodesic_radius


def random_pairs(rng, n, d=2, max_angle=1.4):
    x0 = rng.uniform(-1, 1, (n, d))
    direction = rng.normal(size=(n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    x1 = x0 + direction * rng.uniform(0.01, max_angle, (n, 1))
    return (ConePoint(x0, rng.uniform(0.2, 2.0, n)), ConePoint(x1, rng.uniform(0.2, 2.0, n)))


def velocity_fd(z0, z1, t, h=1e-5):
    zp, zm = cone_geodesic_point(t + h, z0, z1), cone_geodesic_point(t - h, z0, z1)
    return (zp.x - zm.x) / (2 * h), (zp.r - zm.r) / (2 * h)


# ------------------------------------------------------------------ distance

def test_distance_examples():
    z = ConePoint([0.3], 1.2)
    assert cone_distance(z, z) == 0.0
    assert cone_distance(ConePoint([0.0], 1.0), ConePoint([0.0], 3.0)) == pytest.approx(2.0)
    assert cone_distance(ConePoint([0.0], 1.0), ConePoint([np.pi / 2], 1.0)) == pytest.approx(np.sqrt(2))


def test_distance_saturates_beyond_pi():
    far = cone_distance(ConePoint([0.0], 1.0), ConePoint([4.0], 2.0))
    assert far == pytest.approx(3.0)


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cone_distance(ConePoint([0.0], 1.0), ConePoint([0.0, 0.0], 1.0))


def test_distance_symmetric(rng):
    z0, z1 = random_pairs(rng, 50)
    np.testing.assert_allclose(cone_distance(z0, z1), cone_distance(z1, z0), rtol=1e-14)


# ------------------------------------------------------------------ geodesics

def test_geodesic_endpoints(rng):
    z0, z1 = random_pairs(rng, 20)
    a, b = cone_geodesic_point(0.0, z0, z1), cone_geodesic_point(1.0, z0, z1)
    np.testing.assert_allclose(a.x, z0.x, atol=1e-14)
    np.testing.assert_allclose(a.r, z0.r, rtol=1e-14)
    np.testing.assert_allclose(b.x, z1.x, atol=1e-13)
    np.testing.assert_allclose(b.r, z1.r, rtol=1e-13)


def test_geodesic_midpoint_example():
    z = cone_geodesic_point(0.5, ConePoint([0.0], 1.0), ConePoint([np.pi / 2], 1.0))
    assert z.x[0] == pytest.approx(np.pi / 4, abs=1e-14)
    assert z.r == pytest.approx(np.sqrt(2) / 2, abs=1e-14)


def test_geodesic_constant_speed(rng):
    z0, z1 = random_pairs(rng, 30)
    D = cone_distance(z0, z1)
    grid = np.linspace(0, 1, 7)
    for s in grid:
        for t in grid:
            d = cone_distance(cone_geodesic_point(s, z0, z1), cone_geodesic_point(t, z0, z1))
            assert np.all(np.abs(d - abs(t - s) * D) <= 1e-10 * (1 + D))


def test_small_angle_fallback_matches_arccos_form():
    # arccos near 1 loses half the digits in double precision, so the exact
    # form is evaluated with 50 significant digits
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    r0, r1, theta = 0.7, 1.9, 1e-6
    z0, z1 = ConePoint([0.0], r0), ConePoint([theta], r1)
    for s in (0.1, 0.5, 0.9):
        m = mpmath.mpf
        R = mpmath.sqrt((1 - m(s)) ** 2 * m(r0) ** 2 + m(s) ** 2 * m(r1) ** 2
                        + 2 * m(s) * (1 - m(s)) * m(r0) * m(r1) * mpmath.cos(m(theta)))
        rho = float(mpmath.acos(((1 - m(s)) * m(r0) + m(s) * m(r1) * mpmath.cos(m(theta))) / R) / m(theta))
        fallback = s * r1 / ((1 - s) * r0 + s * r1)
        assert abs(fallback - rho) <= 1e-8
        got = cone_geodesic_point(s, z0, z1).x[0] / theta
        assert abs(got - rho) <= 1e-8


def test_geodesic_preconditions():
    with pytest.raises(ApexEndpoint):
        cone_geodesic_point(0.5, ConePoint([0.0], 0.0), ConePoint([0.1], 1.0))
    with pytest.raises(DiameterViolation):
        cone_geodesic_point(0.5, ConePoint([0.0], 1.0), ConePoint([3.5], 1.0))


# ------------------------------------------------------------------ exp / log

def test_exp_examples():
    z = ConePoint([0.4], 1.0)
    out = cone_exp(z, ConeTangentVec(z, [0.0], 0.5))
    assert out.x[0] == pytest.approx(0.4) and out.r == pytest.approx(1.5)
    out = cone_exp(z, ConeTangentVec(z, [0.0], 0.0))
    assert out.x[0] == 0.4 and out.r == 1.0
    with pytest.raises(ApexBase):
        cone_exp(ConePoint([0.0], 0.0), ConeTangentVec(ConePoint([0.0], 0.0), [1.0], 0.0))


def test_log_examples():
    z = ConePoint([0.4, 0.1], 1.3)
    v = cone_log(z, z)
    assert np.all(v.a == 0) and v.b == 0
    v = cone_log(ConePoint([0.2], 1.0), ConePoint([0.2], 3.0))
    assert v.a[0] == 0 and v.b == pytest.approx(2.0)
    with pytest.raises(ApexBase):
        cone_log(ConePoint([0.0, 0.0], 0.0), z)


def test_log_norm_is_distance(rng):
    z0, z1 = random_pairs(rng, 200, max_angle=3.0)
    np.testing.assert_allclose(cone_norm(cone_log(z0, z1)), cone_distance(z0, z1), atol=1e-10)


def test_exp_log_roundtrip(rng):
    n, d = 200, 3
    z = ConePoint(rng.uniform(-1, 1, (n, d)), rng.uniform(0.2, 2.0, n))
    v = ConeTangentVec(z, rng.normal(size=(n, d)) * 0.6, rng.normal(size=n) * 0.5)
    w = cone_log(z, cone_exp(z, v))
    np.testing.assert_allclose(w.a, v.a, atol=1e-10)
    np.testing.assert_allclose(w.b, v.b, atol=1e-10)
    z0, z1 = random_pairs(rng, 200, d=3, max_angle=3.0)
    back = cone_exp(z0, cone_log(z0, z1))
    np.testing.assert_allclose(back.x, z1.x, atol=1e-10)
    np.testing.assert_allclose(back.r, z1.r, atol=1e-10)


# ------------------------------------------------------ covariant derivative

def test_covariant_derivative_examples():
    at = ConePoint(np.array([0.3, -0.2]), 1.7)
    d_r = lambda x, r: (np.zeros(2), 1.0)
    X = lambda x, r: (np.array([0.4, 0.9]), 0.0)
    Y = lambda x, r: (np.array([-1.0, 0.5]), 0.0)
    out = cone_covariant_derivative(d_r, d_r, at)
    assert np.allclose(out.a, 0) and out.b == pytest.approx(0.0, abs=1e-12)
    out = cone_covariant_derivative(d_r, X, at)
    np.testing.assert_allclose(out.a, np.array([0.4, 0.9]) / 1.7, rtol=1e-12)
    out = cone_covariant_derivative(X, d_r, at)
    np.testing.assert_allclose(out.a, np.array([0.4, 0.9]) / 1.7, rtol=1e-12)
    out = cone_covariant_derivative(X, Y, at)
    assert out.b == pytest.approx(-1.7 * (0.4 * -1.0 + 0.9 * 0.5), rel=1e-12)


def geodesic_residual(z0, z1, t):
    """|nabla_gamma' gamma'| at gamma(t), through the field Y(z) = -log_z(z0).

    Along the geodesic Y = t gamma', so nabla_X Y = X + t nabla_X X with X = gamma'.
    """
    zt = cone_geodesic_point(t, z0, z1)
    vx, vr = velocity_fd(z0, z1, t)
    X = lambda x, r: (vx, float(vr))

    def Y(x, r):
        w = cone_log(ConePoint(x, r), z0)
        return -w.a, -float(w.b)

    nab = cone_covariant_derivative(X, Y, ConePoint(zt.x, float(zt.r)))
    acc = ConeTangentVec(nab.base, (nab.a - vx) / t, (nab.b - vr) / t)
    return float(cone_norm(acc))


def test_geodesic_equation_residual(rng):
    for _ in range(10):
        z0, z1 = random_pairs(rng, 1)
        z0, z1 = ConePoint(z0.x[0], float(z0.r[0])), ConePoint(z1.x[0], float(z1.r[0]))
        for t in (0.25, 0.5, 0.75):
            assert geodesic_residual(z0, z1, t) <= 1e-5


# ------------------------------------------------------------ geodesic data

def test_make_geodesic_examples():
    g = make_geodesic(ConePoint([0.5], 1.0), ConePoint([0.5], 2.5))
    assert np.all(g.q == 0) and g.c == 0
    g = make_geodesic(ConePoint([0.0], 1.0), ConePoint([np.pi / 2], 1.0))
    assert g.s == pytest.approx(np.sqrt(2))
    assert g.rdot0 == pytest.approx(-1.0)
    assert g.c**2 == pytest.approx(1.0)


def test_radius_endpoint_and_invariant(rng):
    z0, z1 = random_pairs(rng, 100)
    g = make_geodesic(z0, z1)
    np.testing.assert_allclose(geodesic_radius(g, 1.0) ** 2, z1.r**2, rtol=1e-9)
    np.testing.assert_allclose(g.c**2, z0.r**2 * (g.s**2 - g.rdot0**2), rtol=1e-9, atol=1e-12)
    for t in (0.1, 0.5, 0.9):
        px, _ = velocity_fd(z0, z1, t)
        rt = cone_geodesic_point(t, z0, z1).r
        assert np.max(np.linalg.norm(rt[:, None] ** 2 * px - g.q, axis=1)) <= 1e-7


# ------------------------------------------------------- parallel transport

def test_transport_at_zero_is_identity(rng):
    z0, z1 = random_pairs(rng, 10)
    g = make_geodesic(z0, z1)
    u = ConeTangentVec(z0, rng.normal(size=(10, 2)), rng.normal(size=10))
    for out in (cone_parallel_transport(g, u, 0.0), cone_pt_ode_oracle(g, u, 0.0)):
        np.testing.assert_allclose(out.a, u.a, atol=1e-15)
        np.testing.assert_allclose(out.b, u.b, atol=1e-15)


def test_transport_of_velocity_is_velocity(rng):
    z0, z1 = random_pairs(rng, 30)
    g = make_geodesic(z0, z1)
    for t in (0.2, 0.5, 0.8):
        moved = cone_parallel_transport(g, g.v0, t)
        vx, vr = velocity_fd(z0, z1, t)
        np.testing.assert_allclose(moved.a, vx, atol=1e-9)
        np.testing.assert_allclose(moved.b, vr, atol=1e-9)


def test_transport_isometry_and_linearity(rng):
    n = 100
    z0, z1 = random_pairs(rng, n)
    g = make_geodesic(z0, z1)
    u = ConeTangentVec(z0, rng.normal(size=(n, 2)), rng.normal(size=n))
    w = ConeTangentVec(z0, rng.normal(size=(n, 2)), rng.normal(size=n))
    for t in (0.3, 1.0):
        pu, pw = cone_parallel_transport(g, u, t), cone_parallel_transport(g, w, t)
        np.testing.assert_allclose(cone_norm(pu), cone_norm(u), atol=1e-10)
        combo = cone_parallel_transport(g, u.scale(np.full(n, 2.5)) + w, t)
        np.testing.assert_allclose(combo.a, 2.5 * pu.a + pw.a, atol=1e-12)
        np.testing.assert_allclose(combo.b, 2.5 * pu.b + pw.b, atol=1e-12)


def test_radial_branch():
    z0, z1 = ConePoint([0.2], 0.5), ConePoint([0.2], 2.0)
    g = make_geodesic(z0, z1)
    u = ConeTangentVec(z0, [0.3], -0.4)
    out = cone_parallel_transport(g, u, 1.0)
    assert out.a[0] == pytest.approx(0.3 * 0.5 / 2.0)
    assert out.b == pytest.approx(-0.4)


def test_figure_configuration_matches_oracle():
    z0, z1 = ConePoint([1.0], 0.5), ConePoint([3.0], 1.0)
    g = make_geodesic(z0, z1)
    u = ConeTangentVec(z0, [0.0], 0.75)
    for t in (0.25, 0.5, 0.75, 1.0):
        closed = cone_parallel_transport(g, u, t)
        ode = cone_pt_ode_oracle(g, u, t)
        assert abs(closed.a[0] - ode.a[0]) <= 1e-6
        assert abs(closed.b - ode.b) <= 1e-6
        assert abs(cone_norm(ode) - 0.75) <= 1e-8


def test_oracle_agrees_on_random_pairs(rng):
    n = 100
    z0, z1 = random_pairs(rng, n, max_angle=2.5)
    g = make_geodesic(z0, z1)
    u = ConeTangentVec(z0, rng.normal(size=(n, 2)), rng.normal(size=n))
    closed, ode = cone_parallel_transport(g, u, 1.0), cone_pt_ode_oracle(g, u, 1.0)
    assert np.max(np.abs(closed.a - ode.a)) <= 1e-6
    assert np.max(np.abs(closed.b - ode.b)) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.0, 3.0), st.floats(-2, 2), st.floats(-2, 2))
def test_transport_norm_property(r0, r1, angle, a, b):
    z0, z1 = ConePoint([0.0], r0), ConePoint([angle], r1)
    g = make_geodesic(z0, z1)
    u = ConeTangentVec(z0, [a], b)
    out = cone_parallel_transport(g, u, 1.0)
    assert abs(cone_norm(out) - cone_norm(u)) <= 1e-10 * (1 + cone_norm(u))
