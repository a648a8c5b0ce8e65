import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkcone import (DimensionMismatch, DiscreteMeasure, EmptyMeasure, NoFeasiblePair,
                    NonConvergence, SolverConfig, ZeroMarginal, barycentric_map, cost_matrix,
                    density_factors, ground_cost, hk_distance, let_objective, solve_let)
from hkcone.let_solver import conditional_weights

from .conftest import random_measure
from .oracles import dirac_pair_energy, let_energy_lbfgs

# L-BFGS-B minima over the full coupling (oracles.let_energy_lbfgs); a conic
# solve of the same problems agrees to 5e-8
FROZEN_1D = 0.339051570514633
FROZEN_2D = 0.556529899659368


def dirac(x, m, dim=1):
    return DiscreteMeasure(np.full((1, dim), x), [m], dim)


def closed_form_sq(m0, m1, L):
    # m0 + m1 - 2 sqrt(m0 m1) cos L without cancellation at small L
    return (np.sqrt(m0) - np.sqrt(m1)) ** 2 + 4 * np.sqrt(m0 * m1) * np.sin(L / 2) ** 2


def test_ground_cost():
    assert ground_cost(0.0, 0.0) == 0.0
    assert ground_cost(0.0, 0.5) == pytest.approx(-2 * np.log(np.cos(0.5)))
    assert ground_cost([0.0], [np.pi / 2]) == np.inf
    C = cost_matrix(np.array([[0.0], [1.0]]), np.array([[0.0], [2.0]]))
    assert C[0, 1] == np.inf and C[1, 0] == pytest.approx(-2 * np.log(np.cos(1.0)))


def test_dirac_pair_closed_form():
    for m0, m1, L in [(1.0, 4.0, 0.0), (2.0, 3.0, 0.7), (0.5, 0.5, 1.2)]:
        sol = solve_let(dirac(0.0, m0), dirac(L, m1))
        assert sol.hk_distance**2 == pytest.approx(closed_form_sq(m0, m1, L), rel=1e-12)
        assert sol.coupling.weights[0, 0] == pytest.approx(np.sqrt(m0 * m1) * np.cos(L), rel=1e-10)
        assert sol.hk_distance**2 == pytest.approx(dirac_pair_energy(m0, m1, L), rel=1e-8)


def test_dirac_pair_beyond_reach_is_pure_reaction():
    with pytest.raises(NoFeasiblePair):
        solve_let(dirac(0.0, 1.0), dirac(2.0, 1.0))


def test_frozen_small_instances():
    X = np.array([[0.0], [0.4], [1.1]])
    Y = np.array([[0.2], [0.9]])
    sol = solve_let(DiscreteMeasure(X, [1.0, 2.0, 0.5]), DiscreteMeasure(Y, [1.5, 1.0]))
    assert sol.energy == pytest.approx(FROZEN_1D, rel=1e-9)
    X = np.array([[0.0, 0.0], [0.3, 0.5], [-0.4, 0.2]])
    Y = np.array([[0.1, 0.1], [0.5, -0.2], [-0.3, 0.6]])
    sol = solve_let(DiscreteMeasure(X, [0.7, 1.3, 1.0]), DiscreteMeasure(Y, [2.0, 0.4, 0.9]))
    assert sol.energy == pytest.approx(FROZEN_2D, rel=1e-9)


def test_matches_quasi_newton_oracle(rng):
    for _ in range(5):
        A = random_measure(rng, 3, dim=2, spread=0.5)
        B = random_measure(rng, 3, dim=2, spread=0.5)
        sol = solve_let(A, B)
        ref = let_energy_lbfgs(A.points, A.masses, B.points, B.masses)
        # the oracle is an upper bound up to its own convergence slack
        assert sol.energy <= ref + 1e-9
        assert sol.energy == pytest.approx(ref, rel=1e-6)


def test_self_distance_and_symmetry(rng):
    A = random_measure(rng, 15, dim=2)
    B = random_measure(rng, 12, dim=2, center=0.2)
    assert hk_distance(A, A) <= 1e-6
    assert abs(hk_distance(A, B) - hk_distance(B, A)) <= 1e-6


def test_objective_matches_reported_energy(rng):
    A, B = random_measure(rng, 8), random_measure(rng, 9, center=0.1)
    sol = solve_let(A, B)
    E = let_objective(sol.coupling.weights, A.masses, B.masses, cost_matrix(A.points, B.points))
    assert E == pytest.approx(sol.energy, rel=1e-12)
    assert sol.refined and sol.converged


def test_entropic_path_without_refinement(rng):
    A, B = random_measure(rng, 10), random_measure(rng, 10, center=0.1)
    exact = solve_let(A, B)
    cfg = SolverConfig(refine=False, epsilon_min=1e-4)
    ent = solve_let(A, B, cfg)
    assert not ent.refined and ent.converged
    assert ent.epsilon_final == pytest.approx(1e-4)
    assert ent.energy >= exact.energy - 1e-12
    assert ent.energy == pytest.approx(exact.energy, rel=1e-2)
    E = np.array(ent.stage_energies)
    assert np.all(np.diff(E) <= 1e-12)


def test_nonconvergence_warns(rng):
    A, B = random_measure(rng, 10), random_measure(rng, 10, center=0.1)
    with pytest.warns(NonConvergence):
        solve_let(A, B, SolverConfig(refine=False, max_iters=1))


def test_warm_start_matches_cold_solve(rng):
    A, B = random_measure(rng, 12), random_measure(rng, 14, center=0.1)
    cold = solve_let(A, B)
    rows, cols, _ = cold.coupling.support()
    warm = solve_let(A, B, init_support=np.column_stack([rows, cols]))
    assert warm.epsilon_final == 0.0 and warm.iterations == 0
    assert warm.energy == pytest.approx(cold.energy, rel=1e-12)


def test_input_errors():
    with pytest.raises(EmptyMeasure):
        solve_let(DiscreteMeasure.empty(1), dirac(0.0, 1.0))
    with pytest.raises(DimensionMismatch):
        solve_let(dirac(0.0, 1.0), dirac(0.0, 1.0, dim=2))
    with pytest.raises(ValueError):
        SolverConfig(epsilon_min=1.0, epsilon_start=0.1)


def test_density_factors_and_barycenter(rng):
    A, B = random_measure(rng, 6), random_measure(rng, 7, center=0.1)
    sol = solve_let(A, B)
    u0, u1 = density_factors(sol, A, B)
    np.testing.assert_allclose(u0 * sol.coupling.source_marginal, A.masses, rtol=1e-14)
    np.testing.assert_allclose(u1 * sol.coupling.target_marginal, B.masses, rtol=1e-14)
    P = conditional_weights(sol)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, rtol=1e-12)
    ybar = barycentric_map(sol, A, B)
    assert ybar.shape == (6, 1)
    assert np.all((ybar >= B.points.min() - 1e-12) & (ybar <= B.points.max() + 1e-12))


def test_zero_marginal_is_reported():
    # the far atom cannot couple to anything, so its plan marginal is zero
    A = DiscreteMeasure([[0.0], [3.0]], [1.0, 1.0])
    B = dirac(0.1, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve_let(A, B)
    with pytest.raises(ZeroMarginal):
        density_factors(sol, A, B)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.0, 1.5))
def test_dirac_pair_property(m0, m1, L):
    sol = solve_let(dirac(0.0, m0), dirac(L, m1))
    assert sol.hk_distance**2 == pytest.approx(closed_form_sq(m0, m1, L), rel=1e-9, abs=1e-12)
