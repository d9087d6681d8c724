import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fedgradmp.dictionary import make_dictionary, make_gaussian_dictionary, make_standard_basis
from fedgradmp.errors import CapabilityError, ContractError
from fedgradmp.sparse_ops import (
    SparseEstimate,
    approx_project,
    best_sparse_approx,
    omp,
    orthogonal_project,
    project_estimate_l2_ball,
    project_l2_ball,
    top_magnitude,
)

vec = arrays(np.float64, 8, elements=st.floats(-10, 10, allow_nan=False))


def _brute_force_best(w, tau, A):
    best = np.inf
    for s in itertools.combinations(range(A.shape[1]), tau):
        c = np.linalg.lstsq(A[:, s], w, rcond=None)[0]
        best = min(best, np.linalg.norm(w - A[:, s] @ c))
    return best


def test_top_magnitude_breaks_ties_to_lowest_index():
    assert top_magnitude(np.array([1.0, -3.0, 3.0, 2.0]), 2).tolist() == [1, 2]
    assert top_magnitude(np.array([1.0, 1.0, 1.0]), 2).tolist() == [0, 1]


def test_standard_basis_example():
    est = best_sparse_approx(np.array([0.1, -3.0, 2.0, 0.5]), 2, make_standard_basis(4))
    assert est.support.tolist() == [1, 2]
    assert np.array_equal(est.signal, [0.0, -3.0, 2.0, 0.0])


@given(vec, st.integers(0, 8))
def test_standard_basis_matches_brute_force(w, tau):
    est = best_sparse_approx(w, tau, make_standard_basis(8))
    if tau == 0:
        assert np.array_equal(est.signal, np.zeros(8))
        return
    assert np.linalg.norm(w - est.signal) <= _brute_force_best(w, tau, np.eye(8)) + 1e-9
    assert len(est.support) <= tau


@given(vec, st.integers(1, 3), st.integers(0, 50))
def test_general_dictionary_exhaustive_is_optimal(w, tau, seed):
    D = make_gaussian_dictionary(8, 6, rng_seed=seed)
    est = best_sparse_approx(w, tau, D)
    assert np.linalg.norm(w - est.signal) <= _brute_force_best(w, tau, D.atoms) * (1 + 1e-9) + 1e-12


@given(vec, st.integers(1, 3))
def test_approx_project_within_certified_ratio(w, tau):
    D = make_gaussian_dictionary(8, 6, rng_seed=3)
    res = approx_project(w, tau, D, eta=10.0)
    best = _brute_force_best(w, tau, D.atoms)
    if res.eta_certified:
        assert res.residual_norm <= 10.0 * best + 1e-9 * max(1, np.linalg.norm(w))
    assert res.residual_norm >= best - 1e-9


def test_approx_project_rejects_eta_below_one():
    with pytest.raises(ContractError):
        approx_project(np.ones(3), 1, make_standard_basis(3), eta=0.5)


def test_exhaustive_cap_raises():
    D = make_gaussian_dictionary(10, 40, rng_seed=0)
    with pytest.raises(CapabilityError):
        best_sparse_approx(np.ones(10), 10, D, exhaustive_cap=1000)
    res = approx_project(np.ones(10), 10, D, exhaustive_cap=1000)
    assert not res.eta_certified


def test_omp_recovers_exact_sparse_combination():
    D = make_gaussian_dictionary(30, 50, rng_seed=5)
    w = D.synthesize(np.array([1.0, -2.0]), np.array([7, 31]))
    est = omp(w, 2, D)
    assert est.support.tolist() == [7, 31]
    assert np.allclose(est.signal, w, atol=1e-10)


def test_orthogonal_project_residual_is_orthogonal(rng):
    D = make_gaussian_dictionary(10, 15, rng_seed=2)
    w = rng.standard_normal(10)
    est = orthogonal_project(w, [1, 4, 9], D)
    assert np.allclose(D.atoms[:, [1, 4, 9]].T @ (w - est.signal), 0, atol=1e-10)


def test_rank_deficient_support_is_flagged():
    A = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
    est = orthogonal_project(np.array([1.0, 1.0]), [0, 1], make_dictionary(A))
    assert est.rank_deficient


def test_support_out_of_range():
    with pytest.raises(ContractError):
        orthogonal_project(np.ones(3), [3], make_standard_basis(3))


def test_capacity_enforced():
    with pytest.raises(ContractError):
        SparseEstimate(np.zeros(3), np.array([0, 1]), np.zeros(2), 1)


@given(vec, st.floats(0.01, 20))
def test_ball_projection_norm_and_idempotence(u, R):
    p = project_l2_ball(u, R)
    assert np.linalg.norm(p) <= R * (1 + 1e-12)
    assert np.allclose(project_l2_ball(p, R), p)


@given(vec, vec, st.floats(0.01, 20))
def test_ball_projection_nonexpansive(u, v, R):
    lhs = np.linalg.norm(project_l2_ball(u, R) - project_l2_ball(v, R))
    assert lhs <= np.linalg.norm(u - v) * (1 + 1e-12) + 1e-12


def test_ball_projection_rejects_nonpositive_radius():
    with pytest.raises(ContractError):
        project_l2_ball(np.ones(2), 0.0)


def test_estimate_ball_projection_keeps_support():
    D = make_standard_basis(4)
    est = orthogonal_project(np.array([3.0, 0.0, 4.0, 0.0]), [0, 2], D)
    p = project_estimate_l2_ball(est, 1.0, D)
    assert p.support.tolist() == [0, 2]
    assert np.allclose(p.signal, [0.6, 0.0, 0.8, 0.0])
