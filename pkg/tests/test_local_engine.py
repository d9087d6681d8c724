import numpy as np
import pytest

from fedgradmp.dictionary import make_gaussian_dictionary, make_standard_basis
from fedgradmp.errors import CapabilityError, ContractError, SolverError
from fedgradmp.local_engine import LocalConfig, SolverKind, Subproblem, local_stogradmp, solve_restricted
from fedgradmp.objectives import ClientDataset, LossKind, Objective, normalize_rows
from fedgradmp.sparse_ops import estimate_from_coefficients, zero_estimate


def _squared(m=40, n=20, b=40, seed=0, noise=0.0):
    r = np.random.default_rng(seed)
    A = r.standard_normal((m, n))
    x = np.zeros(n)
    x[[2, 7, 11]] = [1.0, -0.5, 2.0]
    y = A @ x + noise * r.standard_normal(m)
    return Objective(LossKind.SQUARED, ClientDataset(A, y, b)), x


def _logistic(m=200, n=6, seed=0):
    r = np.random.default_rng(seed)
    A = normalize_rows(r.standard_normal((m, n)))
    w = np.array([2.0, -1.0, 0.0, 0.5, 0.0, 0.0])
    p = 1.0 / (1.0 + np.exp(-2 * A @ w))
    y = np.where(r.random(m) < p, 1.0, -1.0)
    return Objective(LossKind.BINARY_LOGISTIC, ClientDataset(A, y, m))


def test_exact_solver_is_least_squares():
    obj, _ = _squared(noise=0.1)
    s = [0, 2, 7, 11]
    sol = solve_restricted(obj, s, SolverKind.EXACT)
    c = np.linalg.lstsq(obj.dataset.data[:, s], obj.dataset.targets, rcond=None)[0]
    assert np.allclose(sol.coefficients, c, atol=1e-12)
    assert np.count_nonzero(sol.model) <= 4


def test_exact_solver_rejects_logistic():
    with pytest.raises(CapabilityError):
        solve_restricted(_logistic(), [0, 1], SolverKind.EXACT)


def test_nonexact_solvers_need_delta():
    with pytest.raises(ContractError):
        Subproblem(SolverKind.NEWTON)


@pytest.mark.parametrize("delta", [1e-2, 1e-5, 1e-8])
def test_gd_certificate_bounds_distance_to_exact(delta):
    obj, _ = _squared(noise=0.1)
    s = [0, 2, 7, 11, 13]
    exact = solve_restricted(obj, s, SolverKind.EXACT).model
    gd = solve_restricted(obj, s, Subproblem(SolverKind.GRADIENT_DESCENT, delta)).model
    assert np.linalg.norm(gd - exact) <= delta


def test_gd_certificate_with_general_dictionary():
    obj, _ = _squared(noise=0.1)
    D = make_gaussian_dictionary(20, 30, rng_seed=2)
    s = [1, 5, 9]
    E = obj.dataset.data @ D.atoms[:, s]
    c = np.linalg.lstsq(E, obj.dataset.targets, rcond=None)[0]
    gd = solve_restricted(obj, s, Subproblem(SolverKind.GRADIENT_DESCENT, 1e-6), dictionary=D).model
    assert np.linalg.norm(gd - D.atoms[:, s] @ c) <= 1e-6


def test_newton_converges_quadratically_on_logistic():
    sol = solve_restricted(_logistic(), [0, 1, 3], Subproblem(SolverKind.NEWTON, 1e-13))
    h = [g for g in sol.grad_history if g > 1e-12]
    ratios = [h[k + 1] / h[k] ** 2 for k in range(len(h) - 1) if h[k] < 1e-2]
    assert ratios and max(ratios) < 100.0
    assert sol.grad_norm <= 1e-10


def test_newton_and_gd_agree_on_logistic():
    obj = _logistic()
    a = solve_restricted(obj, [0, 1, 3], Subproblem(SolverKind.NEWTON, 1e-9)).model
    b = solve_restricted(obj, [0, 1, 3], Subproblem(SolverKind.GRADIENT_DESCENT, 1e-7)).model
    assert np.linalg.norm(a - b) <= 2e-7


def test_separable_logistic_fails_loudly():
    A = normalize_rows(np.array([[1.0, 0.1], [-1.0, 0.2], [1.0, -0.3], [-1.0, 0.0]]))
    obj = Objective(LossKind.BINARY_LOGISTIC, ClientDataset(A, np.array([1.0, -1.0, 1.0, -1.0]), 4))
    with pytest.raises(SolverError):
        solve_restricted(obj, [0], Subproblem(SolverKind.NEWTON, 1e-8, max_iter=50))


def test_local_stogradmp_recovers_planted_signal():
    obj, x = _squared()
    est, trace = local_stogradmp(obj, zero_estimate(20, 3), LocalConfig(K=3, tau=3), make_standard_basis(20),
                                 np.random.default_rng(0), x)
    assert np.linalg.norm(est.signal - x) <= 1e-10
    assert len(trace.records) == 3
    for rec in trace.records:
        assert len(rec.merged_support) <= 9
        assert len(rec.support) <= 3


def test_local_stogradmp_carries_global_support():
    obj, x = _squared()
    start = estimate_from_coefficients(make_standard_basis(20), [0, 5, 19], [1.0, 1.0, 1.0], 3)
    _, trace = local_stogradmp(obj, start, LocalConfig(K=1, tau=3), make_standard_basis(20), np.random.default_rng(0))
    assert {0, 5, 19} <= set(trace.records[0].merged_support.tolist())
    _, trace = local_stogradmp(obj, start, LocalConfig(K=1, tau=3, carry_support="empty"),
                               make_standard_basis(20), np.random.default_rng(0))
    assert len(trace.records[0].merged_support) == 6


def test_local_stogradmp_ball_projection():
    obj, x = _squared()
    est, _ = local_stogradmp(obj, zero_estimate(20, 3), LocalConfig(K=2, tau=3, ball_radius=0.5),
                             make_standard_basis(20), np.random.default_rng(0))
    assert np.linalg.norm(est.signal) <= 0.5 + 1e-12


def test_local_stogradmp_is_deterministic_given_rng():
    obj, _ = _squared(b=10, noise=0.1)
    cfg = LocalConfig(K=4, tau=3)
    a, _ = local_stogradmp(obj, zero_estimate(20, 3), cfg, make_standard_basis(20), np.random.default_rng(5))
    b, _ = local_stogradmp(obj, zero_estimate(20, 3), cfg, make_standard_basis(20), np.random.default_rng(5))
    assert np.array_equal(a.signal, b.signal)


def test_engine_rejects_dictionary_inside_objective():
    obj, _ = _squared()
    D = make_gaussian_dictionary(20, 25, rng_seed=0)
    wrapped = Objective(LossKind.SQUARED, obj.dataset, dictionary=D)
    with pytest.raises(ContractError):
        local_stogradmp(wrapped, zero_estimate(25, 3), LocalConfig(K=1, tau=3), D, np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ContractError):
        LocalConfig(K=0, tau=1)
    with pytest.raises(ContractError):
        LocalConfig(K=1, tau=1, eta1=0.9)
    with pytest.raises(ContractError):
        LocalConfig(K=1, tau=1, carry_support="other")
