import numpy as np
import pytest
from hypothesis import given, strategies as st

from mocon import catalog
from mocon.errors import (DimensionError, InvalidLyapunovCandidate, MissingPotential,
                          NotAnEquilibrium)
from mocon.metric import reduced_blocks
from mocon.reparam import QuadraticControlSystem, lift_mechanical
from mocon.stability import (LyapunovCandidate, VibrationTuple, double_pendulum_Q_analysis,
                             effective_minimum_test, effective_potential, equilibrium_residual,
                             kalman_rank, lyapunov_condition_iv_prime, mechanical_rank_test,
                             min_gradient_with_time, scalar_cone_selection, selection_linearization,
                             solve_w)

from conftest import G


def test_kalman_examples():
    assert kalman_rank(np.zeros((2, 2)), np.eye(2))[0] == 2
    assert kalman_rank(np.eye(2), [1.0, 0.0])[0] == 1
    assert kalman_rank([[0.0, 1.0], [0.0, 0.0]], [0.0, 1.0])[0] == 2
    with pytest.raises(ValueError):
        kalman_rank(np.eye(2), np.ones((3, 1)))


@given(st.integers(0, 10_000))
def test_kalman_similarity_invariance(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(3, 3)), rng.normal(size=(3, 1))
    B[:] = A @ rng.normal(size=(3, 1)) if seed % 3 == 0 else B
    T = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    Ti = np.linalg.inv(T)
    assert kalman_rank(A, B)[0] == kalman_rank(T @ A @ Ti, T @ B)[0]


def test_pendulum_selection_linearization(pendulum):
    qb = 0.5
    sel = scalar_cone_selection(pendulum.model, pendulum.force, [0.0], qb)
    xi = sel.xi_bar(qb)
    assert np.isclose(xi[0], G * np.sin(qb))
    A, B = selection_linearization(sel.drift, sel.selection, [qb, 0.0], xi, cone=sel.cone)
    assert np.allclose(A, [[0.0, 1.0], [G * np.cos(qb), 0.0]], atol=1e-6)
    assert np.allclose(B.ravel(), [0.0, -1.0])
    assert kalman_rank(A, B)[0] == 2


def test_bead_selection_linearization(bead):
    sel = scalar_cone_selection(bead.model, bead.force, [0.0], 1.0)
    A, B = selection_linearization(sel.drift, sel.selection, [1.0, 0.0], sel.xi_bar(1.0), cone=sel.cone)
    assert kalman_rank(A, B)[0] == 2 and sel.xi_bar(1.0)[0] >= 0


def test_selection_not_equilibrium(pendulum):
    sel = scalar_cone_selection(pendulum.model, pendulum.force, [0.0], 0.5)
    with pytest.raises(NotAnEquilibrium):
        selection_linearization(sel.drift, sel.selection, [0.5, 0.0], [0.0])


def test_scalar_selection_dimension(double_pendulum):
    with pytest.raises(DimensionError):
        scalar_cone_selection(double_pendulum.model, double_pendulum.force, [0.0, 0.0], 0.3)


def test_pendulum_rank_test(pendulum):
    qb = 0.5
    w = np.sqrt(G / np.cos(qb))
    W = VibrationTuple([[w]])
    assert np.abs(equilibrium_residual(pendulum.model, pendulum.force, [qb], [0.0], W)).max() < 1e-10
    rep = mechanical_rank_test(pendulum.model, pendulum.force, [qb], [0.0], W)
    assert rep.passed and rep.rank == 1
    found = solve_w(pendulum.model, pendulum.force, [qb], [0.0])
    assert found is not None and np.isclose(abs(found.W[0, 0]), w, rtol=1e-6)


def test_double_pendulum_solve(double_pendulum):
    e = double_pendulum
    W = solve_w(e.model, e.force, [0.3, -0.05], [0.0, 0.0])
    assert W is not None
    rep = mechanical_rank_test(e.model, e.force, [0.3, -0.05], [0.0, 0.0], W)
    assert rep.passed and rep.rank == 2
    assert np.abs(equilibrium_residual(e.model, e.force, [0.3, -0.05], [0.0, 0.0], W)).max() <= 1e-8


def test_rank_test_failures(double_pendulum, pendulum):
    e = double_pendulum
    assert not mechanical_rank_test(e.model, e.force, [0.3, -0.05], [0, 0], VibrationTuple([[0.0, 0.0]])).passed
    with pytest.raises(DimensionError):
        mechanical_rank_test(e.model, e.force, [0.3, -0.05], [0, 0], VibrationTuple([[1.0, 0.0, 0.0]]))
    with pytest.raises(DimensionError):
        solve_w(pendulum.model, pendulum.force, [0.5], [0.0], k=0)


def test_rank_permutation_invariance(double_pendulum):
    e = double_pendulum
    W = np.array([[1.0, 2.0], [-0.5, 0.7]])
    r1 = mechanical_rank_test(e.model, e.force, [0.3, -0.05], [0, 0], VibrationTuple(W))
    r2 = mechanical_rank_test(e.model, e.force, [0.3, -0.05], [0, 0], VibrationTuple(W[::-1]))
    assert r1.rank == r2.rank and np.allclose(r1.singular_values, r2.singular_values)


def test_effective_potential_pendulum(pendulum):
    for w in (0.0, 1.0, 5.0):
        UW = effective_potential(pendulum.model, pendulum.force.potential, VibrationTuple([[w]]))
        assert abs(UW.hessian([0.0], [0.0])[0, 0] - (w * w - G)) <= 1e-6
        for q in (0.2, -1.0):
            E = reduced_blocks(pendulum.model, np.array([q]), np.zeros(1)).E[0, 0]
            assert np.isclose(UW([q], [0.0]), pendulum.force.potential.value([q], [0.0]) - 0.5 * E * w * w)
            assert np.allclose(UW.gradient([q], [0.0]),
                               [(UW([q + 1e-6], [0.0]) - UW([q - 1e-6], [0.0])) / 2e-6, 0.0], atol=1e-6)


def test_effective_potential_needs_potential(identity):
    with pytest.raises(MissingPotential):
        effective_potential(identity.model, None, VibrationTuple([[1.0]]))


def _beta(u):
    return float(u @ u)


def test_effective_minimum(pendulum, double_pendulum):
    P = pendulum
    assert effective_minimum_test(P.model, P.force.potential, VibrationTuple([[np.sqrt(2 * G)]]),
                                  _beta, [0.0], [0.0]).passed
    assert not effective_minimum_test(P.model, P.force.potential, VibrationTuple([[0.0]]),
                                      _beta, [0.0], [0.0]).passed
    D = double_pendulum
    rep = effective_minimum_test(D.model, D.force.potential, VibrationTuple([[0.0, 6.0]]),
                                 _beta, [0.0, 0.0], [0.0, 0.0], beta_grad=lambda u: 2 * u)
    assert rep.passed and min(rep.hessian_eigenvalues) > 0


def test_double_pendulum_Q():
    a = double_pendulum_Q_analysis(0.3, -0.05)
    d = -3 + np.cos(2 * 0.35)
    assert np.isclose(a.det_dE1, -16 / d ** 2, rtol=1e-8) and abs(a.det_dE2) <= 1e-10
    rng = np.random.default_rng(3)
    for q1, q2 in rng.uniform(-np.pi, np.pi, (50, 2)):
        r = double_pendulum_Q_analysis(q1, q2)
        assert np.isclose(r.det_dE1, -16 / (-3 + np.cos(2 * (q1 - q2))) ** 2, rtol=1e-8)
        assert abs(r.det_dE2) <= 1e-9


def test_min_gradient_with_time_examples():
    Q = np.diag([1.0, -1.0])
    assert np.isclose(min_gradient_with_time(Q, 0.0), -1.0)
    assert np.isclose(min_gradient_with_time(Q, 1.0), 1.0)
    # P = diag(k, 1 - k) is optimal
    assert np.isclose(min_gradient_with_time(Q, 0.25), 0.25 - 0.75, atol=1e-9)
    with pytest.raises(ValueError):
        min_gradient_with_time(Q, 1.5)


def _pendulum_candidate(e, w, radius=0.3):
    UW = effective_potential(e.model, e.force.potential, VibrationTuple([[w]]))
    c = UW([0.0], [0.0])

    def V(x):
        A = reduced_blocks(e.model, x[:1], x[2:]).A
        return 0.5 * x[1:2] @ A @ x[1:2] + UW(x[:1], x[2:]) - c + float(x[2] ** 2)

    return LyapunovCandidate(V, np.zeros(3), radius)


def test_iv_prime_pendulum(pendulum):
    cand = _pendulum_candidate(pendulum, 5.0)
    pts = np.random.default_rng(0).uniform(-0.3, 0.3, (48, 3))
    system = lift_mechanical(pendulum.model, pendulum.force, pendulum.kernel)
    res = lyapunov_condition_iv_prime(system, cand, pts)
    assert res.verdict == "pass"
    sampled = lyapunov_condition_iv_prime(system, cand, pts[:6], method="sample", check_candidate=False)
    assert sampled.verdict == "pass"
    assert np.all(sampled.values >= res.values[:6] - 1e-9 * np.abs(res.values[:6]).max() - 1e-12)


def _ra_system():
    h = np.zeros((2, 2, 2))
    h[0, 0] = [0.0, 1.0]
    h[1, 1] = [0.0, -1.0]
    return QuadraticControlSystem(2, 2, lambda x: np.array([1.0, 0.0]), lambda x: np.zeros((2, 2)),
                                  lambda x: h)


def test_iv_prime_rejects_time_free_counterexample():
    cand = LyapunovCandidate(lambda x: float(x @ x), np.zeros(2), 1.0, gradient=lambda x: 2 * x)
    pts = np.array([[1.0, 0.0], [0.5, 0.0], [0.2, 1e-6]])
    system = _ra_system()
    strict = lyapunov_condition_iv_prime(system, cand, pts)
    assert strict.verdict == "fail" and np.isclose(strict.values[0], 2e-3)
    assert lyapunov_condition_iv_prime(system, cand, pts, kappa=0.0).verdict == "pass"
    sampled = lyapunov_condition_iv_prime(system, cand, pts[:1], method="sample")
    assert sampled.verdict == "fail"


def test_iv_prime_exact_matches_sample_on_counterexample():
    cand = LyapunovCandidate(lambda x: float(x @ x), np.zeros(2), 1.0, gradient=lambda x: 2 * x)
    pts = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    a = lyapunov_condition_iv_prime(_ra_system(), cand, pts, method="exact")
    b = lyapunov_condition_iv_prime(_ra_system(), cand, pts, method="sample")
    assert np.allclose(a.values, b.values, atol=1e-3)


def test_invalid_candidate():
    system = _ra_system()
    with pytest.raises(InvalidLyapunovCandidate):
        lyapunov_condition_iv_prime(system, LyapunovCandidate(lambda x: float(x[0] ** 2), np.zeros(2)),
                                    [[1.0, 0.0]])
    with pytest.raises(InvalidLyapunovCandidate):
        lyapunov_condition_iv_prime(system, LyapunovCandidate(lambda x: float(x @ x) + 1, np.zeros(2)),
                                    [[1.0, 0.0]])
    with pytest.raises(ValueError):
        lyapunov_condition_iv_prime(system, LyapunovCandidate(lambda x: float(x @ x), np.zeros(2)),
                                    [[1.0, 0.0]], method="grid")


def test_report_serializes(pendulum):
    rep = mechanical_rank_test(pendulum.model, pendulum.force, [0.5], [0.0], VibrationTuple([[1.0]]))
    import json
    d = json.loads(rep.to_json())
    assert d["test"] == rep.test and d["verdict"] in ("pass", "fail")
