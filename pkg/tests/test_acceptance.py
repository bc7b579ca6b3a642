"""Acceptance criteria 1 to 10; each test prints one PASS/FAIL line.

Run ``python3 tests/test_acceptance.py`` for the summary alone, or
``pytest tests/test_acceptance.py -s`` to see the lines under pytest.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mocon import catalog  # noqa: E402
from mocon.controller import VibrationPlan, run_feedback, run_open_loop  # noqa: E402
from mocon.dynamics import ControlSignal, ReducedState, integrate, path_action  # noqa: E402
from mocon.geometry import curvature_from_geodesics  # noqa: E402
from mocon.metric import blocks_from_metric, evaluate_metric, reduced_blocks  # noqa: E402
from mocon.reparam import QuadraticControlSystem, lift_mechanical, round_trip  # noqa: E402
from mocon.stability import (LyapunovCandidate, VibrationTuple, effective_minimum_test,  # noqa: E402
                             effective_potential, kalman_rank, lyapunov_condition_iv_prime,
                             mechanical_rank_test, scalar_cone_selection, selection_linearization,
                             solve_w)

G = 9.8


def report(n: int, ok: bool, detail: str, elapsed: float, limit: float):
    ok = bool(ok and elapsed < limit)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.2f} s, limit {limit:g} s]",
          flush=True)
    return ok


def _rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def criterion_1():
    t = time.perf_counter()
    worst = 0.0
    for name in catalog.names():
        e = catalog.build(name)
        N = e.model.dim_q
        for q, u in catalog.sample_points(e, 100, seed=11):
            Gm = evaluate_metric(e.model, q, u)
            G12, G2 = Gm[:N, N:], Gm[N:, N:]
            b = reduced_blocks(e.model, q, u)
            worst = max(worst, _rel(b.K, -b.A @ G12), _rel(b.E, G2 - G12.T @ b.A @ G12))
    return report(1, worst <= 1e-9, f"block identities, worst rel. err {worst:.2e} (tol 1e-9)",
                  time.perf_counter() - t, 1.0)


def criterion_2():
    t = time.perf_counter()
    worst = 0.0
    for name in ("pendulum", "bead"):
        e = catalog.build(name)
        for q, u in catalog.sample_points(e, 50, seed=12):
            b = blocks_from_metric(e.model, q, u)
            for key in ("A", "E", "K"):
                worst = max(worst, float(np.abs(e.closed_forms[key](q, u) - getattr(b, key)).max()))
    dp = catalog.build("double-pendulum")
    for q, u in catalog.sample_points(dp, 50, seed=12):
        dE = blocks_from_metric(dp.model, q, u).dE_dq
        d = -3 + np.cos(2 * (q[0] - q[1]))
        worst = max(worst, abs(np.linalg.det(dE[0]) + 16 / d ** 2), abs(np.linalg.det(dE[1])))
    return report(2, worst <= 1e-8, f"closed forms, worst abs. err {worst:.2e} (tol 1e-8)",
                  time.perf_counter() - t, 10.0)


def criterion_3():
    t = time.perf_counter()
    model = catalog.synthetic_linear().model
    ok, parts = True, []
    for w in (1.0, 2.0):
        lim = curvature_from_geodesics(model, [0.0], [0.0], [w])
        exact = 0.5 * w * w
        err = np.abs(lim.ratios[:, 0] - exact)
        C = float(np.max(err / lim.s))
        # first order: err / s bounded and err shrinks with s
        first_order = C <= 2 * err[0] / lim.s[0] and err[-1] <= err[0] * lim.s[-1] / lim.s[0] * 2
        ok &= bool(first_order and abs(lim.limit[0] - exact) <= 1e-4)
        parts.append(f"w={w:g}: limit {lim.limit[0]:.8f} vs {exact:g}, C={C:.3g}")
    return report(3, ok, "curvature limit, " + "; ".join(parts), time.perf_counter() - t, 30.0)


def criterion_4():
    t = time.perf_counter()
    e = catalog.build("pendulum")
    sig = ControlSignal.sinusoid([0.0], [[0.1]], [5.0], None, 0.0, 2.0)
    rt = round_trip(e.model, e.force, sig, [0.3], [0.1], 1e-4, kernel=e.kernel)
    return report(4, rt.state_error <= 1e-6, f"round trip sup error {rt.state_error:.2e} (tol 1e-6)",
                  time.perf_counter() - t, 5.0)


def criterion_5():
    t = time.perf_counter()
    e = catalog.build("pendulum", g=G)
    init = ReducedState.make([0.1], [0.0], [0.0])
    _, on = run_open_loop(e.model, e.force, VibrationPlan.single([5.0], 200.0), init, 20.0, 1e-4,
                          kernel=e.kernel, exit_radius=np.pi / 2)
    _, off = run_open_loop(e.model, e.force, VibrationPlan.single([0.0], 200.0), init, 5.0, 1e-4,
                           kernel=e.kernel, exit_radius=np.pi / 2)
    ok = on["sup_dq"] <= 0.3 and on["exit_time"] is None and off["exit_time"] is not None
    exit_t = off["exit_time"]
    return report(5, ok, f"open loop sup|q| {on['sup_dq']:.4f} (tol 0.3), w=0 exit at "
                  f"{'never' if exit_t is None else f'{exit_t:.3f} s'} (< 5 s)", time.perf_counter() - t, 60.0)


def _beta(u):
    return float(u @ u)


def criterion_6():
    t = time.perf_counter()
    p = catalog.build("pendulum")
    errs, verdicts = [], []
    for w in (5.0, 1.0):
        W = VibrationTuple([[w]])
        H = effective_potential(p.model, p.force.potential, W).hessian([0.0], [0.0])[0, 0]
        errs.append(abs(H - (w * w - G)))
        verdicts.append(effective_minimum_test(p.model, p.force.potential, W, _beta, [0.0], [0.0]).passed)
    d = catalog.build("double-pendulum")
    dp = effective_minimum_test(d.model, d.force.potential, VibrationTuple([[0.0, 6.0]]), _beta,
                                [0.0, 0.0], [0.0, 0.0], beta_grad=lambda u: 2 * u).passed
    ok = max(errs) <= 1e-6 and verdicts == [True, False] and dp
    return report(6, ok, f"effective potential, Hessian err {max(errs):.1e}, pendulum w=5/w=1 "
                  f"{verdicts}, double pendulum eta=6 {dp}", time.perf_counter() - t, 1.0)


def _scalar_rank(name, q_bar):
    e = catalog.build(name)
    sel = scalar_cone_selection(e.model, e.force, [0.0], q_bar)
    A, B = selection_linearization(sel.drift, sel.selection, [q_bar, 0.0], sel.xi_bar(q_bar), cone=sel.cone)
    return A, kalman_rank(A, B)[0]


def criterion_7():
    t = time.perf_counter()
    A, rp = _scalar_rank("pendulum", 0.5)
    matrix_ok = np.allclose(A, [[0, 1], [G * np.cos(0.5), 0]], atol=1e-6)
    _, rb = _scalar_rank("bead", 1.0)
    d = catalog.build("double-pendulum")
    W = solve_w(d.model, d.force, [0.3, -0.05], [0.0, 0.0])
    rep = mechanical_rank_test(d.model, d.force, [0.3, -0.05], [0.0, 0.0], W) if W is not None else None
    res = float(np.abs(rep.residuals["equilibrium"]).max()) if rep else np.inf
    ok = rp == 2 and matrix_ok and rb == 2 and rep is not None and rep.rank == 2 and res <= 1e-8
    return report(7, ok, f"ranks pendulum {rp}, bead {rb}, double pendulum {rep.rank if rep else None} "
                  f"(residual {res:.1e})", time.perf_counter() - t, 5.0)


def criterion_8():
    t = time.perf_counter()
    b = catalog.build("bead")
    rb = run_feedback(b.model, b.force, [1.0], [0.0], ReducedState.make([1.1], [0.0], [0.0]), 20.0,
                      kernel=b.kernel)
    p = catalog.build("pendulum")
    rp = run_feedback(p.model, p.force, [0.5], [0.0], ReducedState.make([0.6], [0.0], [0.0]), 30.0,
                      kernel=p.kernel)
    eb, ep = rb.metrics["final_dq"], rp.metrics["final_dq"]
    return report(8, eb <= 0.05 and ep <= 0.05, f"feedback |q(20)-1| {eb:.4f}, |q(30)-0.5| {ep:.4f} "
                  "(tol 0.05)", time.perf_counter() - t, 120.0)


def _ra_system():
    h = np.zeros((2, 2, 2))
    h[0, 0], h[1, 1] = [0.0, 1.0], [0.0, -1.0]
    return QuadraticControlSystem(2, 2, lambda x: np.array([1.0, 0.0]), lambda x: np.zeros((2, 2)),
                                  lambda x: h)


def criterion_9():
    t = time.perf_counter()
    p = catalog.build("pendulum")
    UW = effective_potential(p.model, p.force.potential, VibrationTuple([[5.0]]))
    c = UW([0.0], [0.0])

    def V(x):
        A = reduced_blocks(p.model, x[:1], x[2:]).A
        return 0.5 * x[1:2] @ A @ x[1:2] + UW(x[:1], x[2:]) - c + float(x[2] ** 2)

    pts = np.random.default_rng(0).uniform(-0.3, 0.3, (64, 3))
    good = lyapunov_condition_iv_prime(lift_mechanical(p.model, p.force, p.kernel),
                                       LyapunovCandidate(V, np.zeros(3), 0.3), pts)
    cand = LyapunovCandidate(lambda x: float(x @ x), np.zeros(2), 1.0, gradient=lambda x: 2 * x)
    axis = np.array([[1.0, 0.0], [0.5, 0.0], [0.2, 0.0]])
    strict = lyapunov_condition_iv_prime(_ra_system(), cand, axis)
    naive = lyapunov_condition_iv_prime(_ra_system(), cand, axis, kappa=0.0)
    ok = good.verdict == "pass" and strict.verdict == "fail" and naive.verdict == "pass"
    return report(9, ok, f"time-positive descent pendulum {good.verdict}, counterexample {strict.verdict} "
                  f"(naive {naive.verdict})", time.perf_counter() - t, 10.0)


def criterion_10():
    t = time.perf_counter()
    p = catalog.build("pendulum")
    T, n = 0.5, 500
    sig = ControlSignal.constant([0.0], 0.0, T)
    tr = integrate(p.model, p.force, sig, ReducedState.make([2.5], [0.3], [0.0]), dt=T / n, kernel=p.kernel)
    qdot = np.array([reduced_blocks(p.model, q, u).A @ pp for q, pp, u in zip(tr.q, tr.p, tr.u)])
    S0 = path_action(p.model, p.force, sig, tr.times, tr.q, qdot)
    rng = np.random.default_rng(10)
    k = np.arange(1, 6)
    worst = np.inf
    for _ in range(100):
        c = rng.normal(size=k.size)
        c *= 0.05 / np.abs(c).sum()
        arg = np.pi * np.outer(tr.times, k) / T
        dq = (np.sin(arg) @ c)[:, None]
        ddq = ((np.pi * k / T) * np.cos(arg) @ c)[:, None]
        worst = min(worst, path_action(p.model, p.force, sig, tr.times, tr.q + dq, qdot + ddq) - S0)
    return report(10, worst > 0, f"action minimal, smallest increase {worst:.3e} over 100 perturbations",
                  time.perf_counter() - t, 10.0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 11)])
def test_acceptance(criterion, capsys):
    with capsys.disabled():
        print()
        ok = criterion()
    assert ok


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    sys.exit(0 if all(results) else 1)
