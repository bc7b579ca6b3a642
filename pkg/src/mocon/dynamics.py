"""Reduced control equations of motion driven by a prescribed control path.

With ``w = du/dt`` the reduced state ``(q, p)`` obeys::

    dq/dt = A p + K w
    dp/dt = -1/2 p^T dA/dq p - p^T dK/dq w + 1/2 w^T dE/dq w + F0 + F1 w
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import MissingPotential, NumericalError, StepFailure
from .metric import MetricModel, evaluate_metric, metric_derivatives, reduced_blocks

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Potential:
    """Scalar potential ``U(q, u)``; the generalized force is ``-dU/dq``."""

    value: Callable[[np.ndarray, np.ndarray], float]
    grad_q: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    grad_u: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    step: float = 1e-6

    def __call__(self, q, u) -> float:
        return float(self.value(np.asarray(q, float), np.asarray(u, float)))

    def _fd(self, q, u, wrt_q: bool) -> np.ndarray:
        x = np.array(q if wrt_q else u, dtype=float)
        out = np.empty_like(x)
        for k in range(x.size):
            h = self.step * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            if wrt_q:
                out[k] = (self.value(xp, u) - self.value(xm, u)) / (2 * h)
            else:
                out[k] = (self.value(q, xp) - self.value(q, xm)) / (2 * h)
        return out

    def gradient_q(self, q, u) -> np.ndarray:
        if self.grad_q is not None:
            return np.atleast_1d(np.asarray(self.grad_q(q, u), dtype=float))
        return self._fd(q, u, True)

    def gradient_u(self, q, u) -> np.ndarray:
        if self.grad_u is not None:
            return np.atleast_1d(np.asarray(self.grad_u(q, u), dtype=float))
        return self._fd(q, u, False)


@dataclass(frozen=True)
class ForceModel:
    """External force, affine in the control velocity.

    ``f0(q, p, u)`` is the w-independent generalized force on q and
    ``f1(q, p, u)`` the (N, M) coefficient of w.  When only a potential is
    given, ``f0 = -dU/dq``.  ``fu(q, p, u, w)`` is the force component along
    the control directions, used only for constraint reactions; it defaults
    to ``-dU/du`` (or zero without a potential).
    """

    f0: Optional[Callable] = None
    f1: Optional[Callable] = None
    potential: Optional[Potential] = None
    fu: Optional[Callable] = None

    def force0(self, q, p, u) -> np.ndarray:
        if self.f0 is not None:
            return np.atleast_1d(np.asarray(self.f0(q, p, u), dtype=float))
        if self.potential is not None:
            return -self.potential.gradient_q(q, u)
        return np.zeros_like(np.atleast_1d(q), dtype=float)

    def force1(self, q, p, u, dim_u: int) -> Optional[np.ndarray]:
        if self.f1 is None:
            return None
        return np.asarray(self.f1(q, p, u), dtype=float).reshape(np.size(q), dim_u)

    def force_u(self, q, p, u, w) -> np.ndarray:
        if self.fu is not None:
            return np.atleast_1d(np.asarray(self.fu(q, p, u, w), dtype=float))
        if self.potential is not None:
            return -self.potential.gradient_u(q, u)
        return np.zeros_like(np.atleast_1d(u), dtype=float)

    def check_potential(self, points, tol: float = 1e-8) -> float:
        """Largest ``|f0 + dU/dq|`` over ``points`` of ``(q, p, u)``.

        Raises ValueError above ``tol``.
        """
        if self.potential is None or self.f0 is None:
            return 0.0
        worst = 0.0
        for q, p, u in points:
            r = np.asarray(self.f0(q, p, u), float) + self.potential.gradient_q(q, u)
            worst = max(worst, float(np.abs(r).max()))
        if worst > tol:
            raise ValueError(f"f0 is inconsistent with the potential (residual {worst:.3e})")
        return worst


ZERO_FORCE = ForceModel()


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-smooth control path on ``[t0, t1]``."""

    value: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray]
    t0: float
    t1: float
    second_derivative: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("signal domain must satisfy t1 > t0")

    def u(self, t) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.value(t), dtype=float))

    def w(self, t) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.derivative(t), dtype=float))

    def dw(self, t) -> np.ndarray:
        if self.second_derivative is not None:
            return np.atleast_1d(np.asarray(self.second_derivative(t), dtype=float))
        h = 1e-5 * (self.t1 - self.t0)
        return (self.w(t + h) - self.w(t - h)) / (2 * h)

    def check_derivative(self, n: int = 20, tol: float = 1e-4, seed: int = 0) -> float:
        """Probabilistic check that ``derivative`` differentiates ``value``."""
        rng = np.random.default_rng(seed)
        span = self.t1 - self.t0
        h = 1e-6 * max(1.0, span)
        worst = 0.0
        for t in self.t0 + span * (0.05 + 0.9 * rng.random(n)):
            fd = (self.u(t + h) - self.u(t - h)) / (2 * h)
            worst = max(worst, float(np.abs(fd - self.w(t)).max() / max(1.0, np.abs(fd).max())))
        if worst > tol:
            raise ValueError(f"signal derivative mismatch {worst:.3e}")
        return worst

    @classmethod
    def constant(cls, u0, t0: float = 0.0, t1: float = 1.0) -> "ControlSignal":
        u0 = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
        zero = np.zeros_like(u0)
        return cls(lambda t: u0, lambda t: zero, t0, t1, lambda t: zero)

    @classmethod
    def sinusoid(cls, center, amplitudes, omegas, phases=None, t0=0.0, t1=1.0) -> "ControlSignal":
        """``u(t) = center + sum_l amplitudes[l] sin(omegas[l] t + phases[l])``.

        ``amplitudes`` has shape (k, M).
        """
        c = np.atleast_1d(np.asarray(center, float)).copy()
        amp = np.atleast_2d(np.asarray(amplitudes, float)).copy()
        om = np.atleast_1d(np.asarray(omegas, float)).copy()
        ph = np.zeros_like(om) if phases is None else np.atleast_1d(np.asarray(phases, float)).copy()
        if amp.shape[0] != om.size or ph.size != om.size:
            raise ValueError("amplitudes, omegas and phases must agree in length")
        amp_w = amp * om[:, None]
        amp_a = -amp * (om**2)[:, None]

        def value(t):
            return c + np.sin(om * t + ph) @ amp

        def derivative(t):
            return np.cos(om * t + ph) @ amp_w

        def second(t):
            return np.sin(om * t + ph) @ amp_a

        return cls(value, derivative, t0, t1, second)


@dataclass(frozen=True)
class ReducedKernel:
    """Hand-written fast evaluation of one specific (model, force) pair.

    ``rhs(q, p, u, w) -> (dq, dp)`` must agree with :func:`rhs`, and
    ``lifted_fields(x) -> (f, g, h)`` with the lifted quadratic system; both
    are verified against the generic path in the test suite.
    """

    rhs: Callable
    lifted_fields: Optional[Callable] = None


@dataclass(frozen=True)
class ReducedState:
    q: np.ndarray
    p: np.ndarray
    u: np.ndarray

    @classmethod
    def make(cls, q, p, u) -> "ReducedState":
        q, p, u = (np.atleast_1d(np.asarray(a, dtype=float)).copy() for a in (q, p, u))
        if q.shape != p.shape:
            raise ValueError("q and p must have the same shape")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(u))):
            raise ValueError("state entries must be finite")
        return cls(q, p, u)


@dataclass(frozen=True)
class Trajectory:
    """Sampled reduced trajectory; columns ``t, q, p, u, w``."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    u: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.diff(self.times)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("trajectory times must be strictly monotone")
        for a in (self.times, self.q, self.p, self.u, self.w):
            a.setflags(write=False)

    @property
    def dim_q(self) -> int:
        return self.q.shape[1]

    @property
    def dim_u(self) -> int:
        return self.u.shape[1]

    def state(self, k: int) -> ReducedState:
        return ReducedState(self.q[k].copy(), self.p[k].copy(), self.u[k].copy())

    @property
    def states(self):
        return [self.state(k) for k in range(len(self.times))]

    @property
    def final(self) -> ReducedState:
        return self.state(-1)


def _rhs(model: MetricModel, force: ForceModel, q, p, u, w):
    # q, u are validated float arrays here, so the closed form is called directly
    b = model.closed_form(q, u) if model.closed_form is not None else reduced_blocks(model, q, u)
    dq = b.A @ p + b.K @ w
    dp = (
        -0.5 * (b.dA_dq @ p) @ p
        - (b.dK_dq @ w) @ p
        + 0.5 * (b.dE_dq @ w) @ w
        + force.force0(q, p, u)
    )
    f1 = force.force1(q, p, u, model.dim_u)
    if f1 is not None:
        dp = dp + f1 @ w
    return dq, dp


def rhs(model: MetricModel, force: ForceModel, state: ReducedState, w):
    """Time derivatives ``(dq, dp)`` at ``state`` for control velocity ``w``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    return _rhs(model, force, state.q, state.p, state.u, w)


def reduced_hamiltonian(model: MetricModel, state: ReducedState, w) -> float:
    """``1/2 p^T A p + p^T K w - 1/2 w^T E w``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    b = reduced_blocks(model, state.q, state.u)
    p = state.p
    return float(0.5 * p @ b.A @ p + p @ b.K @ w - 0.5 * w @ b.E @ w)


# Runge-Kutta-Fehlberg 4(5) tableau
_F_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_F_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_F_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_F_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_fixed(f, t0: float, y0: np.ndarray, t1: float, dt: float, store_every: int = 1,
              stop_when: Optional[Callable[[float, np.ndarray], bool]] = None):
    """Fixed-step RK4 from ``t0`` to ``t1``; the step is adjusted to land on t1.

    ``stop_when(t, y)`` is checked after every step and ends the run early.
    """
    n = max(1, int(round(abs(t1 - t0) / abs(dt))))
    h = (t1 - t0) / n
    ts = [t0]
    ys = [np.array(y0, dtype=float)]
    y = ys[0]
    for k in range(1, n + 1):
        y = _rk4_step(f, t0 + (k - 1) * h, y, h)
        stop = stop_when is not None and stop_when(t0 + k * h, y)
        if k % store_every == 0 or k == n or stop:
            ts.append(t0 + k * h)
            ys.append(y)
        if stop:
            break
    return np.array(ts), np.array(ys), {"method": "rk4", "step": h, "accepted": k, "rejected": 0,
                                        "stopped_early": bool(stop_when is not None and k < n)}


def rkf45(f, t0: float, y0: np.ndarray, t1: float, h0: float, rtol: float = 1e-8,
          atol: float = 1e-10, h_min: float = 1e-14):
    """Adaptive Runge-Kutta-Fehlberg 4(5) with local extrapolation off.

    Raises StepFailure when the controller needs a step below ``h_min``.
    """
    direction = 1.0 if t1 >= t0 else -1.0
    h = direction * min(abs(h0), abs(t1 - t0))
    t, y = t0, np.array(y0, dtype=float)
    ts, ys = [t], [y]
    accepted = rejected = 0
    while direction * (t1 - t) > 1e-15 * max(1.0, abs(t1)):
        if direction * (t + h - t1) > 0:
            h = t1 - t
        k = []
        for i in range(6):
            yi = y + h * sum(a * kj for a, kj in zip(_F_A[i], k)) if i else y
            k.append(f(t + _F_C[i] * h, yi))
        k = np.array(k)
        y4 = y + h * (_F_B4 @ k)
        y5 = y + h * (_F_B5 @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean(((y5 - y4) / scale) ** 2)))
        if err <= 1.0:
            t, y = t + h, y4
            ts.append(t)
            ys.append(y)
            accepted += 1
        else:
            rejected += 1
        factor = 0.9 * err ** -0.2 if err > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
        if abs(h) < h_min:
            raise StepFailure(f"adaptive step underflow at t={t:.6g} (h={abs(h):.3e})")
    return np.array(ts), np.array(ys), {"method": "rkf45", "step": None,
                                        "accepted": accepted, "rejected": rejected,
                                        "rtol": rtol, "atol": atol}


def integrate(model: MetricModel, force: ForceModel, signal: ControlSignal,
              initial: ReducedState, dt: float = 1e-3, method: str = "rk4",
              t_start: Optional[float] = None, t_end: Optional[float] = None,
              store_every: int = 1, rtol: float = 1e-8, atol: float = 1e-10,
              stop_when: Optional[Callable[[float, np.ndarray, np.ndarray], bool]] = None,
              kernel: Optional[ReducedKernel] = None) -> Trajectory:
    """Integrate the reduced equations driven by ``signal``.

    ``t_start``/``t_end`` default to the signal domain; ``t_end < t_start``
    integrates backward.  ``initial.u`` must equal ``signal.value(t_start)``.
    ``stop_when(t, q, p)`` ends a fixed-step run early once it returns True.
    ``kernel`` replaces the generic right-hand side with a fast equivalent.
    """
    t_start = signal.t0 if t_start is None else float(t_start)
    t_end = signal.t1 if t_end is None else float(t_end)
    u0 = signal.u(t_start)
    if initial.u.shape != u0.shape or np.abs(initial.u - u0).max() > 1e-12 * max(1.0, np.abs(u0).max()):
        raise ValueError(f"initial u={initial.u} does not match signal value {u0} at t={t_start}")
    N = model.dim_q

    value, derivative = signal.value, signal.derivative
    if kernel is not None:
        def f(t, y):
            dq, dp = kernel.rhs(y[:N], y[N:], value(t), derivative(t))
            return np.concatenate([dq, dp])
    else:
        def f(t, y):
            dq, dp = _rhs(model, force, y[:N], y[N:], signal.u(t), signal.w(t))
            return np.concatenate([dq, dp])

    y0 = np.concatenate([initial.q, initial.p])
    if method == "rk4":
        stop = None if stop_when is None else (lambda t, y: stop_when(t, y[:N], y[N:]))
        ts, ys, meta = rk4_fixed(f, t_start, y0, t_end, dt, store_every, stop)
    elif method == "rkf45":
        if stop_when is not None:
            raise ValueError("stop_when is only supported by the fixed-step integrator")
        ts, ys, meta = rkf45(f, t_start, y0, t_end, dt, rtol=rtol, atol=atol)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(ys)):
        raise NumericalError("integration produced non-finite values")
    us = np.array([signal.u(t) for t in ts])
    ws = np.array([signal.w(t) for t in ts])
    log.debug("integrated %d steps with %s", meta["accepted"], meta["method"])
    return Trajectory(ts, ys[:, :N], ys[:, N:], us, ws, meta)


def constraint_reaction(model: MetricModel, force: ForceModel, state: ReducedState, w, dw,
                        check_tol: float = 1e-6):
    """Control momentum and the constraint reaction realizing the motion.

    Returns ``(wp, r)`` with ``wp = E w - K^T p`` and
    ``r = d(wp)/dt - (-dH/du + F_U)`` where H is the full kinetic Hamiltonian.
    The q-components of the reaction vanish; this is checked and a
    NumericalError raised if they exceed ``check_tol`` (relative).
    """
    q, p, u = state.q, state.p, state.u
    w = np.atleast_1d(np.asarray(w, float))
    dw = np.atleast_1d(np.asarray(dw, float))
    N = model.dim_q
    b = reduced_blocks(model, q, u)
    dq, dp = _rhs(model, force, q, p, u, w)
    wp = b.E @ w - b.K.T @ p

    dE = np.tensordot(dq, b.dE_dq, axes=1) + np.tensordot(w, b.dE_du, axes=1)
    dK = np.tensordot(dq, b.dK_dq, axes=1) + np.tensordot(w, b.dK_du, axes=1)
    dwp = dE @ w + b.E @ dw - dK.T @ p - b.K.T @ dp

    G = evaluate_metric(model, q, u)
    dG = metric_derivatives(model, q, u)
    V = np.linalg.solve(G, np.concatenate([p, wp]))
    grad = 0.5 * np.einsum("i,kij,j->k", V, dG, V)  # equals -dH/dx at fixed momenta

    # q-components: the reduced flow must coincide with the full Hamiltonian flow
    fq = force.force0(q, p, u)
    f1 = force.force1(q, p, u, model.dim_u)
    if f1 is not None:
        fq = fq + f1 @ w
    res_q = np.concatenate([dq - V[:N], dp - (grad[:N] + fq)])
    scale = 1.0 + np.abs(np.concatenate([dq, dp])).max()
    if np.abs(res_q).max() > check_tol * scale:
        raise NumericalError(f"q-components of the reaction do not vanish ({np.abs(res_q).max():.3e})")

    r = dwp - (grad[N:] + force.force_u(q, p, u, w))
    return wp, r


def lagrangian(model: MetricModel, force: ForceModel, q, v, u, w) -> float:
    """``T(q, u, v, w) - U(q, u)``."""
    if force.potential is None:
        raise MissingPotential("the Lagrangian needs a potential")
    G = evaluate_metric(model, q, u, check=False)
    V = np.concatenate([np.atleast_1d(v), np.atleast_1d(w)])
    return float(0.5 * V @ G @ V - force.potential(q, u))


def path_action(model: MetricModel, force: ForceModel, signal: ControlSignal,
                times, q_path, qdot_path) -> float:
    """Composite Simpson quadrature of the Lagrangian along an explicit path."""
    if force.potential is None:
        raise MissingPotential("the action functional needs a potential")
    times = np.asarray(times, float)
    q_path = np.asarray(q_path, float).reshape(len(times), -1)
    qdot_path = np.asarray(qdot_path, float).reshape(len(times), -1)
    vals = np.array([
        lagrangian(model, force, q_path[k], qdot_path[k], signal.u(t), signal.w(t))
        for k, t in enumerate(times)
    ])
    return float(simpson(vals, x=times))


def action_functional(model: MetricModel, force: ForceModel, signal: ControlSignal,
                      trajectory: Trajectory) -> float:
    """Action of a simulated trajectory, with ``dq/dt = A p + K w``."""
    if force.potential is None:
        raise MissingPotential("the action functional needs a potential")
    qdot = []
    for k in range(len(trajectory.times)):
        b = reduced_blocks(model, trajectory.q[k], trajectory.u[k])
        qdot.append(b.A @ trajectory.p[k] + b.K @ trajectory.w[k])
    return path_action(model, force, signal, trajectory.times, trajectory.q, np.array(qdot))
