"""Oscillatory control synthesis and stabilization experiments.

A vibration plan ``W = (w_1, ..., w_k)`` with frequencies ``omega_l`` is
realized by ``u(t) = u_bar + sum_l (sqrt(2) / omega_l) w_l sin(omega_l t + phi_l)``,
whose velocity has time-averaged outer product ``sum_l w_l w_l^T``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.signal import place_poles

from .dynamics import ControlSignal, ForceModel, ReducedKernel, ReducedState, Trajectory, integrate
from .errors import ConeClampSaturated, DimensionError, ResonantPlan, UncontrollableLinearization
from .metric import MetricModel, reduced_blocks
from .stability import VibrationTuple, kalman_rank, scalar_cone_selection, selection_linearization

log = logging.getLogger(__name__)

RESONANCE_TOL = 1e-3
RESONANCE_MAX_PQ = 8
DEFAULT_OMEGA = 200.0
SEPARATION_FACTOR = 20.0


def _small_rationals(max_pq: int) -> np.ndarray:
    return np.array(sorted({float(Fraction(p, q)) for p in range(1, max_pq + 1)
                            for q in range(1, max_pq + 1)}))


@dataclass(frozen=True)
class VibrationPlan:
    """Vibration tuple with strictly increasing, pairwise non-resonant frequencies."""

    W: VibrationTuple
    omegas: np.ndarray
    phases: Optional[np.ndarray] = None
    resonance_tol: float = RESONANCE_TOL

    def __post_init__(self):
        W = self.W if isinstance(self.W, VibrationTuple) else VibrationTuple(self.W)
        om = np.atleast_1d(np.asarray(self.omegas, float))
        ph = np.zeros_like(om) if self.phases is None else np.atleast_1d(np.asarray(self.phases, float))
        if om.size != W.k or ph.size != W.k:
            raise ValueError("need one frequency and one phase per tuple vector")
        if np.any(om <= 0) or np.any(np.diff(om) <= 0):
            raise ValueError("frequencies must be positive and strictly increasing")
        rationals = _small_rationals(RESONANCE_MAX_PQ)
        for i in range(om.size):
            for j in range(i + 1, om.size):
                r = om[j] / om[i]
                if np.min(np.abs(rationals - r)) < self.resonance_tol:
                    raise ResonantPlan(f"frequency ratio {r:.6g} is near a small rational")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def single(cls, w, omega: float = DEFAULT_OMEGA, phase: float = 0.0) -> "VibrationPlan":
        return cls(VibrationTuple(np.atleast_2d(np.asarray(w, float))), [omega], [phase])

    @property
    def omega_min(self) -> float:
        return float(self.omegas[0])

    @property
    def omega_max(self) -> float:
        return float(self.omegas[-1])

    def separation_ratio(self, natural_frequency: float) -> float:
        """``omega_min / natural_frequency``; defaults aim for at least 20."""
        return self.omega_min / max(natural_frequency, 1e-300)

    def to_dict(self) -> dict:
        return {"W": self.W.W, "omegas": self.omegas, "phases": self.phases}


def synthesize_signal(plan: VibrationPlan, u_bar, horizon) -> ControlSignal:
    """Sinusoidal realization of ``plan`` around ``u_bar`` on ``horizon``.

    ``horizon`` is ``t1`` or a pair ``(t0, t1)``.
    """
    t0, t1 = (0.0, float(horizon)) if np.isscalar(horizon) else map(float, horizon)
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    if plan.W.dim_u != u_bar.size:
        raise DimensionError(f"plan vectors have length {plan.W.dim_u}, expected {u_bar.size}")
    amplitudes = math.sqrt(2.0) * plan.W.W / plan.omegas[:, None]
    return ControlSignal.sinusoid(u_bar, amplitudes, plan.omegas, plan.phases, t0, t1)


def _check_step(plan: VibrationPlan, step: float) -> None:
    limit = 2 * math.pi / plan.omega_max / 50
    if step > limit * (1 + 1e-12):
        raise ValueError(f"step {step:.3g} exceeds (2 pi / omega_max) / 50 = {limit:.3g}")


def run_open_loop(model: MetricModel, force: ForceModel, plan: VibrationPlan, initial: ReducedState,
                  horizon: float, step: float, q_bar=None, exit_radius: Optional[float] = None,
                  kernel: Optional[ReducedKernel] = None, store_every: int = 10):
    """Integrate with the synthesized signal around ``initial.u``.

    Returns ``(trajectory, metrics)`` with ``sup_dq = sup |q - q_bar|``,
    ``sup_p = sup |p|`` and ``sup_drift = sup |q - q(0)|``; ``q_bar``
    defaults to the origin.  With ``exit_radius`` the run stops once
    ``|q - q_bar| > exit_radius`` and ``exit_time`` records when.
    """
    _check_step(plan, step)
    q_bar = initial.q * 0 if q_bar is None else np.atleast_1d(np.asarray(q_bar, float))
    signal = synthesize_signal(plan, initial.u, horizon)
    stop = None
    if exit_radius is not None:
        def stop(t, q, p):
            return np.abs(q - q_bar).max() > exit_radius
    traj = integrate(model, force, signal, initial, dt=step, store_every=store_every,
                     stop_when=stop, kernel=kernel)
    dq = np.abs(traj.q - q_bar).max(axis=1)
    exited = bool(exit_radius is not None and dq[-1] > exit_radius)
    metrics = {
        "sup_dq": float(dq.max()),
        "sup_p": float(np.abs(traj.p).max()),
        "sup_drift": float(np.abs(traj.q - initial.q).max()),
        "final_q": traj.q[-1],
        "final_p": traj.p[-1],
        "exit_time": float(traj.times[-1]) if exited else None,
        "horizon": float(horizon),
        "step": float(step),
        "plan": plan.to_dict(),
    }
    return traj, metrics


@dataclass
class FeedbackResult:
    trajectory: Trajectory
    metrics: dict = field(default_factory=dict)


def _gain(A: np.ndarray, B: np.ndarray, poles: Sequence[float]) -> np.ndarray:
    """State feedback ``K`` with eigenvalues of ``A - B K`` at ``poles``."""
    n = A.shape[0]
    poles = np.asarray(poles, float)
    if B.shape[1] == 1:
        # Ackermann: repeated poles are allowed for a single input
        C = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        coeffs = np.poly(poles)
        phi = sum(c * np.linalg.matrix_power(A, n - k) for k, c in enumerate(coeffs))
        e_n = np.zeros((1, n))
        e_n[0, -1] = 1.0
        return e_n @ np.linalg.solve(C, phi)
    return place_poles(A, B, poles).gain_matrix


def run_feedback(model: MetricModel, force: ForceModel, q_bar, u_bar, initial: ReducedState,
                 horizon: float, poles: Optional[Sequence[float]] = None,
                 omega: Optional[float] = None, step: Optional[float] = None,
                 xi_max: Optional[float] = None, kernel: Optional[ReducedKernel] = None,
                 store_every: int = 8) -> FeedbackResult:
    """Stabilize ``(q_bar, 0, u_bar)`` by amplitude-modulated vibration.

    The selection ``gamma = (0, sign E'(q_bar) xi)`` is linearized, a gain
    places the closed-loop poles (default all at -1) and once per vibration
    period the cone variable ``xi = clamp(xi_bar - K (q - q_bar, p))`` is
    realized by the amplitude ``sqrt(2 xi / |E'(q)|)``.  Supports N = M = 1.
    """
    if model.dim_q != 1 or model.dim_u != 1:
        raise DimensionError("amplitude-modulated feedback supports N = M = 1")
    q_bar = np.atleast_1d(np.asarray(q_bar, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    sel = scalar_cone_selection(model, force, u_bar, q_bar[0])
    x_bar = np.array([q_bar[0], 0.0])
    xi_bar = sel.xi_bar(q_bar[0])
    A, B = selection_linearization(sel.drift, sel.selection, x_bar, xi_bar,
                                   cone=sel.cone if sel.sign else None)
    rank, sv = kalman_rank(A, B)
    if rank < 2:
        raise UncontrollableLinearization(f"Kalman rank {rank} < 2 (singular values {sv})")
    if float(xi_bar[0]) < 0:
        raise UncontrollableLinearization("equilibrium requires a cone value outside the cone")
    poles = [-1.0, -1.0] if poles is None else list(poles)
    K = _gain(A, B, poles)

    natural = max(float(np.abs(np.linalg.eigvals(A)).max()), float(np.abs(poles).max()), 1.0)
    omega = max(DEFAULT_OMEGA, SEPARATION_FACTOR * natural) if omega is None else float(omega)
    period = 2 * math.pi / omega
    step = period / 64 if step is None else float(step)
    plan_check = VibrationPlan.single([0.0], omega)
    _check_step(plan_check, step)
    steps_per_epoch = max(1, int(round(period / step)))
    dt = period / steps_per_epoch
    xi_max = 10.0 * abs(float(xi_bar[0])) + 10.0 if xi_max is None else float(xi_max)

    t, q, p = 0.0, initial.q.copy(), initial.p.copy()
    if np.abs(initial.u - u_bar).max() > 1e-12:
        raise ValueError("initial u must equal u_bar")
    n_epochs = int(math.ceil(horizon / period - 1e-9))
    parts, saturated, amps = [], 0, []
    for n in range(n_epochs):
        x = np.array([q[0] - q_bar[0], p[0]])
        xi_raw = float(xi_bar[0] - (K @ x)[0])
        xi = min(max(xi_raw, 0.0), xi_max)
        if xi != xi_raw:
            saturated += 1
        dE = reduced_blocks(model, q, u_bar).dE_dq[0, 0, 0]
        amp = math.sqrt(2.0 * xi / abs(dE)) if xi > 0 and abs(dE) > 1e-12 else 0.0
        amps.append(amp)
        t1 = min((n + 1) * period, horizon)
        if t1 <= t:
            break
        signal = ControlSignal.sinusoid(u_bar, [[math.sqrt(2.0) * amp / omega]], [omega],
                                        [-omega * t], t, t1)
        seg = integrate(model, force, signal, ReducedState.make(q, p, u_bar), dt=dt,
                        store_every=store_every, kernel=kernel)
        parts.append(seg if n == 0 else _drop_first(seg))
        t, q, p = float(seg.times[-1]), seg.q[-1].copy(), seg.p[-1].copy()
        # the signal returns to u_bar at every epoch boundary
    if saturated:
        warnings.warn(f"cone variable clamped in {saturated} of {len(amps)} epochs", ConeClampSaturated)
        log.info("cone clamp saturated in %d epochs", saturated)
    traj = _concat(parts)
    metrics = {
        "final_dq": float(abs(q[0] - q_bar[0])),
        "final_p": float(abs(p[0])),
        "gain": K, "poles": poles, "A": A, "B": B, "xi_bar": float(xi_bar[0]),
        "cone_sign": sel.sign, "omega": omega, "step": dt, "epochs": len(amps),
        "saturated_epochs": saturated, "max_amplitude": float(max(amps) if amps else 0.0),
        "natural_frequency": natural, "separation_ratio": omega / natural,
        "horizon": float(horizon),
    }
    return FeedbackResult(traj, metrics)


def _drop_first(traj: Trajectory) -> Trajectory:
    return Trajectory(traj.times[1:], traj.q[1:], traj.p[1:], traj.u[1:], traj.w[1:], traj.meta)


def _concat(parts) -> Trajectory:
    return Trajectory(np.concatenate([s.times for s in parts]), np.vstack([s.q for s in parts]),
                      np.vstack([s.p for s in parts]), np.vstack([s.u for s in parts]),
                      np.vstack([s.w for s in parts]),
                      {"method": "rk4", "step": parts[0].meta.get("step"), "segments": len(parts)})
