"""Quadratic impulsive systems and their graph reparametrization.

A system ``dx/dt = f(x) + sum_a g_a(x) w^a + sum_ab h_ab(x) w^a w^b`` with
``w = du/dt`` unbounded is rewritten in the parameter
``s(t) = int_0^t (1 + |w|^2)``.  With ``a^0 = 1/sqrt(1 + |w|^2)`` and
``a^a = w^a a^0`` the control lives on the unit sphere and::

    dt/ds = (a^0)^2
    dx/ds = f (a^0)^2 + sum_a g_a a^0 a^a + sum_ab h_ab a^a a^b
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.stats import norm, qmc

from .dynamics import ControlSignal, ForceModel, ReducedKernel, ReducedState, integrate
from .errors import SphereViolation, ZeroTimeComponent
from .io import write_table
from .metric import MetricModel, reduced_blocks

SPHERE_TOL = 1e-9
A0_MIN = 1e-8

# Gauss-Legendre rule used for all cumulative integrals
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class QuadraticControlSystem:
    """``f(x) -> (n,)``, ``g(x) -> (m, n)`` and ``h(x) -> (m, m, n)``."""

    dim_x: int
    dim_u: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    name: str = "system"
    fields_fn: Optional[Callable[[np.ndarray], tuple]] = None

    def fields(self, x):
        """``(f, g, h)`` at x; ``fields_fn`` evaluates all three at once when given."""
        x = np.asarray(x, float)
        if self.fields_fn is not None:
            return self.fields_fn(x)
        return (np.asarray(self.f(x), float), np.asarray(self.g(x), float).reshape(self.dim_u, self.dim_x),
                np.asarray(self.h(x), float).reshape(self.dim_u, self.dim_u, self.dim_x))

    def velocity(self, x, w) -> np.ndarray:
        """``dx/dt`` for control velocity ``w``."""
        f, g, h = self.fields(x)
        w = np.atleast_1d(np.asarray(w, float))
        return f + w @ g + np.einsum("a,b,abn->n", w, w, h)

    def graph_velocity(self, x, a) -> np.ndarray:
        """``dx/ds`` for sphere control ``a = (a0, a1, ..., am)``."""
        f, g, h = self.fields(x)
        a0, aa = a[0], a[1:]
        return f * (a0 * a0) + a0 * (aa @ g) + aa @ (aa @ h)

    def check_symmetry(self, points, tol: float = 1e-12) -> float:
        worst = 0.0
        for x in points:
            h = self.fields(x)[2]
            worst = max(worst, float(np.abs(h - np.swapaxes(h, 0, 1)).max()))
        if worst > tol:
            raise ValueError(f"h is not symmetric in its control indices ({worst:.3e})")
        return worst

    def generator_matrix(self, x, d, d0: float = 0.0) -> np.ndarray:
        """Quadratic form ``Q`` with ``d0 a0^2 + d . dx/ds = a^T Q a``."""
        f, g, h = self.fields(x)
        d = np.asarray(d, float)
        m = self.dim_u
        Q = np.empty((m + 1, m + 1))
        Q[0, 0] = d0 + d @ f
        Q[0, 1:] = Q[1:, 0] = 0.5 * (g @ d)
        Q[1:, 1:] = h @ d
        return 0.5 * (Q + Q.T)


def lift_mechanical(model: MetricModel, force: ForceModel,
                    kernel: Optional[ReducedKernel] = None) -> QuadraticControlSystem:
    """Write the reduced mechanical equations as a quadratic system in ``x = (q, p, u)``.

    ``f = (A p, -1/2 p dA p + F0, 0)``, ``g_a = (K e_a, -p dK e_a + F1 e_a, e_a)``
    and ``h_ab = (0, 1/2 dE_ab/dq, 0)``.  A kernel with ``lifted_fields``
    replaces the generic evaluation.
    """
    N, M = model.dim_q, model.dim_u
    n = 2 * N + M
    eye = np.eye(M)

    def fields(x):
        q, p, u = x[:N], x[N:2 * N], x[2 * N:]
        b = reduced_blocks(model, q, u)
        f = np.zeros(n)
        f[:N] = b.A @ p
        f[N:2 * N] = -0.5 * (b.dA_dq @ p) @ p + force.force0(q, p, u)
        g = np.zeros((M, n))
        g[:, :N] = b.K.T
        g[:, N:2 * N] = -np.einsum("j,ija->ai", p, b.dK_dq)
        f1 = force.force1(q, p, u, M)
        if f1 is not None:
            g[:, N:2 * N] += f1.T
        g[:, 2 * N:] = eye
        h = np.zeros((M, M, n))
        h[:, :, N:2 * N] = 0.5 * np.moveaxis(b.dE_dq, 0, -1)
        return f, g, h

    fast = fields if kernel is None or kernel.lifted_fields is None else kernel.lifted_fields
    return QuadraticControlSystem(n, M, lambda x: fast(x)[0], lambda x: fast(x)[1],
                                  lambda x: fast(x)[2], name=f"lifted {model.name}",
                                  fields_fn=fast)


@dataclass(frozen=True)
class GraphControl:
    """Sphere-valued control ``s -> (a0, a1, ..., am)``."""

    func: Callable[[float], np.ndarray]
    dim_u: int
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def many(self, s_values) -> np.ndarray:
        """Evaluate at many parameters at once, shape (n, m + 1), with the same checks."""
        s_values = np.asarray(s_values, float)
        if self.batch is None:
            return np.array([self(s) for s in s_values])
        a = np.asarray(self.batch(s_values), float).reshape(len(s_values), self.dim_u + 1)
        norm_err = np.abs(np.einsum("ki,ki->k", a, a) - 1.0)
        bad = (a[:, 0] < -SPHERE_TOL) | (a[:, 0] > 1 + SPHERE_TOL) | (norm_err > SPHERE_TOL)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise SphereViolation(f"graph control {a[k]} at s={s_values[k]} leaves the hemisphere")
        return a

    def __call__(self, s) -> np.ndarray:
        a = np.atleast_1d(np.asarray(self.func(s), float))
        if a.shape != (self.dim_u + 1,):
            raise SphereViolation(f"graph control has shape {a.shape}, expected ({self.dim_u + 1},)")
        if not (-SPHERE_TOL <= a[0] <= 1 + SPHERE_TOL) or abs(a @ a - 1.0) > SPHERE_TOL:
            raise SphereViolation(f"graph control {a} at s={s} leaves the hemisphere")
        return a

    @classmethod
    def constant(cls, a) -> "GraphControl":
        a = np.atleast_1d(np.asarray(a, float)).copy()
        return cls(lambda s: a, a.size - 1)


class _CumulativeMap:
    """Monotone map ``y(x) = y0 + int_{x0}^x rate`` and its inverse.

    Node values come from Gauss-Legendre quadrature; between nodes both
    directions use cubic Hermite interpolation with the exact slopes
    ``rate`` and ``1 / rate``, which is fourth-order accurate.
    """

    def __init__(self, rate: Callable[[float], float], nodes: np.ndarray, y0: float = 0.0):
        self.rate = rate
        self.x = np.asarray(nodes, float)
        pieces = [self._piece(a, b) for a, b in zip(self.x[:-1], self.x[1:])]
        self.y = y0 + np.concatenate([[0.0], np.cumsum(pieces)])
        if np.any(np.diff(self.y) <= 0):
            raise ZeroTimeComponent("time map is not strictly increasing")
        r = np.array([rate(x) for x in self.x])
        self._fwd = CubicHermiteSpline(self.x, self.y, r)
        self._inv = CubicHermiteSpline(self.y, self.x, 1.0 / r)

    def _piece(self, a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return half * sum(w * self.rate(mid + half * xi) for xi, w in zip(_GL_X, _GL_W))

    def __call__(self, x):
        return self._fwd(x)[()]

    def inverse(self, y):
        return self._inv(y)[()]


@dataclass(frozen=True)
class TimeWarp:
    """Monotone correspondence between time t and graph parameter s."""

    t_nodes: np.ndarray
    s_nodes: np.ndarray
    s_of_t: Callable[[float], float]
    t_of_s: Callable[[float], float]

    def __post_init__(self):
        if np.any(np.diff(self.t_nodes) < 0) or np.any(np.diff(self.s_nodes) <= 0):
            raise ValueError("time warp nodes must be monotone")
        dt = np.diff(self.t_nodes) / np.diff(self.s_nodes)
        if np.any(dt > 1 + 1e-12):
            raise ValueError("dt/ds exceeds 1")

    @property
    def total_s(self) -> float:
        return float(self.s_nodes[-1])


def warp_from_signal(signal: ControlSignal, n_nodes: int = 4001):
    """Time warp and sphere control induced by a smooth control signal."""
    t_nodes = np.linspace(signal.t0, signal.t1, n_nodes)
    fwd = _CumulativeMap(lambda t: 1.0 + float(signal.w(t) @ signal.w(t)), t_nodes, 0.0)
    warp = TimeWarp(t_nodes, fwd.y.copy(), fwd, fwd.inverse)

    def a_of_s(s):
        w = signal.w(fwd.inverse(s))
        a0 = 1.0 / np.sqrt(1.0 + w @ w)
        return np.concatenate([[a0], a0 * w])

    def batch(s_values):
        w = np.array([signal.w(t) for t in fwd.inverse(s_values)])
        a0 = 1.0 / np.sqrt(1.0 + np.einsum("ka,ka->k", w, w))
        return np.column_stack([a0, a0[:, None] * w])

    return warp, GraphControl(a_of_s, signal.u(signal.t0).size, batch)


def warp_from_graph(control: GraphControl, total_s: float, n_nodes: int = 4001,
                    t0: float = 0.0) -> TimeWarp:
    """Time warp ``t(s) = t0 + int (a0)^2 ds``; needs ``a0 > 0``."""
    s_nodes = np.linspace(0.0, total_s, n_nodes)
    a0 = np.array([control(s)[0] for s in s_nodes])
    if a0.min() <= A0_MIN:
        raise ZeroTimeComponent(f"a0 reaches {a0.min():.3e}; time does not advance")
    inv = _CumulativeMap(lambda s: control(s)[0] ** 2, s_nodes, t0)
    return TimeWarp(inv.y.copy(), s_nodes, inv.inverse, inv)


def recover_controls(control: GraphControl, warp: TimeWarp, u0=None,
                     n_nodes: int = 2001) -> ControlSignal:
    """Control path with ``du/dt = a / a0`` evaluated along ``s(t)``."""
    t0, t1 = float(warp.t_nodes[0]), float(warp.t_nodes[-1])
    M = control.dim_u
    u0 = np.zeros(M) if u0 is None else np.atleast_1d(np.asarray(u0, float))
    a0 = np.array([control(s)[0] for s in warp.s_nodes])
    if a0.min() <= A0_MIN:
        raise ZeroTimeComponent(f"a0 reaches {a0.min():.3e}; controls cannot be recovered")

    def w_of_t(t):
        a = control(warp.s_of_t(t))
        return a[1:] / a[0]

    t_nodes = np.linspace(t0, t1, n_nodes)
    mids = 0.5 * (t_nodes[:-1] + t_nodes[1:])
    halves = 0.5 * np.diff(t_nodes)
    pieces = np.array([h * sum(wt * w_of_t(m + h * xi) for xi, wt in zip(_GL_X, _GL_W))
                       for m, h in zip(mids, halves)]).reshape(-1, M)
    cum = np.vstack([np.zeros(M), np.cumsum(pieces, axis=0)])

    def value(t):
        k = int(np.clip(np.searchsorted(t_nodes, t, side="right") - 1, 0, len(t_nodes) - 2))
        m, h = 0.5 * (t_nodes[k] + t), 0.5 * (t - t_nodes[k])
        part = h * sum(wt * w_of_t(m + h * xi) for xi, wt in zip(_GL_X, _GL_W))
        return u0 + cum[k] + part

    return ControlSignal(value, w_of_t, t0, t1)


@dataclass(frozen=True)
class GraphTrajectory:
    """Extended graph trajectory: parameter s, time t(s) and state x(s)."""

    s: np.ndarray
    t: np.ndarray
    x: np.ndarray

    def to_csv(self, path) -> None:
        header = ["s", "t"] + [f"x{i + 1}" for i in range(self.x.shape[1])]
        write_table(path, header, [self.s, self.t, self.x])


def simulate_graph(system: QuadraticControlSystem, control: GraphControl, x0, total_s: float,
                   step: float, t0: float = 0.0) -> GraphTrajectory:
    """RK4 integration of the graph system from ``(t0, x0)`` over ``[0, total_s]``.

    The control is evaluated (and checked) once at every RK4 stage point.
    """
    x0 = np.asarray(x0, float)
    if x0.shape != (system.dim_x,):
        raise ValueError(f"x0 must have shape ({system.dim_x},)")
    n = max(1, int(round(total_s / step)))
    h = total_s / n
    a_all = control.many(np.arange(2 * n + 1) * (0.5 * h))

    def rhs(a, y):
        return np.concatenate([[a[0] * a[0]], system.graph_velocity(y[1:], a)])

    y = np.concatenate([[t0], x0])
    ys = [y]
    for k in range(n):
        a1, a2, a3 = a_all[2 * k], a_all[2 * k + 1], a_all[2 * k + 2]
        k1 = rhs(a1, y)
        k2 = rhs(a2, y + 0.5 * h * k1)
        k3 = rhs(a2, y + 0.5 * h * k2)
        k4 = rhs(a3, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys.append(y)
    ys = np.array(ys)
    return GraphTrajectory(np.linspace(0.0, total_s, n + 1), ys[:, 0], ys[:, 1:])


def graph_to_time(traj: GraphTrajectory, system: QuadraticControlSystem, control: GraphControl,
                  times) -> np.ndarray:
    """States of a graph trajectory at the given times (inverse time map).

    Uses cubic Hermite interpolation in t with slopes ``(dx/ds) / (dt/ds)``;
    requires ``a0 > 0`` along the trajectory.
    """
    a_all = control.many(traj.s)
    if a_all[:, 0].min() <= A0_MIN:
        raise ZeroTimeComponent("graph trajectory has a pure impulse segment")
    slopes = np.array([system.graph_velocity(x, a) / a[0] ** 2 for x, a in zip(traj.x, a_all)])
    spline = CubicHermiteSpline(traj.t, traj.x, slopes, axis=0)
    return spline(np.asarray(times, float))


def _sphere_points(m: int, n: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points on the upper hemisphere ``a0 >= 0`` of S^m."""
    z = norm.ppf(np.clip(qmc.Halton(d=m + 1, seed=seed).random(n), 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z[:, 0] = np.abs(z[:, 0])
    return z


def fdiamond_support(system: QuadraticControlSystem, x, d, d0: float = 0.0, method: str = "eig",
                     n_samples: int = 10_000, refine_iters: int = 50, seed: int = 0) -> float:
    """Support function of the convexified graph velocity set at ``x``.

    Returns ``sup_a d0 a0^2 + d . dx/ds`` over the hemisphere.  The value is
    ``a^T Q a`` for a symmetric Q, even in a, so the exact supremum is the
    largest eigenvalue (``method="eig"``).  ``method="sample"`` uses dense
    quasi-random sampling with projected gradient refinement.
    """
    Q = system.generator_matrix(x, d, d0)
    if method == "eig":
        return float(np.linalg.eigvalsh(Q)[-1])
    if method != "sample":
        raise ValueError(f"unknown method {method!r}")
    pts = _sphere_points(system.dim_u, n_samples, seed)
    vals = np.einsum("ki,ij,kj->k", pts, Q, pts)
    best = pts[np.argsort(vals)[-8:]]
    step = 0.5 / max(1e-12, np.abs(Q).max())
    for _ in range(refine_iters):
        best = best + step * (best @ Q)
        best /= np.linalg.norm(best, axis=1, keepdims=True)
    refined = np.einsum("ki,ij,kj->k", best, Q, best)
    return float(max(vals.max(), refined.max()))


def generator_points(system: QuadraticControlSystem, x, n_samples: int = 2000, seed: int = 0):
    """Sampled generators ``(a0^2, dx/ds)`` of the extended velocity set."""
    pts = _sphere_points(system.dim_u, n_samples, seed)
    f, g, h = system.fields(x)
    y = (pts[:, :1] ** 2) * f + pts[:, :1] * (pts[:, 1:] @ g) + np.einsum("ka,kb,abn->kn", pts[:, 1:], pts[:, 1:], h)
    return pts[:, 0] ** 2, y


@dataclass(frozen=True)
class RoundTrip:
    """Direct integration versus graph integration mapped back to time."""

    times: np.ndarray
    direct: np.ndarray
    graph: np.ndarray
    graph_trajectory: GraphTrajectory
    control_error: float

    @property
    def state_error(self) -> float:
        return float(np.abs(self.direct - self.graph).max())

    def to_dict(self) -> dict:
        return {"state_error": self.state_error, "control_error": self.control_error,
                "n_times": int(self.times.size), "total_s": float(self.graph_trajectory.s[-1])}


def round_trip(model: MetricModel, force: ForceModel, signal: ControlSignal, q0, p0, dt: float,
               kernel: Optional[ReducedKernel] = None, n_nodes: int = 4001) -> RoundTrip:
    """Compare direct RK4 integration with the graph system on the same step count.

    The graph run uses ``ds = S / n`` where ``n`` is the number of time
    steps, and is mapped back to time through its own ``t(s)`` component.
    """
    q0, p0 = np.atleast_1d(np.asarray(q0, float)), np.atleast_1d(np.asarray(p0, float))
    u0 = signal.u(signal.t0)
    direct = integrate(model, force, signal, ReducedState.make(q0, p0, u0), dt=dt, kernel=kernel)
    system = lift_mechanical(model, force, kernel)
    warp, control = warp_from_signal(signal, n_nodes)
    n = len(direct.times) - 1
    traj = simulate_graph(system, control, np.concatenate([q0, p0, u0]), warp.total_s,
                          warp.total_s / n, t0=signal.t0)
    X = graph_to_time(traj, system, control, direct.times)
    recovered = recover_controls(control, warp, u0)
    ts = np.linspace(signal.t0, signal.t1, 401)
    cerr = float(max(np.abs(recovered.u(t) - signal.u(t)).max() for t in ts))
    D = np.column_stack([direct.q, direct.p, direct.u])
    return RoundTrip(direct.times, D, X, traj, cerr)
