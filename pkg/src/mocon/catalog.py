"""Ready-made mechanical systems with analytic metrics, partials and forces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import ForceModel, Potential, ReducedKernel
from .errors import ConfigError, DomainError
from .metric import MetricModel, ReducedBlocks, blocks_from_metric

DEFAULT_G = 9.8
BEAD_Q_MIN = 1e-3


@dataclass(frozen=True)
class CatalogEntry:
    """A catalog system.

    ``closed_forms`` maps names such as ``"A"``, ``"E"``, ``"K"`` or ``"dE_dq"``
    to callables of ``(q, u)`` returning the documented analytic matrices.
    """

    name: str
    model: MetricModel
    force: ForceModel
    params: dict
    closed_forms: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    description: str = ""
    kernel: Optional[ReducedKernel] = None


def _scalar_blocks(g11, g22, g12, A, E, K, dA, dE, dK, dAu=0.0, dEu=0.0, dKu=0.0) -> ReducedBlocks:
    v = np.array([g11, g22, g12, A, E, K, dA, dE, dK, dAu, dEu, dKu], dtype=float)
    m = v.reshape(12, 1, 1)
    d = v.reshape(12, 1, 1, 1)
    return ReducedBlocks(
        G1=m[0], G2=m[1], G12=m[2], A=m[3], E=m[4], K=m[5],
        dA_dq=d[6], dE_dq=d[7], dK_dq=d[8], dA_du=d[9], dE_du=d[10], dK_du=d[11],
    )


# pendulum with oscillating pivot ---------------------------------------------

def pendulum_oscillating_pivot(g: float = DEFAULT_G, pivot_mass: float = 1.0) -> CatalogEntry:
    """Pendulum whose pivot slides along a horizontal line.

    ``G = [[1, -sin q], [-sin q, 1 + pivot_mass]]`` and ``U = g cos q``, with
    q measured from the upright position.  Reduced blocks: ``A = 1``,
    ``K = sin q`` and ``E = pivot_mass + cos^2 q``.
    """
    if not g > 0:
        raise ValueError("g must be positive")
    m2 = 1.0 + pivot_mass

    def metric(q, u):
        s = np.sin(q[0])
        return np.array([[1.0, -s], [-s, m2]])

    def partials(q, u):
        c = np.cos(q[0])
        dG = np.zeros((2, 2, 2))
        dG[0] = [[0.0, -c], [-c, 0.0]]
        return dG

    def closed(q, u):
        s, c = np.sin(q[0]), np.cos(q[0])
        return _scalar_blocks(1.0, m2, -s, 1.0, m2 - s * s, s, 0.0, -2.0 * s * c, c)

    model = MetricModel(1, 1, metric, partials, closed_form=closed, name="pendulum")
    potential = Potential(
        lambda q, u: g * np.cos(q[0]),
        grad_q=lambda q, u: np.array([-g * np.sin(q[0])]),
        grad_u=lambda q, u: np.zeros(1),
    )
    force = ForceModel(f0=lambda q, p, u: np.array([g * np.sin(q[0])]), potential=potential)
    forms = {
        "A": lambda q, u: np.array([[1.0]]),
        "E": lambda q, u: np.array([[m2 - np.sin(q[0]) ** 2]]),
        "K": lambda q, u: np.array([[np.sin(q[0])]]),
        "dE_dq": lambda q, u: np.array([[[-2.0 * np.sin(q[0]) * np.cos(q[0])]]]),
    }
    def k_rhs(q, p, u, w):
        sq, cq = math.sin(q[0]), math.cos(q[0])
        pv, wv = p[0], w[0]
        return (np.array([pv + sq * wv]),
                np.array([g * sq - pv * cq * wv - sq * cq * wv * wv]))

    def k_lifted(x):
        sq, cq = math.sin(x[0]), math.cos(x[0])
        return (np.array([x[1], g * sq, 0.0]), np.array([[sq, -x[1] * cq, 1.0]]),
                np.array([[[0.0, -sq * cq, 0.0]]]))

    return CatalogEntry("pendulum", model, force, {"g": g, "pivot_mass": pivot_mass}, forms,
                        {"upright": (np.zeros(1), np.zeros(1)), "downward": (np.array([np.pi]), np.zeros(1))},
                        "pendulum with oscillating pivot", ReducedKernel(k_rhs, k_lifted))


# sliding bead ----------------------------------------------------------------

def sliding_bead(g: float = DEFAULT_G, q_min: float = BEAD_Q_MIN) -> CatalogEntry:
    """Bead on a rod rotating in a vertical plane; u is the rod angle.

    ``G = diag(1, q^2)`` and ``U = g q cos u`` (hence ``dp/dt = -g cos u + q w^2``).
    Points with ``q <= q_min`` raise DomainError.
    """
    if not g > 0:
        raise ValueError("g must be positive")

    def _check(q):
        if q[0] <= q_min:
            raise DomainError(f"bead metric degenerates at q={q[0]:.6g} <= {q_min}")

    def metric(q, u):
        _check(q)
        return np.array([[1.0, 0.0], [0.0, q[0] ** 2]])

    def partials(q, u):
        dG = np.zeros((2, 2, 2))
        dG[0, 1, 1] = 2.0 * q[0]
        return dG

    def closed(q, u):
        _check(q)
        q2 = q[0] * q[0]
        return _scalar_blocks(1.0, q2, 0.0, 1.0, q2, 0.0, 0.0, 2.0 * q[0], 0.0)

    model = MetricModel(1, 1, metric, partials, closed_form=closed, name="bead")
    potential = Potential(
        lambda q, u: g * q[0] * np.cos(u[0]),
        grad_q=lambda q, u: np.array([g * np.cos(u[0])]),
        grad_u=lambda q, u: np.array([-g * q[0] * np.sin(u[0])]),
    )
    force = ForceModel(f0=lambda q, p, u: np.array([-g * np.cos(u[0])]), potential=potential)
    forms = {
        "A": lambda q, u: np.array([[1.0]]),
        "E": lambda q, u: np.array([[q[0] ** 2]]),
        "K": lambda q, u: np.array([[0.0]]),
        "dE_dq": lambda q, u: np.array([[[2.0 * q[0]]]]),
    }
    def k_rhs(q, p, u, w):
        _check(q)
        return np.array([p[0]]), np.array([q[0] * w[0] * w[0] - g * math.cos(u[0])])

    def k_lifted(x):
        _check(x[:1])
        return (np.array([x[1], -g * math.cos(x[2]), 0.0]), np.array([[0.0, 0.0, 1.0]]),
                np.array([[[0.0, x[0], 0.0]]]))

    return CatalogEntry("bead", model, force, {"g": g, "q_min": q_min}, forms,
                        {"reference": (np.ones(1), np.zeros(1))}, "bead sliding on a rotating rod",
                        ReducedKernel(k_rhs, k_lifted))


# double pendulum -------------------------------------------------------------

def _dp_denominator(q):
    return -3.0 + np.cos(2.0 * (q[0] - q[1]))


def double_pendulum(g: float = DEFAULT_G, pivot_mass: float = 1.0) -> CatalogEntry:
    """Double pendulum with unit masses and links, pivot moved in the plane.

    E is derived from G by block algebra.  The closed forms below use
    ``cos 2(q1 - q2)`` in the denominator and serve as cross-checks.
    """
    if not g > 0:
        raise ValueError("g must be positive")
    m3 = 2.0 + pivot_mass

    def metric(q, u):
        q1, q2 = q
        c12 = np.cos(q1 - q2)
        return np.array([
            [2.0, c12, 2 * np.cos(q1), -2 * np.sin(q1)],
            [c12, 1.0, np.cos(q2), -np.sin(q2)],
            [2 * np.cos(q1), np.cos(q2), m3, 0.0],
            [-2 * np.sin(q1), -np.sin(q2), 0.0, m3],
        ])

    def partials(q, u):
        q1, q2 = q
        s12 = np.sin(q1 - q2)
        dG = np.zeros((4, 4, 4))
        d1 = np.zeros((4, 4))
        d1[0, 1] = d1[1, 0] = -s12
        d1[0, 2] = d1[2, 0] = -2 * np.sin(q1)
        d1[0, 3] = d1[3, 0] = -2 * np.cos(q1)
        d2 = np.zeros((4, 4))
        d2[0, 1] = d2[1, 0] = s12
        d2[1, 2] = d2[2, 1] = -np.sin(q2)
        d2[1, 3] = d2[3, 1] = -np.cos(q2)
        dG[0], dG[1] = d1, d2
        return dG

    model = MetricModel(2, 2, metric, partials, name="double-pendulum")
    model = MetricModel(2, 2, metric, partials, closed_form=lambda q, u: blocks_from_metric(model, q, u),
                        name="double-pendulum")

    def E_closed(q, u):
        d = _dp_denominator(q)
        s1, c1 = np.sin(q[0]), np.cos(q[0])
        off = -2.0 * np.sin(2 * q[0]) / d
        return np.array([[1 - 4 * s1**2 / d, off], [off, 1 - 4 * c1**2 / d]])

    def dE1(q, u):
        q1, q2 = q
        d2 = _dp_denominator(q) ** 2
        off = -4 * (-3 * np.cos(2 * q1) + np.cos(2 * q2)) / d2
        return np.array([
            [8 * np.sin(q1) * (3 * np.cos(q1) - np.cos(q1 - 2 * q2)) / d2, off],
            [off, -8 * np.cos(q1) * (3 * np.sin(q1) + np.sin(q1 - 2 * q2)) / d2],
        ])

    def dE2(q, u):
        q1, q2 = q
        d2 = _dp_denominator(q) ** 2
        s = np.sin(2 * (q1 - q2))
        return np.array([
            [8 * np.sin(q1) ** 2 * s / d2, 4 * np.sin(2 * q1) * s / d2],
            [4 * np.sin(2 * q1) * s / d2, 8 * np.cos(q1) ** 2 * s / d2],
        ])

    potential = Potential(
        lambda q, u: g * (2 * np.cos(q[0]) + np.cos(q[1])),
        grad_q=lambda q, u: np.array([-2 * g * np.sin(q[0]), -g * np.sin(q[1])]),
        grad_u=lambda q, u: np.zeros(2),
    )
    force = ForceModel(f0=lambda q, p, u: np.array([2 * g * np.sin(q[0]), g * np.sin(q[1])]),
                       potential=potential)
    forms = {
        "E": E_closed,
        "dE_dq": lambda q, u: np.array([dE1(q, u), dE2(q, u)]),
        "det_dE_dq1": lambda q, u: -16.0 / _dp_denominator(q) ** 2,
        "det_dE_dq2": lambda q, u: 0.0,
    }
    return CatalogEntry("double-pendulum", model, force, {"g": g, "pivot_mass": pivot_mass}, forms,
                        {"upright": (np.zeros(2), np.zeros(2)),
                         "tilted": (np.array([0.3, -0.05]), np.zeros(2))},
                        "double pendulum with moving pivot")


# synthetic fixtures ----------------------------------------------------------

def synthetic_diag(e: Callable[[float], float], de: Optional[Callable[[float], float]] = None,
                   name: str = "synthetic") -> CatalogEntry:
    """``G = diag(1, e(q))`` with zero force; ``de`` is the analytic derivative."""
    h = 1e-6

    def de_num(x):
        if de is not None:
            return float(de(x))
        return (e(x + h) - e(x - h)) / (2 * h)

    def metric(q, u):
        val = float(e(q[0]))
        if not val > 0:
            raise DomainError(f"e(q) = {val} is not positive at q={q[0]}")
        return np.array([[1.0, 0.0], [0.0, val]])

    def partials(q, u):
        dG = np.zeros((2, 2, 2))
        dG[0, 1, 1] = de_num(q[0])
        return dG

    def closed(q, u):
        e_q = metric(q, u)[1, 1]
        return _scalar_blocks(1.0, e_q, 0.0, 1.0, e_q, 0.0, 0.0, de_num(q[0]), 0.0)

    model = MetricModel(1, 1, metric, partials, closed_form=closed, name=name)
    potential = Potential(lambda q, u: 0.0, grad_q=lambda q, u: np.zeros(1),
                          grad_u=lambda q, u: np.zeros(1))
    forms = {
        "A": lambda q, u: np.array([[1.0]]),
        "E": lambda q, u: np.array([[float(e(q[0]))]]),
        "K": lambda q, u: np.array([[0.0]]),
        "dE_dq": lambda q, u: np.array([[[de_num(q[0])]]]),
    }
    return CatalogEntry(name, model, ForceModel(potential=potential), {}, forms,
                        {"origin": (np.zeros(1), np.zeros(1))}, "diagonal metric diag(1, e(q))")


def synthetic_linear() -> CatalogEntry:
    """``diag(1, 1 + q)``: unit orthogonal curvature at the origin."""
    return synthetic_diag(lambda x: 1.0 + x, lambda x: 1.0, name="synthetic-linear")


def identity_metric(dim_q: int = 1, dim_u: int = 1) -> CatalogEntry:
    """Constant identity metric with zero force."""
    D = dim_q + dim_u
    model = MetricModel(dim_q, dim_u, lambda q, u: np.eye(D), lambda q, u: np.zeros((D, D, D)),
                        name="identity")
    potential = Potential(lambda q, u: 0.0, grad_q=lambda q, u: np.zeros(dim_q),
                          grad_u=lambda q, u: np.zeros(dim_u))
    return CatalogEntry("identity", model, ForceModel(potential=potential),
                        {"dim_q": dim_q, "dim_u": dim_u}, {},
                        {"origin": (np.zeros(dim_q), np.zeros(dim_u))}, "identity metric")


def nfit_fixture() -> CatalogEntry:
    """``diag(1, 1 + u^2)``: E depends on u only, so the foliation is N-fit."""

    def metric(q, u):
        return np.array([[1.0, 0.0], [0.0, 1.0 + u[0] ** 2]])

    def partials(q, u):
        dG = np.zeros((2, 2, 2))
        dG[1, 1, 1] = 2.0 * u[0]
        return dG

    def closed(q, u):
        e_u = 1.0 + u[0] ** 2
        return _scalar_blocks(1.0, e_u, 0.0, 1.0, e_u, 0.0, 0.0, 0.0, 0.0, dEu=2.0 * u[0])

    model = MetricModel(1, 1, metric, partials, closed_form=closed, name="nfit")
    potential = Potential(lambda q, u: 0.0, grad_q=lambda q, u: np.zeros(1),
                          grad_u=lambda q, u: np.zeros(1))
    return CatalogEntry("nfit", model, ForceModel(potential=potential), {}, {
        "E": lambda q, u: np.array([[1.0 + u[0] ** 2]]),
        "dE_dq": lambda q, u: np.zeros((1, 1, 1)),
    }, {"origin": (np.zeros(1), np.zeros(1))}, "N-fit metric diag(1, 1 + u^2)")


_REGISTRY = {
    "pendulum": (pendulum_oscillating_pivot, {"g", "pivot_mass"}),
    "bead": (sliding_bead, {"g", "q_min"}),
    "double-pendulum": (double_pendulum, {"g", "pivot_mass"}),
    "synthetic-linear": (synthetic_linear, set()),
    "identity": (identity_metric, {"dim_q", "dim_u"}),
    "nfit": (nfit_fixture, set()),
}


_INTEGER_PARAMS = {"dim_q", "dim_u"}


def names() -> list:
    return sorted(_REGISTRY)


def parameters(name: str) -> list:
    """Parameter names accepted by :func:`build` for ``name``."""
    if name not in _REGISTRY:
        raise ConfigError(f"unknown system {name!r}; available: {', '.join(names())}")
    return sorted(_REGISTRY[name][1])


def build(name: str, **params) -> CatalogEntry:
    """Construct a catalog entry by name; unknown names or parameters raise ConfigError."""
    try:
        factory, allowed = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown system {name!r}; available: {', '.join(names())}") from None
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"system {name!r} does not accept parameters {sorted(extra)}")
    params = dict(params)
    for key, value in params.items():
        if key in _INTEGER_PARAMS:
            if float(value) != int(value) or int(value) < 1:
                raise ConfigError(f"{key} must be a positive integer")
            params[key] = int(value)
        elif not math.isfinite(float(value)) or float(value) <= 0:
            raise ConfigError(f"{key} must be positive")
    return factory(**params)


def sample_points(entry: CatalogEntry, n: int, seed: int = 0):
    """Random ``(q, u)`` points inside the entry's natural domain."""
    rng = np.random.default_rng(seed)
    N, M = entry.model.dim_q, entry.model.dim_u
    pts = []
    for _ in range(n):
        if entry.name == "bead":
            q = rng.uniform(0.1, 3.0, N)
        elif entry.name == "synthetic-linear":
            q = rng.uniform(-0.5, 2.0, N)
        else:
            q = rng.uniform(-np.pi, np.pi, N)
        pts.append((q, rng.uniform(-1.0, 1.0, M)))
    return pts
