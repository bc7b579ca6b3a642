"""Stabilizability tests: weak Lyapunov condition with positive time
component, Kalman rank of selection linearizations, the rank/equilibrium
test for vibration tuples and the effective-potential minimum test.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import svdvals
from scipy.optimize import least_squares, linprog, minimize_scalar
from scipy.stats import norm, qmc

from .dynamics import ForceModel, Potential
from .errors import (DimensionError, InvalidLyapunovCandidate, MissingPotential,
                     NotAnEquilibrium, SelectionOutsideCone)
from .io import dumps
from .metric import MetricModel, reduced_blocks
from .reparam import QuadraticControlSystem, _sphere_points

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


# data types ------------------------------------------------------------------

@dataclass(frozen=True)
class VibrationTuple:
    """Vectors ``w_1, ..., w_k`` in R^M stored as rows of a (k, M) array."""

    W: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if W.shape[0] < 1 or W.size == 0:
            raise ValueError("a vibration tuple needs at least one vector")
        if not np.all(np.isfinite(W)):
            raise ValueError("vibration tuple entries must be finite")
        object.__setattr__(self, "W", W)

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def dim_u(self) -> int:
        return self.W.shape[1]

    def second_moment(self) -> np.ndarray:
        """``sum_l w_l w_l^T``."""
        return self.W.T @ self.W


@dataclass
class StabilityReport:
    """Outcome of a stabilizability test; serializes to JSON."""

    test: str
    verdict: str
    params: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    rank: Optional[int] = None
    singular_values: Optional[list] = None
    rank_tol: Optional[float] = None
    matrix: Optional[list] = None
    hessian_eigenvalues: Optional[list] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    def to_json(self) -> str:
        return dumps(self.to_dict())


@dataclass(frozen=True)
class LyapunovCandidate:
    """Candidate ``V`` around ``center`` with optional analytic gradient."""

    V: Callable[[np.ndarray], float]
    center: np.ndarray
    radius: float = 1.0
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    step: float = 1e-6

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), float)
        out = np.empty_like(x)
        for k in range(x.size):
            h = self.step * max(1.0, abs(x[k]))
            e = np.zeros_like(x)
            e[k] = h
            out[k] = (self.V(x + e) - self.V(x - e)) / (2 * h)
        return out

    def check(self, n: int = 200, seed: int = 0, tol: float = 1e-10) -> None:
        """Verify ``V(center) = 0``, positivity, nonvanishing gradient and bounded sublevels.

        Raises InvalidLyapunovCandidate.
        """
        c = np.asarray(self.center, float)
        if abs(self.V(c)) > tol:
            raise InvalidLyapunovCandidate(f"V(center) = {self.V(c):.3e} is not zero")
        dirs = _unit_directions(c.size, n, seed)
        radii = self.radius * (0.05 + 0.95 * qmc.Halton(d=1, seed=seed + 1).random(n)[:, 0])
        for d, r in zip(dirs, radii):
            x = c + r * d
            if not self.V(x) > 0:
                raise InvalidLyapunovCandidate(f"V is not positive at {x}")
            if np.linalg.norm(self.grad(x)) <= tol:
                raise InvalidLyapunovCandidate(f"gradient of V vanishes at {x}")
        boundary = min(self.V(c + self.radius * d) for d in dirs)
        inner = max(self.V(c + 0.05 * self.radius * d) for d in dirs)
        if not boundary > inner:
            raise InvalidLyapunovCandidate("sublevel sets are not contained in the domain radius")


def _unit_directions(n_dim: int, n: int, seed: int = 0) -> np.ndarray:
    z = norm.ppf(np.clip(qmc.Halton(d=n_dim, seed=seed).random(n), 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


# time-positive descent condition -------------------------------------------------------------

def min_gradient_with_time(Q: np.ndarray, kappa: float) -> float:
    """``min tr(Q P)`` over ``P >= 0, tr P = 1, P_00 >= kappa``.

    This is the smallest ``grad V . y`` over the convexified generator set
    subject to a time component ``y0 >= kappa``; it equals the concave dual
    ``max_{mu >= 0} lambda_min(Q - mu e0 e0^T) + mu kappa``.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    E00 = np.zeros_like(Q)
    E00[0, 0] = 1.0

    def dual(mu):
        return np.linalg.eigvalsh(Q - mu * E00)[0] + mu * kappa

    if kappa == 0.0:
        return float(np.linalg.eigvalsh(Q)[0])
    if kappa == 1.0:
        return float(Q[0, 0])
    # beyond this mu the dual decreases with slope at most kappa - 1
    mu_max = 4.0 * (np.abs(Q).sum() + 1.0) / (1.0 - kappa)
    res = minimize_scalar(lambda mu: -dual(mu), bounds=(0.0, mu_max), method="bounded",
                          options={"xatol": 1e-12 * mu_max})
    return float(max(dual(0.0), dual(res.x)))


def min_gradient_with_time_sampled(system: QuadraticControlSystem, x, grad, kappa: float,
                                   n_samples: int = 4000, seed: int = 0) -> float:
    """Sampling counterpart of :func:`min_gradient_with_time` via a linear program."""
    pts = _sphere_points(system.dim_u, n_samples, seed)
    pts = np.vstack([pts, pts * np.concatenate([[1.0], -np.ones(system.dim_u)])])
    Q = system.generator_matrix(x, grad)
    c = np.einsum("ki,ij,kj->k", pts, Q, pts)
    y0 = pts[:, 0] ** 2
    res = linprog(c, A_ub=-y0[None, :], b_ub=[-kappa], A_eq=np.ones((1, c.size)), b_eq=[1.0],
                  bounds=(0, None), method="highs")
    if res.status != 0:
        return float("inf")
    return float(res.fun)


@dataclass
class IvPrimeResult:
    verdict: str
    kappa: float
    values: np.ndarray
    points: np.ndarray
    worst_point: np.ndarray
    worst_value: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "kappa": self.kappa, "worst_point": self.worst_point,
                "worst_value": self.worst_value, "n_points": int(len(self.points))}


def lyapunov_condition_iv_prime(system: QuadraticControlSystem, V: LyapunovCandidate, samples,
                                kappa: float = 1e-3, tol: float = 0.0, rtol: float = 1e-9,
                                method: str = "exact", check_candidate: bool = True) -> IvPrimeResult:
    """Check that at every sample some convexified velocity has ``grad V . y <= tol``
    and time component ``y0 >= kappa``.

    ``rtol`` adds ``rtol * max|Q|`` to the tolerance at each point
    to absorb rounding in exact cancellations.  ``kappa = 0`` gives the naive
    test without a time requirement.  Points within ``1e-6`` (relative) of
    the threshold are reported inconclusive.
    """
    if check_candidate:
        V.check()
    pts = np.atleast_2d(np.asarray(samples, float))
    center = np.asarray(V.center, float)
    values, verdicts = [], []
    for x in pts:
        if np.linalg.norm(x - center) == 0.0:
            values.append(-np.inf)
            verdicts.append("pass")
            continue
        grad = V.grad(x)
        Q = system.generator_matrix(x, grad)
        if method == "exact":
            val = min_gradient_with_time(Q, kappa)
        elif method == "sample":
            val = min_gradient_with_time_sampled(system, x, grad, kappa)
        else:
            raise ValueError(f"unknown method {method!r}")
        scale = np.abs(Q).max() + 1e-300
        thr = tol + rtol * scale
        values.append(val)
        verdicts.append("pass" if val <= thr else ("inconclusive" if val <= thr + 1e-6 * scale else "fail"))
    values = np.array(values)
    k = int(np.argmax(values))
    verdict = "fail" if "fail" in verdicts else ("inconclusive" if "inconclusive" in verdicts else "pass")
    return IvPrimeResult(verdict, kappa, values, pts, pts[k], float(values[k]))


# linear tests -----------------------------------------------------------------

def kalman_rank(A, B, tol: float = RANK_TOL):
    """Numerical rank of ``[B, AB, ..., A^{n-1} B]`` and its singular values.

    Singular values below ``tol * sigma_max * max(n, n d)`` count as zero.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float)
    n = A.shape[0]
    if B.ndim == 1:
        B = B.reshape(n, 1)
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError(f"incompatible shapes {A.shape} and {B.shape}")
    blocks, X = [], B
    for _ in range(n):
        blocks.append(X)
        X = A @ X
    C = np.hstack(blocks)
    sv = svdvals(C)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    thr = tol * sv[0] * max(C.shape)
    return int(np.sum(sv > thr)), sv


def _jacobian(fun, x, step):
    x = np.asarray(x, float)
    f0 = np.asarray(fun(x), float)
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = step * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h)
    return J


def cone_violation(h_fields: np.ndarray, y, n_dirs: int = 2000, seed: int = 0) -> float:
    """Sampled test that ``y`` lies in the convex cone spanned by ``sum_ab h_ab w^a w^b``.

    ``h_fields`` has shape (m, m, n).  For directions d whose quadratic form
    ``d . h`` is negative semidefinite, membership forces ``d . y <= 0``;
    returns the largest such ``d . y`` (zero when none is positive).
    """
    y = np.asarray(y, float)
    worst = 0.0
    for d in _unit_directions(y.size, n_dirs, seed):
        if np.linalg.eigvalsh(h_fields @ d)[-1] <= 1e-12:
            worst = max(worst, float(d @ y))
    return worst


def selection_linearization(drift: Callable, selection: Callable, x_bar, xi_bar, step: float = 1e-6,
                            eq_tol: float = 1e-8, cone: Optional[Callable] = None,
                            cone_tol: float = 1e-6):
    """Linearize ``dx/dt = f(x) + gamma(x, xi)`` at an equilibrium.

    Returns ``(A, B)`` with ``A = df/dx + dgamma/dx`` and ``B = dgamma/dxi``.
    ``cone(x)`` may return the (m, m, n) quadratic fields whose cone must
    contain ``gamma(x_bar, xi_bar)``; that membership is spot-checked.
    """
    x_bar = np.atleast_1d(np.asarray(x_bar, float))
    xi_bar = np.atleast_1d(np.asarray(xi_bar, float))
    res = np.asarray(drift(x_bar)) + np.asarray(selection(x_bar, xi_bar))
    if np.abs(res).max() > eq_tol:
        raise NotAnEquilibrium(f"equilibrium residual {np.abs(res).max():.3e} exceeds {eq_tol}")
    if cone is not None:
        viol = cone_violation(np.asarray(cone(x_bar)), selection(x_bar, xi_bar))
        if viol > cone_tol:
            raise SelectionOutsideCone(f"selection leaves the cone (violation {viol:.3e})")
    A = _jacobian(drift, x_bar, step) + _jacobian(lambda x: selection(x, xi_bar), x_bar, step)
    B = _jacobian(lambda xi: selection(x_bar, xi), xi_bar, step)
    return A, B


@dataclass(frozen=True)
class ScalarConeSelection:
    """Selection ``gamma = (0, sign * xi)`` for systems with N = M = 1.

    The averaged quadratic term ``1/2 E'(q) w^2`` spans a ray whose sign is
    that of ``E'(q_bar)``; ``xi >= 0`` measures the distance along it.
    """

    drift: Callable
    selection: Callable
    cone: Callable
    sign: float
    u_bar: np.ndarray

    def xi_bar(self, q_bar) -> np.ndarray:
        """Cone value balancing the drift at ``(q_bar, 0)``."""
        f = self.drift(np.array([q_bar, 0.0]))
        return np.array([-self.sign * f[1]]) if self.sign else np.zeros(1)


def scalar_cone_selection(model: MetricModel, force: ForceModel, u_bar, q_bar) -> ScalarConeSelection:
    if model.dim_q != 1 or model.dim_u != 1:
        raise DimensionError("scalar cone selection needs N = M = 1")
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    dE = reduced_blocks(model, np.atleast_1d(q_bar), u_bar).dE_dq[0, 0, 0]
    sign = 0.0 if abs(dE) <= 1e-12 else float(np.sign(dE))

    def drift(x):
        q, p = x[:1], x[1:]
        b = reduced_blocks(model, q, u_bar)
        return np.concatenate([b.A @ p, -0.5 * (b.dA_dq @ p) @ p + force.force0(q, p, u_bar)])

    def selection(x, xi):
        return np.array([0.0, sign * float(np.atleast_1d(xi)[0])])

    def cone(x):
        b = reduced_blocks(model, x[:1], u_bar)
        h = np.zeros((1, 1, 2))
        h[0, 0, 1] = 0.5 * b.dE_dq[0, 0, 0]
        return h

    return ScalarConeSelection(drift, selection, cone, sign, u_bar)


# rank test for vibration tuples -------------------------------------------------

def rank_matrix(dE_dq: np.ndarray, W: VibrationTuple) -> np.ndarray:
    """The N x kM matrix with entries ``sum_b de_ab/dq^i w_l^b`` (columns ordered by l, then a)."""
    return np.concatenate([np.einsum("iab,b->ia", dE_dq, w) for w in W.W], axis=1)


def equilibrium_residual(model: MetricModel, force: ForceModel, q_bar, u_bar, W: VibrationTuple,
                         half_quadratic: bool = True) -> np.ndarray:
    """``F0(q, 0, u) + c sum_l sum_ab de_ab/dq w_l^a w_l^b`` with ``c = 1/2`` or 1."""
    q_bar = np.atleast_1d(np.asarray(q_bar, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    b = reduced_blocks(model, q_bar, u_bar)
    c = 0.5 if half_quadratic else 1.0
    S = W.second_moment()
    return force.force0(q_bar, np.zeros_like(q_bar), u_bar) + c * np.einsum("iab,ab->i", b.dE_dq, S)


def solve_w(model: MetricModel, force: ForceModel, q_bar, u_bar, k: int = 1,
            half_quadratic: bool = True, tol: float = 1e-8, rank_tol: float = RANK_TOL,
            n_starts: int = 64, seed: int = 0) -> Optional[VibrationTuple]:
    """Find a tuple of k vectors meeting the equilibrium equations with full rank.

    Deterministic multi-start least squares; returns None when no start
    converges to a full-rank solution.
    """
    q_bar = np.atleast_1d(np.asarray(q_bar, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    N, M = model.dim_q, model.dim_u
    if k * M < N:
        raise DimensionError(f"k M = {k * M} is smaller than N = {N}")
    b = reduced_blocks(model, q_bar, u_bar)
    scale = np.sqrt((np.abs(force.force0(q_bar, np.zeros(N), u_bar)).max() + 1.0)
                    / (np.abs(b.dE_dq).max() + 1e-12))

    def fun(z):
        return equilibrium_residual(model, force, q_bar, u_bar, VibrationTuple(z.reshape(k, M)),
                                    half_quadratic)

    starts = 2.0 * scale * (qmc.Halton(d=k * M, seed=seed).random(n_starts) - 0.5)
    best = None
    for z0 in starts:
        sol = least_squares(fun, z0, xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
        W = VibrationTuple(sol.x.reshape(k, M))
        res = float(np.abs(fun(sol.x)).max())
        rank, _ = _matrix_rank(rank_matrix(b.dE_dq, W), rank_tol)
        if res <= tol and rank == N:
            if best is None or np.linalg.norm(sol.x) < np.linalg.norm(best.W):
                best = W
    return best


def _matrix_rank(Mx: np.ndarray, tol: float = RANK_TOL):
    sv = svdvals(Mx)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv > tol * sv[0] * max(Mx.shape))), sv


def mechanical_rank_test(model: MetricModel, force: ForceModel, q_bar, u_bar, W: VibrationTuple,
                         tol: float = 1e-8, rank_tol: float = RANK_TOL,
                         half_quadratic: bool = True) -> StabilityReport:
    """Rank and equilibrium conditions for stabilization by a vibration tuple."""
    q_bar = np.atleast_1d(np.asarray(q_bar, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    N, M = model.dim_q, model.dim_u
    if W.dim_u != M:
        raise DimensionError(f"tuple vectors have length {W.dim_u}, expected {M}")
    if W.k * M < N:
        raise DimensionError(f"k M = {W.k * M} is smaller than N = {N}")
    b = reduced_blocks(model, q_bar, u_bar)
    Mx = rank_matrix(b.dE_dq, W)
    rank, sv = _matrix_rank(Mx, rank_tol)
    res = equilibrium_residual(model, force, q_bar, u_bar, W, half_quadratic)
    ok = rank == N and np.abs(res).max() <= tol
    return StabilityReport(
        test="rank", verdict="pass" if ok else "fail",
        params={"q_bar": q_bar, "u_bar": u_bar, "W": W.W, "tol": tol,
                "half_quadratic": half_quadratic},
        residuals={"equilibrium": res, "equilibrium_max": float(np.abs(res).max())},
        rank=rank, singular_values=list(sv), rank_tol=rank_tol, matrix=Mx.tolist(),
        notes=[f"quadratic term convention: {'1/2' if half_quadratic else '1'}"],
    )


# effective potential -----------------------------------------------------------

@dataclass(frozen=True)
class EffectivePotential:
    """``U_W(q, u) = U(q, u) - 1/2 sum_l w_l^T E(q, u) w_l``."""

    model: MetricModel
    potential: Potential
    W: VibrationTuple
    step: float = 1e-5

    def __call__(self, q, u) -> float:
        q, u = np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(u, float))
        E = reduced_blocks(self.model, q, u).E
        return self.potential(q, u) - 0.5 * float(np.einsum("ab,ab->", E, self.W.second_moment()))

    def gradient(self, q, u) -> np.ndarray:
        """Gradient in ``(q, u)``: ``grad U - 1/2 sum_l w_l^T dE w_l``."""
        q, u = np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(u, float))
        b = reduced_blocks(self.model, q, u)
        S = self.W.second_moment()
        gq = self.potential.gradient_q(q, u) - 0.5 * np.einsum("iab,ab->i", b.dE_dq, S)
        gu = self.potential.gradient_u(q, u) - 0.5 * np.einsum("iab,ab->i", b.dE_du, S)
        return np.concatenate([gq, gu])

    def hessian(self, q, u) -> np.ndarray:
        """Central differences of :meth:`gradient`, symmetrized."""
        return _fd_hessian(self.gradient, q, u, self.model.dim_q, self.step)


def _fd_hessian(grad, q, u, N, step):
    x = np.concatenate([np.atleast_1d(q), np.atleast_1d(u)]).astype(float)
    H = np.empty((x.size, x.size))
    for k in range(x.size):
        h = step * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        xp, xm = x + e, x - e
        H[:, k] = (grad(xp[:N], xp[N:]) - grad(xm[:N], xm[N:])) / (2 * h)
    return 0.5 * (H + H.T)


def effective_potential(model: MetricModel, potential: Optional[Potential], W: VibrationTuple,
                        step: float = 1e-5) -> EffectivePotential:
    if potential is None:
        raise MissingPotential("the effective potential needs a potential")
    return EffectivePotential(model, potential, W, step)


def effective_minimum_test(model: MetricModel, potential: Optional[Potential], W: VibrationTuple,
                           beta: Callable, q_bar, u_bar, beta_grad: Optional[Callable] = None,
                           grad_tol: float = 1e-6, eig_tol: float = 1e-8,
                           step: float = 1e-5) -> StabilityReport:
    """Strict local minimum test for ``U_W + beta(u)`` at ``(q_bar, u_bar)``."""
    UW = effective_potential(model, potential, W, step)
    N = model.dim_q
    q_bar = np.atleast_1d(np.asarray(q_bar, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))

    def bgrad(u):
        if beta_grad is not None:
            return np.atleast_1d(np.asarray(beta_grad(u), float))
        out = np.empty_like(u)
        for a in range(u.size):
            h = step * max(1.0, abs(u[a]))
            e = np.zeros_like(u)
            e[a] = h
            out[a] = (beta(u + e) - beta(u - e)) / (2 * h)
        return out

    def total_grad(q, u):
        g = UW.gradient(q, u)
        g[N:] += bgrad(u)
        return g

    g = total_grad(q_bar, u_bar)
    H = _fd_hessian(total_grad, q_bar, u_bar, N, step)
    eig = np.linalg.eigvalsh(H)
    ok = np.abs(g).max() <= grad_tol and eig[0] > eig_tol
    return StabilityReport(
        test="effective", verdict="pass" if ok else "fail",
        params={"q_bar": q_bar, "u_bar": u_bar, "W": W.W, "grad_tol": grad_tol, "eig_tol": eig_tol},
        residuals={"gradient": g, "gradient_max": float(np.abs(g).max())},
        hessian_eigenvalues=list(eig),
        notes=["pass certifies stabilizability at (q_bar, 0, u_bar)" if ok else
               "no strict minimum of the effective potential"],
    )


# double pendulum structure ---------------------------------------------------------

@dataclass(frozen=True)
class QAnalysis:
    Q: np.ndarray
    det_dE1: float
    det_dE2: float
    proportionality: float
    residual: float
    semidefinite: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def double_pendulum_Q_analysis(q1: float, q2: float, model: Optional[MetricModel] = None) -> QAnalysis:
    """``Q = dE/dq1 J dE/dq2`` with ``J = [[0, -1], [1, 0]]`` and its factorization checks.

    ``proportionality`` is the least-squares c in ``sym(Q) ~ c dE/dq2`` and
    ``residual`` the relative Frobenius error of that fit.
    """
    if model is None:
        from .catalog import double_pendulum
        model = double_pendulum().model
    b = reduced_blocks(model, np.array([q1, q2]), np.zeros(2))
    dE1, dE2 = b.dE_dq
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    Q = dE1 @ J @ dE2
    S = 0.5 * (Q + Q.T)
    c = float(np.sum(S * dE2) / np.sum(dE2 * dE2))
    resid = float(np.linalg.norm(S - c * dE2) / max(np.linalg.norm(S), 1e-300))
    eig = np.linalg.eigvalsh(S)
    semidef = bool(eig[0] >= -1e-9 * np.abs(eig).max() or eig[-1] <= 1e-9 * np.abs(eig).max())
    return QAnalysis(Q, float(np.linalg.det(dE1)), float(np.linalg.det(dE2)), c, resid, semidef)
