"""Geometry of the constraint foliation: orthogonal curvature, N-fitness and
the two-geodesic leaf-return construction.

The leaves are ``{u = const}``.  The orthogonal curvature at ``(q, u)`` is the
array ``dE/dq^i``; a metric is N-fit when the control block of ``G^-1`` does
not depend on q, and strongly N-fit when in addition ``(G^-1)_12 = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .dynamics import _rk4_step
from .errors import ChartNotOrthonormal, ShootingDiverged
from .io import write_table
from .metric import MetricModel, evaluate_metric, metric_derivatives, reduced_blocks

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurvatureTensor:
    """Components ``components[i, a, b] = d e_ab / d q^i`` at ``(q, u)``."""

    q: np.ndarray
    u: np.ndarray
    components: np.ndarray

    def contract(self, w) -> np.ndarray:
        """``sum_ab d e_ab/dq^i w^a w^b`` for each i."""
        w = np.atleast_1d(np.asarray(w, float))
        return np.einsum("iab,a,b->i", self.components, w, w)


def curvature_tensor(model: MetricModel, q, u) -> CurvatureTensor:
    b = reduced_blocks(model, q, u)
    comp = 0.5 * (b.dE_dq + np.swapaxes(b.dE_dq, 1, 2))
    return CurvatureTensor(np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(u, float)), comp)


@dataclass(frozen=True)
class FitnessVerdict:
    """Sampled evidence for N-fitness.

    ``max_violation`` is the largest ``|d g^{N+a,N+b} / d q^i|`` seen and
    ``max_offdiag`` the largest ``|g^{i,N+a}|``; ``max_curvature`` reports
    the largest ``|d e_ab / d q^i|`` for reference.
    """

    classification: str
    max_violation: float
    max_offdiag: float
    max_curvature: float
    samples: int
    tol: float

    @property
    def n_fit(self) -> bool:
        return self.classification in ("N-fit", "strongly N-fit")

    def to_dict(self) -> dict:
        return {"classification": self.classification, "max_violation": self.max_violation,
                "max_offdiag": self.max_offdiag, "max_curvature": self.max_curvature,
                "samples": self.samples, "tol": self.tol}


def classify_fitness(model: MetricModel, lower, upper, n_samples: int = 256,
                     tol: float = 1e-8, seed: int = 0) -> FitnessVerdict:
    """Classify the metric as generic, N-fit or strongly N-fit on a box.

    ``lower`` and ``upper`` bound ``(q, u)``; points come from a scrambled
    Halton sequence with a fixed seed.  A sampled test: it can falsify
    N-fitness but only collect evidence for it.
    """
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    if lower.shape != (model.dim,) or upper.shape != (model.dim,):
        raise ValueError(f"box bounds must have length {model.dim}")
    if np.any(upper < lower):
        raise ValueError("box upper bounds must not be below lower bounds")
    pts = qmc.scale(qmc.Halton(d=model.dim, seed=seed).random(n_samples), lower,
                    np.where(upper > lower, upper, lower + 1e-300))
    N = model.dim_q
    viol = offd = curv = 0.0
    for x in pts:
        b = reduced_blocks(model, x[:N], x[N:])
        Einv = np.linalg.inv(b.E)
        d_inv = -np.einsum("ab,ibc,cd->iad", Einv, b.dE_dq, Einv)
        viol = max(viol, float(np.abs(d_inv).max()))
        offd = max(offd, float(np.abs(b.K @ Einv).max()))
        curv = max(curv, float(np.abs(b.dE_dq).max()))
    if viol > tol:
        cls = "generic"
    elif offd > tol:
        cls = "N-fit"
    else:
        cls = "strongly N-fit"
    return FitnessVerdict(cls, viol, offd, curv, int(n_samples), tol)


@dataclass(frozen=True)
class GeodesicArc:
    """Geodesic phase curve ``(q, u, p, pi)`` sampled on the grid ``s``."""

    s: np.ndarray
    q: np.ndarray
    u: np.ndarray
    p: np.ndarray
    pi: np.ndarray
    hamiltonian: np.ndarray

    @property
    def end(self):
        return self.q[-1], self.u[-1], self.p[-1], self.pi[-1]

    def hamiltonian_drift(self) -> float:
        return float(np.abs(self.hamiltonian - self.hamiltonian[0]).max())

    def to_csv(self, path) -> None:
        N, M = self.q.shape[1], self.u.shape[1]
        header = (["s"] + [f"q{i + 1}" for i in range(N)] + [f"u{a + 1}" for a in range(M)]
                  + [f"p{i + 1}" for i in range(N)] + [f"pi{a + 1}" for a in range(M)])
        write_table(path, header, [self.s, self.q, self.u, self.p, self.pi])


def _geodesic_field(model: MetricModel):
    N = model.dim_q

    def f(_, y):
        D = y.size // 2
        x, P = y[:D], y[D:]
        G = evaluate_metric(model, x[:N], x[N:], check=False)
        V = np.linalg.solve(G, P)
        dG = metric_derivatives(model, x[:N], x[N:])
        return np.concatenate([V, 0.5 * np.einsum("i,kij,j->k", V, dG, V)])

    return f


def _hamiltonian(model, y):
    D = y.size // 2
    N = model.dim_q
    G = evaluate_metric(model, y[:N], y[N:D], check=False)
    return 0.5 * y[D:] @ np.linalg.solve(G, y[D:])


def _integrate_geodesic(model: MetricModel, y0: np.ndarray, length: float, n_steps: int,
                        keep: bool = False):
    f = _geodesic_field(model)
    h = length / n_steps
    y = y0.copy()
    ys = [y] if keep else None
    for k in range(n_steps):
        y = _rk4_step(f, k * h, y, h)
        if keep:
            ys.append(y)
    if not np.all(np.isfinite(y)):
        raise ShootingDiverged("geodesic integration produced non-finite values")
    return (np.array(ys) if keep else y)


def geodesic_ivp(model: MetricModel, q0, u0, v, w, length: float = 1.0,
                 step: float = 1e-3) -> GeodesicArc:
    """Integrate the geodesic Hamiltonian system from ``(q0, u0)``.

    Momenta start at ``(p, pi) = G (v, w)``; the flow is
    ``x' = G^-1 P``, ``P_k' = 1/2 V^T dG/dx^k V``.
    """
    q0, u0, v, w = (np.atleast_1d(np.asarray(a, float)) for a in (q0, u0, v, w))
    V = np.concatenate([v, w])
    if not np.any(V):
        raise ValueError("geodesic needs a nonzero initial velocity")
    G = evaluate_metric(model, q0, u0)
    y0 = np.concatenate([q0, u0, G @ V])
    n = max(1, int(np.ceil(abs(length) / step)))
    ys = _integrate_geodesic(model, y0, length, n, keep=True)
    N, D = model.dim_q, model.dim
    H = np.array([_hamiltonian(model, y) for y in ys])
    s = np.linspace(0.0, length, n + 1)
    return GeodesicArc(s, ys[:, :N], ys[:, N:D], ys[:, D:D + N], ys[:, D + N:], H)


def orthogonal_complement_basis(model: MetricModel, q, u) -> np.ndarray:
    """g-orthonormal basis of the orthogonal complement of the leaf tangent.

    Rows are vectors ``Y = (v, w)`` in R^{N+M} with ``G1 v + G12 w = 0``.
    """
    G = evaluate_metric(model, q, u)
    N, M = model.dim_q, model.dim_u
    G1, G12 = G[:N, :N], G[:N, N:]
    raw = np.vstack([-np.linalg.solve(G1, G12), np.eye(M)]).T  # (M, D) rows
    basis = []
    for y in raw:
        for e in basis:
            y = y - (e @ G @ y) * e
        basis.append(y / np.sqrt(y @ G @ y))
    return np.array(basis)


def _shoot_return(model, x_start, u_target, guess, n_steps, max_iter, tol):
    """Newton shooting on ``pi(0)`` with ``p(0) = 0`` so that ``u(1) = u_target``."""
    N, D = model.dim_q, model.dim
    p0 = np.zeros(N)

    def endpoint(pi0):
        y = _integrate_geodesic(model, np.concatenate([x_start, p0, pi0]), 1.0, n_steps)
        return y, y[N:D] - u_target

    pi0 = guess.copy()
    y, r = endpoint(pi0)
    scale = max(1.0, float(np.abs(u_target).max()))
    for it in range(max_iter):
        res = float(np.abs(r).max())
        if res <= tol * scale:
            return y, pi0, it, res
        J = np.empty((r.size, pi0.size))
        h = 1e-7 * max(1e-3, float(np.abs(pi0).max()))
        for j in range(pi0.size):
            e = np.zeros_like(pi0)
            e[j] = h
            J[:, j] = (endpoint(pi0 + e)[1] - endpoint(pi0 - e)[1]) / (2 * h)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise ShootingDiverged("singular shooting Jacobian") from exc
        lam = 1.0
        for _ in range(11):
            y_new, r_new = endpoint(pi0 + lam * delta)
            if np.abs(r_new).max() < res or lam < 1e-3:
                break
            lam *= 0.5
        pi0 = pi0 + lam * delta
        y, r = y_new, r_new
    res = float(np.abs(r).max())
    if res > tol * scale:
        raise ShootingDiverged(f"shooting did not converge in {max_iter} iterations (residual {res:.3e})")
    return y, pi0, max_iter, res


def leaf_return_displacement(model: MetricModel, q0, u0, w, s: float, n_steps: int = 100,
                             max_iter: int = 50, tol: float = 1e-10) -> np.ndarray:
    """Leaf displacement after leaving ``(q0, u0)`` perpendicularly and returning.

    Leg one follows the geodesic ``Exp(s V)`` with ``V = sum_a w_a J_a`` built
    from the orthonormal complement basis.  Leg two starts at its endpoint
    with ``p = 0`` and reaches the original leaf ``u = u0`` at parameter 1,
    found by Newton shooting on ``pi(0)``.  Returns ``q_hat - q0``.
    """
    q0, u0, w = (np.atleast_1d(np.asarray(a, float)) for a in (q0, u0, w))
    N, D = model.dim_q, model.dim
    J = orthogonal_complement_basis(model, q0, u0)
    V = s * (w @ J)
    G = evaluate_metric(model, q0, u0)
    y1 = _integrate_geodesic(model, np.concatenate([q0, u0, G @ V]), 1.0, n_steps)
    x_s = y1[:D]
    E_s = reduced_blocks(model, x_s[:N], x_s[N:]).E
    guess = -E_s @ V[N:]
    y2, _, iters, res = _shoot_return(model, x_s, u0, guess, n_steps, max_iter, tol)
    log.debug("leaf return s=%g converged in %d iterations (residual %.2e)", s, iters, res)
    return y2[:N] - q0


def default_s_sequence(s_max: float = 1e-1, s_min: float = 1e-3) -> list:
    """Halving sequence from ``s_max`` down to ``s_min`` (always included)."""
    seq = [s_max]
    while seq[-1] / 2 > s_min * (1 + 1e-12):
        seq.append(seq[-1] / 2)
    seq.append(s_min)
    return seq


@dataclass(frozen=True)
class CurvatureLimit:
    """Result of the geodesic curvature construction.

    ``ratios[k]`` is ``displacement(s_k) / s_k^2``; ``limit`` is the
    Richardson extrapolation of the last two ratios assuming a remainder
    linear in s; ``tensor`` is ``1/2 sum_ab de_ab/dq w^a w^b``.
    """

    s: np.ndarray
    ratios: np.ndarray
    limit: np.ndarray
    tensor: np.ndarray
    errors: np.ndarray = field(default=None)

    @property
    def discrepancy(self) -> float:
        return float(np.abs(self.limit - self.tensor).max())

    def to_dict(self) -> dict:
        return {"s": self.s, "ratios": self.ratios, "limit": self.limit, "tensor": self.tensor,
                "errors": self.errors, "discrepancy": self.discrepancy}


def curvature_from_geodesics(model: MetricModel, q0, u0, w,
                             s_sequence: Optional[Sequence[float]] = None,
                             chart_tol: float = 1e-8, **kwargs) -> CurvatureLimit:
    """Extrapolate ``displacement(s) / s^2`` to ``s -> 0``.

    Requires ``G(q0, u0) = I`` (ChartNotOrthonormal otherwise); at such a
    point the displacement is chart independent to second order.
    """
    q0, u0, w = (np.atleast_1d(np.asarray(a, float)) for a in (q0, u0, w))
    G = evaluate_metric(model, q0, u0)
    if np.abs(G - np.eye(model.dim)).max() > chart_tol:
        raise ChartNotOrthonormal("the metric is not the identity at the base point")
    seq = np.array(default_s_sequence() if s_sequence is None else s_sequence, dtype=float)
    if seq.size < 2:
        raise ValueError("s_sequence needs at least two values")
    ratios = np.array([leaf_return_displacement(model, q0, u0, w, s, **kwargs) / s**2 for s in seq])
    s1, s2 = seq[-2], seq[-1]
    limit = (s1 * ratios[-1] - s2 * ratios[-2]) / (s1 - s2)
    tensor = 0.5 * curvature_tensor(model, q0, u0).contract(w)
    return CurvatureLimit(seq, ratios, limit, tensor, np.abs(ratios - tensor).max(axis=1))
