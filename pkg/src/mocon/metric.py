"""Kinetic metric evaluation, reduced blocks A, E, K and the Legendre maps.

Coordinates are split as ``x = (q, u)`` with ``q`` in R^N (evolving) and
``u`` in R^M (prescribed).  For a metric ``G(q, u)`` of size N+M::

    A = (G1)^-1,   E = ((G^-1)_2)^-1,   K = (G^-1)_12 E

which coincide with ``K = -A G12`` and ``E = G2 - G12^T A G12``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SingularMetric

COND_LIMIT = 1e14
SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class MetricModel:
    """A mechanical system's kinetic metric.

    Parameters
    ----------
    dim_q, dim_u : int
        Sizes N and M of the reduced and control coordinates.
    metric : callable
        ``metric(q, u) -> (N+M, N+M)`` symmetric positive-definite matrix.
    metric_partials : callable, optional
        ``metric_partials(q, u) -> (N+M, N+M, N+M)`` array whose leading
        index runs over ``(q^1..q^N, u^1..u^M)``.  Central differences are
        used when omitted.
    derivative_step : float
        Relative finite-difference step.
    closed_form : callable, optional
        ``closed_form(q, u) -> ReducedBlocks`` with analytic blocks and
        partials.  Used by :func:`reduced_blocks` in place of the generic
        block algebra; the generic path stays available through
        ``reduced_blocks(..., use_closed_form=False)``.

    Metric callbacks must be re-entrant; every operation here is a pure
    function of its inputs.
    """

    dim_q: int
    dim_u: int
    metric: Callable[[np.ndarray, np.ndarray], np.ndarray]
    metric_partials: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    derivative_step: float = 1e-6
    closed_form: Optional[Callable[[np.ndarray, np.ndarray], "ReducedBlocks"]] = None
    name: str = "metric"

    def __post_init__(self):
        if self.dim_q < 1 or self.dim_u < 1:
            raise ValueError("dim_q and dim_u must be positive")
        if not self.derivative_step > 0:
            raise ValueError("derivative_step must be positive")

    @property
    def dim(self) -> int:
        return self.dim_q + self.dim_u


@dataclass(frozen=True)
class ReducedBlocks:
    """Blocks of G and the reduced matrices with their partials.

    ``dA_dq[i]`` is the partial of ``A`` with respect to ``q^i`` (likewise
    for E and K); the ``*_du`` arrays hold partials in the control
    coordinates.
    """

    G1: np.ndarray
    G2: np.ndarray
    G12: np.ndarray
    A: np.ndarray
    E: np.ndarray
    K: np.ndarray
    dA_dq: np.ndarray
    dE_dq: np.ndarray
    dK_dq: np.ndarray
    dA_du: np.ndarray
    dE_du: np.ndarray
    dK_du: np.ndarray


def _as_point(model: MetricModel, q, u):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if q.shape != (model.dim_q,) or u.shape != (model.dim_u,):
        raise ValueError(
            f"expected q of shape ({model.dim_q},) and u of shape ({model.dim_u},), "
            f"got {q.shape} and {u.shape}"
        )
    return q, u


def _call_metric(model: MetricModel, q, u) -> np.ndarray:
    try:
        G = np.asarray(model.metric(q, u), dtype=float)
    except DomainError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise DomainError(f"metric rejected point q={q}, u={u}: {exc}") from exc
    if G.shape != (model.dim, model.dim):
        raise ValueError(f"metric returned shape {G.shape}, expected {(model.dim, model.dim)}")
    if not np.all(np.isfinite(G)):
        raise DomainError(f"metric is not finite at q={q}, u={u}")
    return G


def evaluate_metric(model: MetricModel, q, u, check: bool = True) -> np.ndarray:
    """Return ``G(q, u)`` after symmetry and positive-definiteness checks."""
    q, u = _as_point(model, q, u)
    G = _call_metric(model, q, u)
    if check:
        scale = max(np.abs(G).max(), 1e-300)
        if np.abs(G - G.T).max() > SYMMETRY_RTOL * scale:
            raise DomainError(f"metric is not symmetric at q={q}, u={u}")
        eig = np.linalg.eigvalsh(G)
        if eig[0] <= 0.0:
            raise DomainError(f"metric is not positive definite at q={q}, u={u} (min eig {eig[0]:.3e})")
        if eig[-1] / eig[0] > COND_LIMIT:
            raise SingularMetric(f"metric condition number {eig[-1] / eig[0]:.3e} exceeds {COND_LIMIT:.0e}")
    return G


def metric_derivatives(model: MetricModel, q, u) -> np.ndarray:
    """Partials of G with respect to every coordinate, shape (N+M, N+M, N+M)."""
    q, u = _as_point(model, q, u)
    if model.metric_partials is not None:
        dG = np.asarray(model.metric_partials(q, u), dtype=float)
        if dG.shape != (model.dim,) * 3:
            raise ValueError(f"metric_partials returned shape {dG.shape}")
        return dG
    x = np.concatenate([q, u])
    N = model.dim_q
    dG = np.empty((model.dim,) * 3)
    for k in range(model.dim):
        h = model.derivative_step * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        Gp = _call_metric(model, xp[:N], xp[N:])
        Gm = _call_metric(model, xm[:N], xm[N:])
        dG[k] = (Gp - Gm) / (2.0 * h)
    return dG


def _spd_inverse(S: np.ndarray, what: str) -> np.ndarray:
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"{what} is not positive definite") from exc
    d = np.diag(L) ** 2
    if d.min() <= 0 or d.max() / d.min() > COND_LIMIT:
        raise SingularMetric(f"{what} is numerically singular")
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def blocks_from_metric(model: MetricModel, q, u) -> ReducedBlocks:
    """Generic block algebra: blocks from G and its partials."""
    q, u = _as_point(model, q, u)
    N = model.dim_q
    G = evaluate_metric(model, q, u)
    dG = metric_derivatives(model, q, u)

    G1, G12, G2 = G[:N, :N], G[:N, N:], G[N:, N:]
    Ginv = _spd_inverse(G, "G")
    A = _spd_inverse(G1, "G1")
    E = _spd_inverse(Ginv[N:, N:], "(G^-1)_2")
    K = Ginv[:N, N:] @ E

    dG1, dG12, dG2 = dG[:, :N, :N], dG[:, :N, N:], dG[:, N:, N:]
    dA = -np.einsum("ij,kjl,lm->kim", A, dG1, A)
    dK = -np.einsum("kij,jb->kib", dA, G12) - np.einsum("ij,kjb->kib", A, dG12)
    AG12 = A @ G12
    dE = (
        dG2
        - np.einsum("kia,ib->kab", dG12, AG12)
        - np.einsum("ia,kij,jb->kab", G12, dA, G12)
        - np.einsum("ia,kib->kab", AG12, dG12)
    )
    dE = 0.5 * (dE + np.swapaxes(dE, 1, 2))
    return ReducedBlocks(
        G1=G1, G2=G2, G12=G12, A=A, E=E, K=K,
        dA_dq=dA[:N], dE_dq=dE[:N], dK_dq=dK[:N],
        dA_du=dA[N:], dE_du=dE[N:], dK_du=dK[N:],
    )


def reduced_blocks(model: MetricModel, q, u, use_closed_form: bool = True) -> ReducedBlocks:
    """Reduced matrices A, E, K and their partials at ``(q, u)``.

    Raises
    ------
    SingularMetric
        If G, G1 or (G^-1)_2 cannot be inverted reliably (condition > 1e14).
    DomainError
        If the metric callback rejects the point.
    """
    if use_closed_form and model.closed_form is not None:
        q, u = _as_point(model, q, u)
        return model.closed_form(q, u)
    return blocks_from_metric(model, q, u)


def momentum_from_velocity(model: MetricModel, q, u, v, w):
    """Covariant momenta ``(p, wp) = G (v, w)``."""
    G = evaluate_metric(model, q, u)
    P = G @ np.concatenate([np.atleast_1d(v), np.atleast_1d(w)]).astype(float)
    return P[: model.dim_q], P[model.dim_q:]


def velocity_from_momentum(model: MetricModel, q, u, p, wp):
    """Inverse Legendre map ``(v, w) = G^-1 (p, wp)``."""
    G = evaluate_metric(model, q, u)
    V = np.linalg.solve(G, np.concatenate([np.atleast_1d(p), np.atleast_1d(wp)]).astype(float))
    return V[: model.dim_q], V[model.dim_q:]


def wp_from_w(model: MetricModel, q, u, p, w) -> np.ndarray:
    """Control momentum compatible with ``(q, u, p)`` and control velocity ``w``.

    ``wp = E w - K^T p``; feeding ``(p, wp)`` to :func:`velocity_from_momentum`
    returns ``w`` as the control velocity.
    """
    b = reduced_blocks(model, q, u)
    return b.E @ np.atleast_1d(np.asarray(w, float)) - b.K.T @ np.atleast_1d(np.asarray(p, float))
