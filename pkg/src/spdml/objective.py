"""Affinity-weighted cost ``L(W) = sum_ij A_ij d^2(W^T X_i W, W^T X_j W)`` and
its Euclidean Jacobian with respect to ``W``.

All functions here accept any full-rank ``n x m`` matrix ``W``; orthonormality
is only required by the optimiser. This lets finite-difference checks
perturb ``W`` freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import LabeledSpdDataset
from .errors import DimMismatch, InvalidParams, SingularProjectedMatrix
from .spd import (
    Metric,
    SpdMatrix,
    airm_dist_sq,
    batch_logdet,
    spd_invsqrt,
    spd_log,
    spd_sqrt,
    stein_dist_sq,
)

__all__ = [
    "ORTHONORMAL_TOL",
    "COND_LIMIT",
    "check_projection",
    "truncated_identity",
    "ObjectiveContext",
    "map_spd",
    "pair_cost",
    "cost",
    "cost_and_jacobian",
    "cost_jacobian",
    "logdet_grad",
    "stein_pair_jacobian",
    "airm_pair_jacobian",
]

ORTHONORMAL_TOL = 1e-8
COND_LIMIT = 1e12


def truncated_identity(n: int, m: int) -> np.ndarray:
    """The ``n x m`` matrix with ``I_m`` on top and zeros below."""
    if not 1 <= m <= n:
        raise InvalidParams(f"need 1 <= m <= n, got m={m}, n={n}")
    return np.eye(n, m)


def check_projection(W, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """Return ``W`` as an array after checking ``||W^T W - I||_F <= tol``."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[1] > W.shape[0]:
        raise DimMismatch(f"projection must be n x m with m <= n, got {W.shape}")
    err = np.linalg.norm(W.T @ W - np.eye(W.shape[1]))
    if err > tol:
        raise InvalidParams(f"projection columns are not orthonormal (||W^T W - I||_F = {err:.3g})")
    return W


def _check_dims(W, X):
    if W.ndim != 2 or X.shape[-1] != W.shape[0]:
        raise DimMismatch(f"projection shape {W.shape} incompatible with matrices of size {X.shape[-1]}")


def _guard(P: np.ndarray):
    w = np.linalg.eigvalsh(P)
    lo, hi = w[..., 0], w[..., -1]
    cond = np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)
    worst = float(np.max(cond))
    if worst > COND_LIMIT:
        raise SingularProjectedMatrix(worst)


def _project(W: np.ndarray, X: np.ndarray):
    XW = X @ W
    P = W.T @ XW
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    return XW, P


def map_spd(X, W) -> SpdMatrix:
    """``W^T X W`` as an SPD matrix of size ``m``."""
    Xa = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    _check_dims(W, Xa)
    _, P = _project(W, Xa)
    return SpdMatrix(P)


@dataclass(frozen=True)
class ObjectiveContext:
    """Training data, its affinity matrix and the chosen measure.

    Only pairs ``i < j`` with a nonzero affinity are kept; the cost counts
    every ordered pair, i.e. twice each stored pair.
    """

    dataset: LabeledSpdDataset
    affinity: np.ndarray
    metric: Metric

    def __post_init__(self):
        A = np.asarray(self.affinity, dtype=float)
        p = len(self.dataset)
        if A.shape != (p, p):
            raise DimMismatch(f"affinity shape {A.shape} does not match dataset size {p}")
        if not np.allclose(A, A.T):
            raise InvalidParams("affinity matrix must be symmetric")
        object.__setattr__(self, "affinity", A)
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        I, J = np.nonzero(np.triu(A, k=1))
        object.__setattr__(self, "_pairs", (I, J, A[I, J]))

    @property
    def pairs(self):
        """``(I, J, weights)`` for the stored unordered pairs."""
        return self._pairs

    @property
    def n(self) -> int:
        return self.dataset.dim


def pair_cost(W, Xi, Xj, a_ij: float, metric) -> float:
    """``a_ij * d^2(W^T Xi W, W^T Xj W)``."""
    if a_ij == 0:
        return 0.0
    W = np.asarray(W, dtype=float)
    Xi, Xj = np.asarray(Xi, dtype=float), np.asarray(Xj, dtype=float)
    if Xi.shape != Xj.shape:
        raise DimMismatch(f"dimension mismatch: {Xi.shape} vs {Xj.shape}")
    _check_dims(W, Xi)
    _, Pi = _project(W, Xi)
    _, Pj = _project(W, Xj)
    d = airm_dist_sq(Pi, Pj) if Metric.parse(metric) is Metric.AIRM else stein_dist_sq(Pi, Pj)
    return float(a_ij) * d


def _airm_pair_terms(Pi, Linv_j, need_grad):
    # Whiten with the Cholesky factor Pj = L L^T: S = L^-1 Pi L^-T = U diag(s) U^T.
    LinvT = np.swapaxes(Linv_j, -1, -2)
    S = Linv_j @ Pi @ LinvT
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    if not need_grad:
        return np.sum(np.log(np.linalg.eigvalsh(S)) ** 2, axis=-1), None, None
    s, U = np.linalg.eigh(S)
    ls = np.log(s)
    d2 = np.sum(ls**2, axis=-1)
    BU = LinvT @ U
    BUt = np.swapaxes(BU, -1, -2)
    Qa = (BU * (ls / s)[..., None, :]) @ BUt  # Pi^-1 log(Pi Pj^-1)
    Qb = (BU * ls[..., None, :]) @ BUt  # Pj^-1 log(Pi Pj^-1)
    return d2, Qa, Qb


def cost_and_jacobian(W, ctx: ObjectiveContext, need_grad: bool = True):
    """Return ``(L(W), D_W L)``; the Jacobian is ``None`` if not requested.

    Pairs are handled in vectorised batches, each projected matrix
    ``W^T X_i W`` is formed once per call.
    """
    W = np.asarray(W, dtype=float)
    X = ctx.dataset.matrices
    _check_dims(W, X)
    I, J, a = ctx.pairs
    m = W.shape[1]
    if len(a) == 0:
        return 0.0, (np.zeros_like(W) if need_grad else None)
    used = np.union1d(I, J)
    XW = np.zeros((len(X), W.shape[0], m))
    P = np.zeros((len(X), m, m))
    XW[used], P[used] = _project(W, X[used])
    _guard(P[used])
    Pi = P[I]
    coef = np.zeros((len(X), m, m)) if need_grad else None

    if ctx.metric is Metric.STEIN:
        M = 0.5 * (Pi + P[J])
        ld = np.zeros(len(X))
        ld[used] = batch_logdet(P[used])
        d2 = batch_logdet(M) - 0.5 * (ld[I] + ld[J])
        if need_grad:
            Pinv = np.zeros_like(P)
            Pinv[used] = np.linalg.inv(P[used])
            Minv = np.linalg.inv(M)
            w2 = (2.0 * a)[:, None, None]
            np.add.at(coef, I, w2 * (Minv - Pinv[I]))
            np.add.at(coef, J, w2 * (Minv - Pinv[J]))
    else:
        Linv = np.zeros_like(P)
        Linv[used] = np.linalg.inv(np.linalg.cholesky(P[used]))
        d2, Qa, Qb = _airm_pair_terms(Pi, Linv[J], need_grad)
        if need_grad:
            w8 = (8.0 * a)[:, None, None]
            np.add.at(coef, I, w8 * Qa)
            np.add.at(coef, J, -w8 * Qb)

    L = 2.0 * float(np.dot(a, d2))
    if not need_grad:
        return L, None
    G = np.einsum("pnk,pkm->nm", XW[used], coef[used])
    return L, G


def cost(W, ctx: ObjectiveContext) -> float:
    """Global cost summed over all ordered pairs ``(i, j)``."""
    return cost_and_jacobian(W, ctx, need_grad=False)[0]


def cost_jacobian(W, ctx: ObjectiveContext) -> np.ndarray:
    """Euclidean ``n x m`` Jacobian of :func:`cost`."""
    return cost_and_jacobian(W, ctx, need_grad=True)[1]


def logdet_grad(W, X) -> np.ndarray:
    """``D_W ln det(W^T X W) = 2 X W (W^T X W)^{-1}``."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    _check_dims(W, X)
    XW, P = _project(W, X)
    _guard(P)
    return 2.0 * np.linalg.solve(P, XW.T).T


def stein_pair_jacobian(W, Xi, Xj) -> np.ndarray:
    """Jacobian of ``stein_dist_sq(W^T Xi W, W^T Xj W)`` w.r.t. ``W``:

    ``(Xi+Xj) W (W^T (Xi+Xj)/2 W)^-1 - Xi W (W^T Xi W)^-1 - Xj W (W^T Xj W)^-1``
    """
    W = np.asarray(W, dtype=float)
    Xi, Xj = np.asarray(Xi, dtype=float), np.asarray(Xj, dtype=float)
    if Xi.shape != Xj.shape:
        raise DimMismatch(f"dimension mismatch: {Xi.shape} vs {Xj.shape}")
    Xm = 0.5 * (Xi + Xj)
    return logdet_grad(W, Xm) - 0.5 * logdet_grad(W, Xi) - 0.5 * logdet_grad(W, Xj)


def airm_pair_jacobian(W, Xi, Xj) -> np.ndarray:
    """Jacobian of ``airm_dist_sq(W^T Xi W, W^T Xj W)`` w.r.t. ``W``:

    ``4 (Xi W Pi^-1 - Xj W Pj^-1) log(Pi Pj^-1)`` with ``Pk = W^T Xk W``.

    The non-symmetric log is evaluated as
    ``Pj^{1/2} log(Pj^{-1/2} Pi Pj^{-1/2}) Pj^{-1/2}``.
    """
    W = np.asarray(W, dtype=float)
    Xi, Xj = np.asarray(Xi, dtype=float), np.asarray(Xj, dtype=float)
    if Xi.shape != Xj.shape:
        raise DimMismatch(f"dimension mismatch: {Xi.shape} vs {Xj.shape}")
    _check_dims(W, Xi)
    XiW, Pi = _project(W, Xi)
    XjW, Pj = _project(W, Xj)
    _guard(np.stack([Pi, Pj]))
    Bh, Bih = spd_sqrt(Pj), spd_invsqrt(Pj)
    S = Bih @ Pi @ Bih
    log_ratio = Bh @ spd_log(0.5 * (S + S.T)) @ Bih
    left = np.linalg.solve(Pi, XiW.T).T - np.linalg.solve(Pj, XjW.T).T
    return 4.0 * left @ log_ratio
