"""SPD matrices: validated construction, matrix functions and the two
Riemannian (dis)similarity measures used throughout the package.

Two measures are available and callers choose between them explicitly:

* ``"airm"``  -- squared geodesic distance of the affine-invariant metric,
  ``||log(Y^{-1/2} X Y^{-1/2})||_F^2``.
* ``"stein"`` -- the Stein (Jensen-Bregman log-det) divergence,
  ``ln det((X + Y)/2) - 1/2 ln det(XY)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor

from .errors import (
    BaseMismatch,
    DimMismatch,
    NotPositiveDefinite,
    NotSquare,
    NotSymmetric,
)

__all__ = [
    "Metric",
    "SpdMatrix",
    "TangentSymmetric",
    "make_spd",
    "spd_log",
    "spd_exp",
    "spd_sqrt",
    "spd_invsqrt",
    "logdet",
    "airm_inner",
    "airm_dist_sq",
    "stein_dist_sq",
    "dist_sq",
    "pd_threshold",
]

SYMMETRY_RTOL = 1e-10


class Metric(str, enum.Enum):
    AIRM = "airm"
    STEIN = "stein"

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown metric {value!r}; expected 'airm' or 'stein'") from None


def pd_threshold(eigvals) -> float:
    """Smallest admissible eigenvalue: ``n * eps * lambda_max``."""
    eigvals = np.asarray(eigvals)
    return eigvals.size * np.finfo(float).eps * float(np.max(eigvals))


class SpdMatrix:
    """Immutable symmetric positive definite matrix.

    Construct through :func:`make_spd` (or ``SpdMatrix(raw)``, which does the
    same validation). The wrapped array is symmetrised exactly and marked
    read-only; ``np.asarray(X)`` returns it without copying.
    """

    __slots__ = ("_data",)

    def __init__(self, raw):
        a = np.array(raw, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise NotSquare(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NotPositiveDefinite(np.nan, 0.0)
        scale = np.max(np.abs(a)) if a.size else 0.0
        asym = np.max(np.abs(a - a.T)) if a.size else 0.0
        if asym > SYMMETRY_RTOL * scale:
            raise NotSymmetric(
                f"asymmetry {asym:.3g} exceeds {SYMMETRY_RTOL:g} * max|X| = {SYMMETRY_RTOL * scale:.3g}"
            )
        a = 0.5 * (a + a.T)
        w = np.linalg.eigvalsh(a)
        thr = pd_threshold(w) if w[-1] > 0 else 0.0
        if w[0] <= thr:
            raise NotPositiveDefinite(w[0], thr)
        a.setflags(write=False)
        self._data = a

    @classmethod
    def _trusted(cls, a: np.ndarray) -> "SpdMatrix":
        # Caller guarantees symmetry and positive definiteness.
        obj = cls.__new__(cls)
        a = np.array(a, dtype=float)
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        obj._data = a
        return obj

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @property
    def values(self) -> np.ndarray:
        return self._data

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._data)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None and np.dtype(dtype) != self._data.dtype:
            return self._data.astype(dtype)
        if copy:
            return self._data.copy()
        return self._data

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"

    def __eq__(self, other):
        if not isinstance(other, SpdMatrix):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    __hash__ = None


def make_spd(raw) -> SpdMatrix:
    """Validate and symmetrise ``raw`` into an :class:`SpdMatrix`.

    Raises
    ------
    NotSquare, NotSymmetric, NotPositiveDefinite
    """
    return SpdMatrix(raw)


@dataclass(frozen=True)
class TangentSymmetric:
    """A symmetric tangent vector ``direction`` at the base point ``base``."""

    base: SpdMatrix
    direction: np.ndarray

    def __post_init__(self):
        d = np.array(self.direction, dtype=float)
        if d.shape != (self.base.dim, self.base.dim):
            raise DimMismatch(f"tangent shape {d.shape} does not match base dim {self.base.dim}")
        if np.max(np.abs(d - d.T), initial=0.0) > 1e-12:
            raise NotSymmetric("tangent direction must be symmetric")
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)


def _arr(X) -> np.ndarray:
    return X.values if isinstance(X, SpdMatrix) else np.asarray(X, dtype=float)


def _same_dim(X, Y):
    if X.shape != Y.shape:
        raise DimMismatch(f"dimension mismatch: {X.shape} vs {Y.shape}")


def _eig_fn(X, fn) -> np.ndarray:
    w, U = np.linalg.eigh(X)
    out = (U * fn(w)) @ U.T
    return 0.5 * (out + out.T)


def spd_log(X) -> np.ndarray:
    """Principal matrix logarithm of an SPD matrix, ``U diag(ln w) U^T``."""
    return _eig_fn(_arr(X), np.log)


def spd_exp(S) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (inverse of :func:`spd_log`)."""
    return _eig_fn(np.asarray(S, dtype=float), np.exp)


def spd_sqrt(X) -> np.ndarray:
    return _eig_fn(_arr(X), np.sqrt)


def spd_invsqrt(X) -> np.ndarray:
    return _eig_fn(_arr(X), lambda w: 1.0 / np.sqrt(w))


def logdet(X) -> float:
    """``ln det X`` from the Cholesky factor (no overflow for large n)."""
    c, _ = cho_factor(_arr(X), lower=True, check_finite=False)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def airm_inner(P, v, w) -> float:
    """Affine-invariant inner product ``Tr(P^-1 v P^-1 w)`` at ``P``.

    ``v`` and ``w`` may be :class:`TangentSymmetric` (their base must be ``P``)
    or plain symmetric arrays.
    """
    Pa = _arr(P)
    dirs = []
    for t in (v, w):
        if isinstance(t, TangentSymmetric):
            if t.base is not P and not np.array_equal(_arr(t.base), Pa):
                raise BaseMismatch("tangent vectors are based at a different point")
            dirs.append(t.direction)
        else:
            d = np.asarray(t, dtype=float)
            _same_dim(Pa, d)
            dirs.append(d)
    Pv = np.linalg.solve(Pa, dirs[0])
    Pw = np.linalg.solve(Pa, dirs[1])
    return float(np.sum(Pv * Pw.T))


def airm_dist_sq(X, Y) -> float:
    """Squared AIRM geodesic distance.

    Evaluated in whitened form ``||log(Y^{-1/2} X Y^{-1/2})||_F^2``, which
    equals ``||log(X Y^{-1})||_F^2`` but keeps the log argument symmetric.
    """
    Xa, Ya = _arr(X), _arr(Y)
    _same_dim(Xa, Ya)
    Yi = spd_invsqrt(Ya)
    S = Yi @ Xa @ Yi
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(np.sum(np.log(w) ** 2))


def stein_dist_sq(X, Y) -> float:
    """Stein divergence ``ln det((X+Y)/2) - (ln det X + ln det Y)/2``."""
    Xa, Ya = _arr(X), _arr(Y)
    _same_dim(Xa, Ya)
    val = logdet(0.5 * (Xa + Ya)) - 0.5 * (logdet(Xa) + logdet(Ya))
    return max(val, 0.0)


def dist_sq(X, Y, metric) -> float:
    """Dispatch to :func:`airm_dist_sq` or :func:`stein_dist_sq`."""
    if Metric.parse(metric) is Metric.AIRM:
        return airm_dist_sq(X, Y)
    return stein_dist_sq(X, Y)


# -- batched helpers (stacks of shape (k, n, n)) ------------------------------


def batch_logdet(stack: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(stack)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def batch_eig_fn(stack: np.ndarray, fn) -> np.ndarray:
    w, U = np.linalg.eigh(stack)
    out = (U * fn(w)[..., None, :]) @ np.swapaxes(U, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def pairwise_dist_sq(stack: np.ndarray, metric, stack_b: np.ndarray | None = None) -> np.ndarray:
    """Matrix of squared distances between every pair of stacked SPD matrices.

    With ``stack_b`` the result is ``(len(stack), len(stack_b))``; otherwise
    it is the symmetric ``(p, p)`` self-distance matrix with a zero diagonal.
    """
    metric = Metric.parse(metric)
    A = np.asarray(stack, dtype=float)
    B = A if stack_b is None else np.asarray(stack_b, dtype=float)
    if A.shape[1:] != B.shape[1:]:
        raise DimMismatch(f"dimension mismatch: {A.shape[1:]} vs {B.shape[1:]}")
    p, q = len(A), len(B)
    D = np.zeros((p, q))
    if metric is Metric.STEIN:
        ld_a = batch_logdet(A)
        ld_b = ld_a if stack_b is None else batch_logdet(B)
        for i in range(p):
            mids = 0.5 * (A[i] + B)
            D[i] = batch_logdet(mids) - 0.5 * (ld_a[i] + ld_b)
    else:
        inv_half_b = batch_eig_fn(B, lambda w: 1.0 / np.sqrt(w))
        for i in range(p):
            S = inv_half_b @ A[i] @ inv_half_b
            w = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))
            D[i] = np.sum(np.log(w) ** 2, axis=-1)
    np.maximum(D, 0.0, out=D)
    if stack_b is None:
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
    return D
