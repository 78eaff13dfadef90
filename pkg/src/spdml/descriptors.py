"""Region covariance descriptors built from observation matrices.

An observation matrix ``O`` has shape ``(n_features, n_obs)``: each column is
one feature vector (a pixel, a motion-capture frame, ...). The descriptor is
the unbiased sample covariance of the columns, normalised by ``1/(r - 1)``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from .errors import DimMismatch, EmptyList, NotPositiveDefinite, RankDeficient
from .spd import SpdMatrix, make_spd

__all__ = [
    "as_observations",
    "centering_factor",
    "rcm",
    "rcm_projected",
    "block_diag_concat",
]


def as_observations(obs) -> np.ndarray:
    O = np.asarray(obs, dtype=float)
    if O.ndim != 2 or O.shape[0] < 1 or O.shape[1] < 1:
        raise DimMismatch(f"observation matrix must be 2-D (n_features, n_obs), got {O.shape}")
    if not np.all(np.isfinite(O)):
        raise ValueError("observation matrix contains non-finite entries")
    return O


def centering_factor(r: int) -> np.ndarray:
    """Explicit centring factor ``J`` with ``O J J^T O^T`` equal to the
    ``1/(r-1)``-normalised covariance.

    The textbook ``r^{-3/2}(r I - 1)`` gives ``1/r`` normalisation; it is
    rescaled here by ``sqrt(r/(r-1))``. ``J @ ones(r) == 0``. Only used as an
    independent check, since it needs O(r^2) memory.
    """
    if r < 2:
        raise ValueError("need at least two observations")
    J = r ** -1.5 * (r * np.eye(r) - np.ones((r, r)))
    return J * np.sqrt(r / (r - 1.0))


def _covariance(O: np.ndarray) -> np.ndarray:
    r = O.shape[1]
    if r < 2:
        raise RankDeficient(f"need at least 2 observations, got {r}", rank=0, dim=O.shape[0])
    mu = O.mean(axis=1, keepdims=True)
    D = O - mu
    C = (D @ D.T) / (r - 1)
    return 0.5 * (C + C.T)


def _validated(C: np.ndarray, r: int) -> SpdMatrix:
    n = C.shape[0]
    try:
        return make_spd(C)
    except NotPositiveDefinite as exc:
        rank = int(np.linalg.matrix_rank(C, hermitian=True))
        raise RankDeficient(
            f"covariance of {r} observations in {n} dimensions is singular "
            f"(numerical rank {rank} < {n}, smallest eigenvalue {exc.min_eigenvalue:.3g})",
            rank=rank,
            dim=n,
        ) from None


def rcm(obs) -> SpdMatrix:
    """Region covariance matrix of the observation columns.

    Raises
    ------
    RankDeficient
        When ``r <= n`` (centring leaves rank at most ``r - 1``) or the
        observations are degenerate. No ridge term is added; use
        :func:`rcm_projected` to get a valid low-dimensional descriptor from
        few observations.
    """
    O = as_observations(obs)
    n, r = O.shape
    if r <= n:
        raise RankDeficient(
            f"{r} observations cannot give a full-rank {n}x{n} covariance", rank=max(r - 1, 0), dim=n
        )
    return _validated(_covariance(O), r)


def rcm_projected(obs, W) -> SpdMatrix:
    """Covariance of the projected observations ``W^T O``.

    Equal to ``W^T rcm(obs) W`` whenever the full covariance exists, but only
    needs ``r > m`` observations; raises RankDeficient otherwise.
    """
    O = as_observations(obs)
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != O.shape[0]:
        raise DimMismatch(f"projection shape {W.shape} incompatible with {O.shape[0]} features")
    m = W.shape[1]
    r = O.shape[1]
    if r <= m:
        raise RankDeficient(
            f"{r} observations cannot give a full-rank {m}x{m} covariance", rank=max(r - 1, 0), dim=m
        )
    return _validated(_covariance(W.T @ O), r)


def block_diag_concat(parts) -> SpdMatrix:
    """Block-diagonal concatenation of SPD descriptors."""
    parts = list(parts)
    if not parts:
        raise EmptyList("need at least one block")
    arrs = [(p if isinstance(p, SpdMatrix) else make_spd(p)).values for p in parts]
    return SpdMatrix._trusted(block_diag(*arrs))
