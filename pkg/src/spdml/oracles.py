"""Independent reference computations used to verify the fast paths.

Nothing here shares code with the implementations it checks: distances go
through generalised eigenvalues and ``slogdet``, neighbours through plain
sorting, derivatives through central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "fd_jacobian",
    "RatioExperiment",
    "ratio_curve",
    "ratio_scalar",
    "brute_knn",
    "airm_dist_sq_geneig",
    "stein_dist_sq_slogdet",
    "random_spd",
    "random_invertible",
    "random_rotation",
    "random_orthonormal",
    "TWO_SQRT_TWO",
]

TWO_SQRT_TWO = 2.0 * math.sqrt(2.0)


def fd_jacobian(f, W, step=None) -> np.ndarray:
    """Central-difference Jacobian of a scalar function of a matrix.

    ``step`` defaults to ``1e-6 * max(1, ||W||_F)``. The perturbed points
    are not orthonormal, so ``f`` must accept any full-rank matrix.
    """
    W = np.asarray(W, dtype=float)
    if step is None:
        step = 1e-6 * max(1.0, float(np.linalg.norm(W)))
    if step <= 0:
        raise ValueError("step must be positive")
    G = np.zeros_like(W)
    E = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        E[idx] = step
        G[idx] = (f(W + E) - f(W - E)) / (2.0 * step)
        E[idx] = 0.0
    return G


def airm_dist_sq_geneig(X, Y) -> float:
    """``sum ln^2 lambda_i`` over the generalised eigenvalues of ``X v = lambda Y v``."""
    lam = scipy.linalg.eigh(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), eigvals_only=True)
    return float(np.sum(np.log(lam) ** 2))


def stein_dist_sq_slogdet(X, Y) -> float:
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    _, a = np.linalg.slogdet(0.5 * (X + Y))
    _, b = np.linalg.slogdet(X)
    _, c = np.linalg.slogdet(Y)
    return float(a - 0.5 * (b + c))


@dataclass(frozen=True)
class RatioExperiment:
    """Compare the two measures between ``I`` and ``diag(exp(t * direction))``."""

    n: int
    direction: tuple
    t_grid: tuple = (0.5, 0.1, 0.05, 0.01)

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (self.n,):
            raise ValueError(f"direction must have length {self.n}")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        t = np.asarray(self.t_grid, dtype=float)
        if np.any(t <= 0) or np.any(np.diff(t) >= 0):
            raise ValueError("t_grid must be positive and strictly decreasing")

    @classmethod
    def random(cls, n: int, seed: int = 0, t_grid=(0.5, 0.1, 0.05, 0.01)) -> "RatioExperiment":
        v = np.random.default_rng(seed).standard_normal(n)
        return cls(n, tuple(v / np.linalg.norm(v)), tuple(t_grid))


def ratio_scalar(t: float, direction) -> float:
    """Closed form of the ratio for diagonal arguments.

    ``t^2 sum v_i^2 / sum [ln((1 + e^{t v_i})/2) - t v_i / 2]``, the
    denominator written as ``ln cosh(t v_i / 2)`` for accuracy.
    """
    v = np.asarray(direction, dtype=float)
    x = 0.5 * t * v
    # ln cosh(x) = |x| + log1p(exp(-2|x|)) - ln 2
    ax = np.abs(x)
    lncosh = ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)
    return float(t * t * np.sum(v * v) / np.sum(lncosh))


def ratio_curve(exp: RatioExperiment, conjugate=None) -> list:
    """``[(t, airm_dist_sq / stein_dist_sq)]`` at ``X = I``, ``Y = diag(exp(t v))``.

    With ``conjugate`` (an invertible matrix ``M``) both arguments are first
    replaced by ``M X M^T`` and ``M Y M^T``.
    """
    from .spd import airm_dist_sq, stein_dist_sq

    v = np.asarray(exp.direction, dtype=float)
    out = []
    for t in exp.t_grid:
        X = np.eye(exp.n)
        Y = np.diag(np.exp(t * v))
        if conjugate is not None:
            M = np.asarray(conjugate, dtype=float)
            X, Y = M @ X @ M.T, M @ Y @ M.T
        out.append((float(t), airm_dist_sq(X, Y) / stein_dist_sq(X, Y)))
    return out


def brute_knn(distances, labels, k: int, same_class: bool) -> list:
    """Exhaustive neighbour lists: sort ``(distance, index)`` tuples per point."""
    D = np.asarray(distances)
    labels = list(labels)
    out = []
    for i in range(len(labels)):
        cands = sorted(
            (float(D[i, j]), j)
            for j in range(len(labels))
            if j != i and ((labels[j] == labels[i]) == same_class)
        )
        out.append([j for _, j in cands[:k]])
    return out


# -- random instances --------------------------------------------------------


def random_spd(rng, n: int, cond: float = 100.0) -> np.ndarray:
    """Random SPD matrix with log-uniform spectrum in ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0.0, math.log(cond), n))
    X = (Q * w) @ Q.T
    return 0.5 * (X + X.T)


def random_invertible(rng, n: int, cond: float = 100.0) -> np.ndarray:
    """Random matrix with singular values in ``[1, cond]`` (condition <= cond)."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.exp(rng.uniform(0.0, math.log(cond), n))
    s[0], s[-1] = 1.0, cond
    return (U * s) @ V.T


def random_rotation(rng, m: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_orthonormal(rng, n: int, m: int) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return Q
