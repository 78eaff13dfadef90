"""Grassmann-manifold geometry and a nonlinear conjugate-gradient minimiser.

Points of G(m, n) are represented by ``n x m`` matrices with orthonormal
columns; a tangent vector at ``W`` is an ``n x m`` matrix ``D`` with
``W^T D = 0``. Geodesics and parallel transport use the closed forms built
from the compact SVD of the direction (Edelman, Arias & Smith, 1998).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import subspace_angles

from .errors import BaseMismatch, DimMismatch, InvalidParams

log = logging.getLogger(__name__)

__all__ = [
    "project_to_tangent",
    "geodesic_step",
    "parallel_transport",
    "principal_angles",
    "CgConfig",
    "TraceRecord",
    "CgResult",
    "minimize",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def project_to_tangent(W, D) -> np.ndarray:
    """Horizontal part ``(I - W W^T) D`` of an ambient ``n x m`` matrix."""
    W = np.asarray(W, dtype=float)
    D = np.asarray(D, dtype=float)
    if W.shape != D.shape:
        raise DimMismatch(f"direction shape {D.shape} does not match point shape {W.shape}")
    return D - W @ (W.T @ D)


def _reorthonormalize(Y: np.ndarray) -> np.ndarray:
    if np.linalg.norm(Y.T @ Y - np.eye(Y.shape[1])) <= 1e-13:
        return Y
    Q, R = np.linalg.qr(Y)
    return Q * np.sign(np.diag(R))


def geodesic_step(W, delta, t: float) -> np.ndarray:
    """Point at parameter ``t`` on the geodesic leaving ``W`` with velocity ``delta``.

    ``W(t) = W V cos(S t) V^T + U sin(S t) V^T`` where ``delta = U S V^T``.
    """
    W = np.asarray(W, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if W.shape != delta.shape:
        raise DimMismatch(f"direction shape {delta.shape} does not match point shape {W.shape}")
    if t == 0 or not np.any(delta):
        return W.copy()
    U, s, Vt = np.linalg.svd(delta, full_matrices=False)
    Y = (W @ Vt.T) * np.cos(s * t) @ Vt + U * np.sin(s * t) @ Vt
    return _reorthonormalize(Y)


def parallel_transport(H, W_from, W_to, delta, t: float) -> np.ndarray:
    """Transport tangent ``H`` at ``W_from`` along the geodesic with velocity
    ``delta`` to ``W_to = geodesic_step(W_from, delta, t)``.

    ``tau(H) = (-W V sin(S t) U^T + U cos(S t) U^T) H + (I - U U^T) H``.
    Pass ``W_to=None`` to skip the final re-projection onto its tangent space.
    """
    W_from = np.asarray(W_from, dtype=float)
    H = np.asarray(H, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if H.shape != W_from.shape or delta.shape != W_from.shape:
        raise DimMismatch("transport operands must all be n x m")
    scale = max(np.linalg.norm(H), np.linalg.norm(delta), 1e-300)
    if np.linalg.norm(W_from.T @ H) > 1e-8 * scale or np.linalg.norm(W_from.T @ delta) > 1e-8 * scale:
        raise BaseMismatch("H and delta must be tangent at W_from")
    return _transport(H, W_from, W_to, delta, t)


def _transport(H, W_from, W_to, delta, t):
    if t == 0 or not np.any(delta):
        return H.copy()
    U, s, Vt = np.linalg.svd(delta, full_matrices=False)
    UtH = U.T @ H
    out = (-(W_from @ Vt.T) * np.sin(s * t) + U * np.cos(s * t)) @ UtH + (H - U @ UtH)
    if W_to is not None:
        out = project_to_tangent(W_to, out)
    return out


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians) between ``span(A)`` and ``span(B)``."""
    return subspace_angles(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


@dataclass
class CgConfig:
    """Stopping rule and line-search settings for :func:`minimize`.

    ``grad_tol=None`` resolves to ``1e-6 * p`` (p = training-set size) and
    ``restart_every=None`` to ``m (n - m)``. ``max_step`` bounds the largest
    principal-angle rotation (radians) tried by one line search.
    """

    max_iters: int = 200
    grad_tol: Optional[float] = None
    cost_tol: float = 1e-9
    cost_tol_window: int = 3
    line_search: str = "golden_section"
    max_step: float = math.pi / 2
    restart_every: Optional[int] = None
    beta: str = "polak_ribiere"
    ls_max_evals: int = 40

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidParams("max_iters must be >= 1")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise InvalidParams("grad_tol must be positive")
        if self.cost_tol <= 0 or self.max_step <= 0:
            raise InvalidParams("cost_tol and max_step must be positive")
        if self.line_search not in ("golden_section", "backtracking"):
            raise InvalidParams(f"unknown line search {self.line_search!r}")
        if self.beta not in ("polak_ribiere", "fletcher_reeves"):
            raise InvalidParams(f"unknown CG coefficient rule {self.beta!r}")
        if self.restart_every is not None and self.restart_every < 1:
            raise InvalidParams("restart_every must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    cost: float
    grad_norm: float
    step: float


@dataclass
class CgResult:
    W: np.ndarray
    cost: float
    grad_norm: float
    trace: list = field(default_factory=list)
    status: str = ""
    line_search_failed: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    def __iter__(self):
        # allows ``W, trace = minimize(...)``
        return iter((self.W, self.trace))


def _golden_section(phi, f0, t_init, t_max, max_evals, rtol=0.02):
    """Derivative-free search for ``min phi`` over ``(0, t_max]``.

    Expands (doubling) or contracts (halving) from ``t_init`` until a
    decrease over ``f0`` is bracketed, then refines with golden sections.
    Returns ``(t, phi(t))`` of the best point, or ``None`` without decrease.
    """
    evals = 0
    cache = {}

    def f(t):
        nonlocal evals
        if t not in cache:
            cache[t] = phi(t)
            evals += 1
        return cache[t]

    h = min(t_init, t_max)
    fh = f(h)
    if fh < f0:
        lo = 0.0
        while h < t_max and evals < max_evals:
            h2 = min(2.0 * h, t_max)
            if f(h2) >= fh:
                a, b = lo, h2
                break
            lo, h, fh = h, h2, f(h2)
        else:
            a, b = lo, h
    else:
        while fh >= f0:
            if evals >= max_evals or h < 1e-14 * t_max:
                return None
            h *= 0.25
            fh = f(h)
        a, b = 0.0, 4.0 * h

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    while evals < max_evals and (b - a) > rtol * b:
        if f(c) < f(d):
            b, d = d, c
            c = b - _GOLDEN * (b - a)
        else:
            a, c = c, d
            d = a + _GOLDEN * (b - a)
    t_best = min(cache, key=lambda k: (cache[k], k))
    if cache[t_best] >= f0:
        return None
    return t_best, cache[t_best]


def _backtracking(phi, f0, slope, t_init, t_max, max_evals, c1=1e-4):
    t = min(t_init, t_max)
    best = None
    for _ in range(max_evals):
        ft = phi(t)
        if ft < f0 and (best is None or ft < best[1]):
            best = (t, ft)
        if ft <= f0 + c1 * t * slope and ft < f0:
            return t, ft
        t *= 0.5
    return best


def minimize(
    problem,
    W0,
    cfg: Optional[CgConfig] = None,
    trace_sink: Optional[Callable[[TraceRecord], None]] = None,
) -> CgResult:
    """Minimise a rotation-invariant cost over G(m, n) by nonlinear CG.

    Parameters
    ----------
    problem : ObjectiveContext or callable
        Either a training context, or a function ``W -> (L(W), D_W L)``
        returning the cost and its Euclidean Jacobian.
    W0 : ndarray, shape (n, m)
        Orthonormal starting point; its column count fixes ``m``. The
        pipeline passes the truncated identity ``I_{n x m}``.
    cfg : CgConfig
    trace_sink : callable, optional
        Receives one :class:`TraceRecord` per accepted iterate (including
        the start, as iteration 0).

    Returns
    -------
    CgResult
        Best iterate found; ``line_search_failed`` is set when the search
        stopped because no decrease could be found along the direction.
    """
    from .objective import ObjectiveContext, cost, cost_and_jacobian

    cfg = cfg or CgConfig()
    if isinstance(problem, ObjectiveContext):
        ctx = problem

        def cost_and_grad(W):
            return cost_and_jacobian(W, ctx)

        def cost_only(W):
            return cost(W, ctx)

        grad_tol_scale = len(ctx.dataset)
    else:
        cost_and_grad = problem

        def cost_only(W):
            return problem(W)[0]

        grad_tol_scale = 1.0
    W = np.array(W0, dtype=float)
    n, m = W.shape
    if np.linalg.norm(W.T @ W - np.eye(m)) > 1e-8:
        raise InvalidParams("starting point must have orthonormal columns")
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-6 * grad_tol_scale
    restart_every = cfg.restart_every or max(m * (n - m), 1)

    def emit(rec):
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)

    trace: list = []
    f, D = cost_and_grad(W)
    G = project_to_tangent(W, D)
    gnorm = float(np.linalg.norm(G))
    emit(TraceRecord(0, f, gnorm, 0.0))
    H = -G
    since_restart = 0
    small_decreases = 0
    step_angle = cfg.max_step / 8.0
    status = "max_iters"
    failed = False

    for k in range(1, cfg.max_iters + 1):
        if gnorm <= grad_tol:
            status = "grad_tol"
            break
        slope = float(np.sum(G * H))
        if slope >= 0:
            H, slope, since_restart = -G, -gnorm**2, 0
        hnorm_spec = float(np.linalg.norm(H, 2))
        t_max = cfg.max_step / hnorm_spec

        def phi(t, W=W, H=H):
            return cost_only(geodesic_step(W, H, t))

        t_init = min(step_angle / hnorm_spec, t_max)
        if cfg.line_search == "golden_section":
            found = _golden_section(phi, f, t_init, t_max, cfg.ls_max_evals)
        else:
            found = _backtracking(phi, f, slope, t_init, t_max, cfg.ls_max_evals)
        if found is None:
            status = "line_search_failed"
            failed = True
            log.debug("line search found no decrease at iteration %d", k)
            break
        t, _ = found
        step_angle = min(2.0 * t * hnorm_spec, cfg.max_step)

        W_new = geodesic_step(W, H, t)
        f_new, D_new = cost_and_grad(W_new)
        G_new = project_to_tangent(W_new, D_new)
        H_tr = _transport(H, W, W_new, H, t)

        since_restart += 1
        gg_old = float(np.sum(G * G))
        if cfg.beta == "polak_ribiere":
            G_tr = _transport(G, W, W_new, H, t)
            eta = float(np.sum((G_new - G_tr) * G_new)) / gg_old
        else:
            eta = float(np.sum(G_new * G_new)) / gg_old
        if eta < 0 or since_restart >= restart_every:
            eta, since_restart = 0.0, 0

        rel_drop = (f - f_new) / max(abs(f), 1e-300)
        W, f, G = W_new, f_new, G_new
        gnorm = float(np.linalg.norm(G))
        H = -G + eta * H_tr
        emit(TraceRecord(k, f, gnorm, t))

        small_decreases = small_decreases + 1 if rel_drop < cfg.cost_tol else 0
        if small_decreases >= cfg.cost_tol_window:
            status = "cost_tol"
            break
    else:
        if gnorm <= grad_tol:
            status = "grad_tol"

    return CgResult(W=W, cost=f, grad_norm=gnorm, trace=trace, status=status, line_search_failed=failed)
