"""Self-verification suite run by ``spdml check``.

Each check compares a fast implementation against an oracle from
:mod:`spdml.oracles` and reports the worst measured error. The Jacobian
functions under test can be swapped out, which is how the suite's own
sensitivity is tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objective as obj
from .affinity import LabeledSpdDataset, affinity
from .grassmann import (
    CgConfig,
    geodesic_step,
    minimize,
    parallel_transport,
    principal_angles,
    project_to_tangent,
)
from .oracles import (
    TWO_SQRT_TWO,
    RatioExperiment,
    fd_jacobian,
    random_invertible,
    random_orthonormal,
    random_rotation,
    random_spd,
    ratio_curve,
)
from .spd import Metric, airm_dist_sq, stein_dist_sq

__all__ = ["CheckResult", "run_checks", "format_report", "fd_relative_error", "DEFAULT_JACOBIANS"]

DEFAULT_JACOBIANS = {
    "logdet": obj.logdet_grad,
    "stein": obj.stein_pair_jacobian,
    "airm": obj.airm_pair_jacobian,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "measured", float(self.measured))


def fd_relative_error(fd: np.ndarray, an: np.ndarray) -> float:
    """``max|fd - an| / max|an|`` (absolute error when ``an`` is zero)."""
    scale = float(np.max(np.abs(an)))
    err = float(np.max(np.abs(fd - an)))
    return err / scale if scale > 0 else err


def _affine(rng, n_triples=60, tol=1e-8) -> CheckResult:
    worst = 0.0
    for k in range(n_triples):
        n = (3, 8, 20)[k % 3]
        X, Y = random_spd(rng, n), random_spd(rng, n)
        M = random_invertible(rng, n)
        for fn in (airm_dist_sq, stein_dist_sq):
            d = fn(X, Y)
            dm = fn(M @ X @ M.T, M @ Y @ M.T)
            worst = max(worst, abs(dm - d) / d)
    return CheckResult("affine-invariance", worst <= tol, worst, tol, f"{n_triples} triples, both metrics")


def _random_problem(rng, n, m, p, metric):
    X = np.stack([random_spd(rng, n, cond=20.0) for _ in range(p)])
    labels = np.arange(p) % 2 + 1
    data = LabeledSpdDataset(X, labels)
    return obj.ObjectiveContext(data, affinity(data, None, 1, metric), metric)


def _rotation(rng, n_problems=10, tol=1e-10) -> CheckResult:
    worst = 0.0
    for k in range(n_problems):
        metric = (Metric.AIRM, Metric.STEIN)[k % 2]
        n, m = 8, 3
        ctx = _random_problem(rng, n, m, 6, metric)
        W = random_orthonormal(rng, n, m)
        L = obj.cost(W, ctx)
        LR = obj.cost(W @ random_rotation(rng, m), ctx)
        worst = max(worst, abs(L - LR) / abs(L))
    return CheckResult("rotation-invariance", worst <= tol, worst, tol, "|L(W) - L(WR)| / |L(W)|")


def _gradient(rng, jac, n_instances=12, tol=1e-5) -> CheckResult:
    worst = 0.0
    for k in range(n_instances):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(1, min(4, n - 1) + 1))
        W = random_orthonormal(rng, n, m)
        Xi, Xj = random_spd(rng, n, 20.0), random_spd(rng, n, 20.0)
        cases = [
            (lambda V: float(np.linalg.slogdet(V.T @ Xi @ V)[1]), jac["logdet"](W, Xi)),
            (lambda V: stein_dist_sq(V.T @ Xi @ V, V.T @ Xj @ V), jac["stein"](W, Xi, Xj)),
            (lambda V: airm_dist_sq(V.T @ Xi @ V, V.T @ Xj @ V), jac["airm"](W, Xi, Xj)),
        ]
        for f, an in cases:
            worst = max(worst, fd_relative_error(fd_jacobian(f, W), an))
        ctx = _random_problem(rng, n, m, 5, (Metric.AIRM, Metric.STEIN)[k % 2])
        G = obj.cost_jacobian(W, ctx)
        worst = max(worst, fd_relative_error(fd_jacobian(lambda V: obj.cost(V, ctx), W), G))
    return CheckResult("gradient", worst <= tol, worst, tol, "central differences vs analytic Jacobians")


def _orthonormality(rng, tol=1e-8) -> CheckResult:
    n, m = 10, 3
    W = random_orthonormal(rng, n, m)
    worst = 0.0
    for _ in range(200):
        D = project_to_tangent(W, rng.standard_normal((n, m)))
        W = geodesic_step(W, D, 0.3 / np.linalg.norm(D))
        worst = max(worst, float(np.linalg.norm(W.T @ W - np.eye(m))))
    ctx = _random_problem(rng, n, m, 8, Metric.STEIN)
    res = minimize(ctx, random_orthonormal(rng, n, m), CgConfig(max_iters=200, grad_tol=1e-300, cost_tol=1e-300))
    worst = max(worst, float(np.linalg.norm(res.W.T @ res.W - np.eye(m))))
    return CheckResult("orthonormality", worst <= tol, worst, tol, "200 geodesic steps and a CG run")


def _geodesic_transport(rng, tol=1e-8) -> CheckResult:
    n, m = 9, 3
    worst = 0.0
    for _ in range(10):
        W = random_orthonormal(rng, n, m)
        D = project_to_tangent(W, rng.standard_normal((n, m)))
        D /= np.linalg.norm(D, 2)
        s, t = 0.3, 0.5
        direct = geodesic_step(W, D, s + t)
        Ws = geodesic_step(W, D, s)
        Ds = parallel_transport(D, W, Ws, D, s)
        composed = geodesic_step(Ws, Ds, t)
        worst = max(worst, float(np.max(principal_angles(direct, composed))))
        H1 = project_to_tangent(W, rng.standard_normal((n, m)))
        H2 = project_to_tangent(W, rng.standard_normal((n, m)))
        T1 = parallel_transport(H1, W, Ws, D, s)
        T2 = parallel_transport(H2, W, Ws, D, s)
        worst = max(worst, abs(np.sum(T1 * T2) - np.sum(H1 * H2)))
    return CheckResult("geodesic-transport", worst <= tol, worst, tol, "composition angles and inner products")


def _ratio(tol=1e-3, sqrt_tol=1e-4) -> list:
    exp = RatioExperiment.random(6, seed=0, t_grid=(0.5, 0.1, 0.05, 0.01))
    curve = ratio_curve(exp)
    r = curve[-1][1]
    gaps = [abs(v - 8.0) for _, v in curve]
    monotone = all(a > b for a, b in zip(gaps, gaps[1:]))
    root = math.sqrt(r)
    return [
        CheckResult("ratio-limit", abs(r - 8.0) <= tol and monotone, r, tol,
                    f"ratio at t={curve[-1][0]:g}; monotone={monotone}"),
        CheckResult("ratio-scale", abs(root - TWO_SQRT_TWO) <= sqrt_tol, root, sqrt_tol,
                    f"sqrt(ratio) = {root:.7f} vs 2*sqrt(2) = {TWO_SQRT_TWO:.7f}"),
    ]


def run_checks(seed: int = 0, jacobians: dict | None = None) -> list:
    """Run every check and return the results in a fixed order."""
    jac = dict(DEFAULT_JACOBIANS)
    jac.update(jacobians or {})
    rng = np.random.default_rng(seed)
    return [
        _affine(rng),
        _rotation(rng),
        _gradient(rng, jac),
        _orthonormality(rng),
        _geodesic_transport(rng),
        *_ratio(),
    ]


def format_report(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  {'measured':>12}  {'tolerance':>9}  detail"]
    for r in results:
        lines.append(
            f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.measured:>12.6g}  {r.tolerance:>9.1e}  {r.detail}"
        )
    return "\n".join(lines) + "\n"
