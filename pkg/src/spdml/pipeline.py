"""Training, transformation, nearest-neighbour classification and
cross-validation, plus planted synthetic data for experiments."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional

import numpy as np

from .affinity import LabeledSpdDataset, affinity, default_nu_w
from .errors import DimMismatch, FoldTooSmall, InvalidParams
from .grassmann import CgConfig, CgResult, minimize
from .io import format_matrix, parse_matrix
from .objective import ObjectiveContext, check_projection, map_spd, truncated_identity
from .spd import Metric, SpdMatrix, batch_eig_fn, pairwise_dist_sq

log = logging.getLogger(__name__)

__all__ = [
    "SpdMlModel",
    "CvPlan",
    "CvResult",
    "fit",
    "transform",
    "transform_dataset",
    "nn_classify",
    "nn_predict",
    "predict_projected",
    "accuracy",
    "stratified_folds",
    "cross_validate",
    "make_planted_dataset",
    "make_planted_observations",
    "thread_count",
]


def thread_count() -> int:
    """Worker cap from ``SPDML_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SPDML_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SpdMlModel:
    W: np.ndarray
    metric: Metric
    nu_w: int
    nu_b: int
    seed: Optional[int] = None
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = check_projection(self.W)
        self.metric = Metric.parse(self.metric)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    def to_json(self) -> str:
        """Serialise; ``W`` is stored as a 17-significant-digit text block."""
        doc = {
            "format": "spdml-model",
            "version": 1,
            "n": self.n,
            "m": self.m,
            "metric": self.metric.value,
            "nu_w": int(self.nu_w),
            "nu_b": int(self.nu_b),
            "seed": self.seed,
            "train_meta": self.train_meta,
            "W": format_matrix(self.W),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SpdMlModel":
        doc = json.loads(text)
        if doc.get("format") != "spdml-model":
            raise InvalidParams("not an spdml model file")
        W = parse_matrix(doc["W"], "model W")
        if W.shape != (doc["n"], doc["m"]):
            raise DimMismatch(f"model declares {doc['n']}x{doc['m']} but W is {W.shape}")
        return cls(W, doc["metric"], doc["nu_w"], doc["nu_b"], doc.get("seed"), doc.get("train_meta", {}))


def fit(
    data: LabeledSpdDataset,
    m: int,
    nu_w: Optional[int] = None,
    nu_b: int = 1,
    metric="airm",
    cfg: Optional[CgConfig] = None,
    trace_sink: Optional[Callable] = None,
    W0=None,
    seed: Optional[int] = None,
) -> SpdMlModel:
    """Learn an orthonormal ``n x m`` projection from labelled SPD data.

    Builds the affinity graph, then minimises the affinity-weighted cost
    over G(m, n) starting from the truncated identity. ``nu_w=None`` uses
    the smallest class size minus one.
    """
    n = data.dim
    if not 1 <= m < n:
        raise InvalidParams(f"need 1 <= m < n, got m={m}, n={n}")
    metric = Metric.parse(metric)
    if nu_w is None:
        nu_w = default_nu_w(data)
    A = affinity(data, nu_w, nu_b, metric)
    ctx = ObjectiveContext(data, A, metric)
    W0 = truncated_identity(n, m) if W0 is None else check_projection(W0)
    res: CgResult = minimize(ctx, W0, cfg, trace_sink)
    meta = {
        "iterations": res.iterations,
        "initial_cost": res.trace[0].cost,
        "final_cost": res.cost,
        "grad_norm": res.grad_norm,
        "status": res.status,
        "line_search_failed": res.line_search_failed,
    }
    log.info("fit: %s after %d iterations, cost %.6g -> %.6g", res.status, res.iterations, meta["initial_cost"], res.cost)
    model = SpdMlModel(res.W, metric, nu_w, nu_b, seed, meta)
    model.trace = res.trace
    return model


def transform(model: SpdMlModel, X) -> SpdMatrix:
    """``W^T X W`` for one matrix."""
    return map_spd(X, model.W)


def transform_dataset(model: SpdMlModel, data: LabeledSpdDataset) -> LabeledSpdDataset:
    X = data.matrices
    if X.shape[1] != model.n:
        raise DimMismatch(f"model expects {model.n}x{model.n} matrices, got {X.shape[1]}")
    P = model.W.T @ X @ model.W
    return LabeledSpdDataset(P, data.labels)


def nn_predict(train: LabeledSpdDataset, queries, metric) -> np.ndarray:
    """Nearest-neighbour labels for a stack of query matrices; ties go to the
    lower training index."""
    Q = np.asarray(queries, dtype=float)
    if Q.ndim == 2:
        Q = Q[None]
    if Q.shape[1:] != train.matrices.shape[1:]:
        raise DimMismatch(f"query size {Q.shape[1:]} does not match training size {train.matrices.shape[1:]}")
    D = pairwise_dist_sq(Q, metric, train.matrices)
    return train.labels[np.argmin(D, axis=1)]


def nn_classify(train: LabeledSpdDataset, query, metric) -> int:
    """Label of the training matrix nearest to ``query``."""
    if len(train) == 0:
        raise InvalidParams("training set is empty")
    return int(nn_predict(train, query, metric)[0])


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    return float(np.mean(pred == truth)) if len(truth) else 0.0


@dataclass
class CvPlan:
    folds: int = 5
    m_grid: list = field(default_factory=lambda: [2])
    nu_b_grid: list = field(default_factory=lambda: [1])

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidParams("cross-validation needs at least 2 folds")
        if not self.m_grid or not self.nu_b_grid:
            raise InvalidParams("candidate grids must be non-empty")


@dataclass
class CvResult:
    best_m: int
    best_nu_b: int
    fold_accuracies: dict

    def mean_accuracy(self, m, nu_b) -> float:
        return float(np.mean(self.fold_accuracies[(m, nu_b)]))

    def to_dict(self) -> dict:
        return {
            "best_m": self.best_m,
            "best_nu_b": self.best_nu_b,
            "candidates": [
                {"m": m, "nu_b": b, "fold_accuracies": accs, "mean_accuracy": float(np.mean(accs))}
                for (m, b), accs in sorted(self.fold_accuracies.items())
            ],
        }


def stratified_folds(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), dtype=int)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise FoldTooSmall(f"class {c} has {len(idx)} samples, fewer than {k} folds")
        idx = rng.permutation(idx)
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return fold


def cross_validate(
    data: LabeledSpdDataset,
    plan: CvPlan,
    nu_w_rule: Optional[Callable[[LabeledSpdDataset], int]] = None,
    metric="airm",
    cfg: Optional[CgConfig] = None,
    seed: int = 0,
) -> CvResult:
    """Pick ``(m, nu_b)`` maximising mean fold NN accuracy after projection.

    Ties prefer the smaller ``m``, then the smaller ``nu_b``.
    """
    metric = Metric.parse(metric)
    nu_w_rule = nu_w_rule or default_nu_w
    folds = stratified_folds(data.labels, plan.folds, seed)
    for m in plan.m_grid:
        if not 1 <= m < data.dim:
            raise InvalidParams(f"candidate m={m} outside [1, {data.dim - 1}]")

    def run(job):
        (m, nu_b), f = job
        tr, te = data.subset(folds != f), data.subset(folds == f)
        model = fit(tr, m, nu_w_rule(tr), nu_b, metric, cfg)
        pred = predict_projected(model, tr, te)
        return (m, nu_b), accuracy(pred, te.labels)

    jobs = [((m, b), f) for m, b in product(plan.m_grid, plan.nu_b_grid) for f in range(plan.folds)]
    workers = min(thread_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    accs: dict = {}
    for key, acc in results:
        accs.setdefault(key, []).append(acc)
    best = min(accs, key=lambda key: (-np.mean(accs[key]), key[0], key[1]))
    return CvResult(int(best[0]), int(best[1]), accs)


def predict_projected(model: SpdMlModel, train: LabeledSpdDataset, test: LabeledSpdDataset) -> np.ndarray:
    return nn_predict(transform_dataset(model, train), transform_dataset(model, test).matrices, model.metric)


# -- planted synthetic data --------------------------------------------------


def _random_symmetric(rng, k: int, size=None) -> np.ndarray:
    # Entries scaled so that E||S||_F^2 == k (unit-variance eigen-spread).
    shape = (k, k) if size is None else (size, k, k)
    G = rng.standard_normal(shape)
    S = (G + np.swapaxes(G, -1, -2)) / 2.0
    return S / np.sqrt((k + 1) / 2.0)


def _expm_sym(S):
    return batch_eig_fn(S, np.exp)


def _planted_parts(n, m_true, n_classes, seed, separation):
    if not 1 <= m_true < n:
        raise InvalidParams(f"need 1 <= m_true < n, got m_true={m_true}, n={n}")
    if n_classes < 1:
        raise InvalidParams("need at least one class")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    protos = _expm_sym(separation * _random_symmetric(rng, m_true, n_classes))
    return rng, Q, protos


def make_planted_dataset(
    n: int,
    m_true: int,
    n_classes: int,
    per_class: int,
    noise: float = 0.1,
    seed: int = 0,
    separation: float = 1.0,
    nuisance: float = 1.0,
) -> tuple:
    """Labelled SPD matrices whose class structure lives in a hidden
    ``m_true``-dimensional subspace.

    Each class has an ``m_true x m_true`` SPD prototype ``P_c``. A sample is
    ``Q diag(P_c^{1/2} exp(noise E) P_c^{1/2}, exp(nuisance F)) Q^T`` where
    ``E`` and ``F`` are fresh random symmetric matrices and ``Q`` is a fixed
    random orthogonal matrix; its first ``m_true`` columns span the planted
    subspace. The nuisance block is label-independent and isotropic in
    distribution.

    Returns
    -------
    data : LabeledSpdDataset
        Labels ``1..n_classes``, grouped by class.
    basis : ndarray, shape (n, m_true)
        Orthonormal basis of the planted subspace.
    """
    if per_class < 1 or noise < 0 or nuisance < 0 or separation < 0:
        raise InvalidParams("per_class must be >= 1 and scales non-negative")
    rng, Q, protos = _planted_parts(n, m_true, n_classes, seed, separation)
    p = n_classes * per_class
    half = batch_eig_fn(protos, np.sqrt)
    labels = np.repeat(np.arange(1, n_classes + 1), per_class)
    E = _expm_sym(noise * _random_symmetric(rng, m_true, p))
    signal = half[labels - 1] @ E @ half[labels - 1]
    F = _expm_sym(nuisance * _random_symmetric(rng, n - m_true, p))
    X = np.zeros((p, n, n))
    X[:, :m_true, :m_true] = signal
    X[:, m_true:, m_true:] = F
    X = Q @ X @ Q.T
    return LabeledSpdDataset(X, labels), Q[:, :m_true].copy()


def make_planted_observations(
    n: int,
    m_true: int,
    n_classes: int,
    per_class: int,
    n_obs: int,
    noise: float = 0.1,
    seed: int = 0,
    separation: float = 1.0,
    nuisance: float = 1.0,
) -> tuple:
    """Observation matrices (``n x n_obs``) drawn from the planted model.

    Sample ``i`` has population covariance built exactly as in
    :func:`make_planted_dataset`; its columns are zero-mean Gaussian draws
    from it. Returns ``(observations, labels, basis)``.
    """
    if n_obs < 2:
        raise InvalidParams("need at least two observations per sample")
    data, basis = make_planted_dataset(n, m_true, n_classes, per_class, noise, seed, separation, nuisance)
    rng = np.random.default_rng([seed, 1])
    roots = batch_eig_fn(data.matrices, np.sqrt)
    Z = rng.standard_normal((len(data), n, n_obs))
    return list(roots @ Z), data.labels.copy(), basis
