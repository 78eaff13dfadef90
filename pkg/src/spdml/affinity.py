"""Within-class / between-class nearest-neighbour graphs and the signed
affinity matrix ``A = G_w - G_b`` that weights the training objective."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, InsufficientClassSize, InvalidParams
from .spd import Metric, SpdMatrix, make_spd, pairwise_dist_sq

__all__ = [
    "LabeledSpdDataset",
    "default_nu_w",
    "neighbor_lists",
    "knn_graph_within",
    "knn_graph_between",
    "affinity",
]


@dataclass(frozen=True)
class LabeledSpdDataset:
    """``p`` SPD matrices of a common size, stacked as ``(p, n, n)``, with
    integer class labels."""

    matrices: np.ndarray
    labels: np.ndarray
    _dist_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.matrices, dtype=float)
        y = np.array(self.labels)
        if X.ndim != 3 or X.shape[1] != X.shape[2]:
            raise DimMismatch(f"matrices must stack to (p, n, n), got {X.shape}")
        if y.ndim != 1 or len(y) != len(X):
            raise InvalidParams(f"{len(X)} matrices but {y.size} labels")
        if len(X) == 0:
            raise InvalidParams("dataset is empty")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidParams("labels must be integers")
            y = y.astype(int)
        X = 0.5 * (X + np.swapaxes(X, 1, 2))
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "matrices", X)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_list(cls, mats, labels, validate: bool = True) -> "LabeledSpdDataset":
        mats = list(mats)
        if not mats:
            raise InvalidParams("dataset is empty")
        arrs = [(make_spd(M) if validate and not isinstance(M, SpdMatrix) else M) for M in mats]
        dims = {np.asarray(a).shape for a in arrs}
        if len(dims) != 1:
            raise DimMismatch(f"matrices have differing shapes: {sorted(dims)}")
        return cls(np.stack([np.asarray(a) for a in arrs]), np.asarray(labels))

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def class_sizes(self) -> dict:
        vals, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def __getitem__(self, idx) -> SpdMatrix:
        return SpdMatrix._trusted(self.matrices[idx])

    def subset(self, idx) -> "LabeledSpdDataset":
        if not isinstance(idx, slice):
            idx = np.asarray(idx)
        return LabeledSpdDataset(self.matrices[idx], self.labels[idx])

    def distances(self, metric) -> np.ndarray:
        """Cached full ``(p, p)`` squared-distance matrix under ``metric``."""
        metric = Metric.parse(metric)
        if metric not in self._dist_cache:
            D = pairwise_dist_sq(self.matrices, metric)
            D.setflags(write=False)
            self._dist_cache[metric] = D
        return self._dist_cache[metric]


def default_nu_w(data: LabeledSpdDataset) -> int:
    """Smallest class size minus one (a point is not its own neighbour)."""
    return max(min(data.class_sizes().values()) - 1, 0)


def neighbor_lists(D, labels, k: int, same_class: bool) -> list:
    """For every point, indices of its ``k`` nearest candidates.

    Candidates share the point's label when ``same_class`` and carry a
    different label otherwise; the point itself is never a candidate. Ties
    in distance go to the lower index. ``k`` is clipped to the number of
    candidates available.
    """
    D = np.asarray(D)
    labels = np.asarray(labels)
    p = len(labels)
    out = []
    for i in range(p):
        mask = labels == labels[i] if same_class else labels != labels[i]
        mask[i] = False
        cand = np.flatnonzero(mask)
        order = np.argsort(D[i, cand], kind="stable")
        out.append([int(j) for j in cand[order[:k]]])
    return out


def _graph(data: LabeledSpdDataset, k: int, metric, same_class: bool, D=None) -> np.ndarray:
    if k < 1:
        raise InvalidParams(f"neighbour count must be >= 1, got {k}")
    if D is None:
        D = data.distances(metric)
    p = len(data)
    sizes = data.class_sizes()
    if same_class:
        short = {c: s for c, s in sizes.items() if s < k + 1}
        what = "same-class"
    else:
        short = {c: p - s for c, s in sizes.items() if p - s < k}
        what = "other-class"
    # single-class data has no between-class candidates by construction
    if short and (same_class or len(sizes) > 1):
        warnings.warn(
            f"fewer than {k} {what} neighbours available for classes "
            f"{sorted(short)}; neighbour count clipped",
            InsufficientClassSize,
            stacklevel=3,
        )
    G = np.zeros((p, p))
    for i, nb in enumerate(neighbor_lists(D, data.labels, k, same_class)):
        G[i, nb] = 1.0
    G = np.maximum(G, G.T)
    np.fill_diagonal(G, 0.0)
    return G


def knn_graph_within(data: LabeledSpdDataset, nu_w: int, metric="airm", D=None) -> np.ndarray:
    """Binary symmetric graph linking each point to its ``nu_w`` nearest
    same-class neighbours (or-rule symmetrisation)."""
    return _graph(data, nu_w, metric, True, D)


def knn_graph_between(data: LabeledSpdDataset, nu_b: int, metric="airm", D=None) -> np.ndarray:
    """Binary symmetric graph linking each point to its ``nu_b`` nearest
    points carrying a different label."""
    return _graph(data, nu_b, metric, False, D)


def affinity(data: LabeledSpdDataset, nu_w: int | None, nu_b: int, metric="airm") -> np.ndarray:
    """Signed affinity ``G_w - G_b`` with entries in {-1, 0, 1}.

    ``nu_w=None`` uses :func:`default_nu_w`; a resulting count of zero (all
    classes singletons) leaves ``G_w`` empty.
    """
    if nu_w is None:
        nu_w = default_nu_w(data)
    D = data.distances(metric)
    p = len(data)
    Gw = knn_graph_within(data, nu_w, metric, D) if nu_w >= 1 else np.zeros((p, p))
    Gb = knn_graph_between(data, nu_b, metric, D) if nu_b >= 1 else np.zeros((p, p))
    A = Gw - Gb
    A.setflags(write=False)
    return A
