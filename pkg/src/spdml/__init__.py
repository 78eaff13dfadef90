"""Discriminative dimensionality reduction for SPD matrices.

Learns an orthonormal ``W`` so that ``W^T X W`` keeps same-class matrices
close and different-class matrices apart under the affine-invariant
Riemannian metric or the Stein divergence, then classifies by nearest
neighbour in the reduced space.
"""

from .affinity import LabeledSpdDataset, affinity, default_nu_w, knn_graph_between, knn_graph_within
from .descriptors import block_diag_concat, rcm, rcm_projected
from .errors import (
    BaseMismatch,
    DimMismatch,
    EmptyList,
    FoldTooSmall,
    InsufficientClassSize,
    InvalidParams,
    NotPositiveDefinite,
    NotSquare,
    NotSymmetric,
    RankDeficient,
    SingularProjectedMatrix,
    SpdError,
)
from .grassmann import CgConfig, CgResult, geodesic_step, minimize, parallel_transport, principal_angles
from .objective import ObjectiveContext, cost, cost_and_jacobian, cost_jacobian, map_spd
from .pipeline import (
    CvPlan,
    CvResult,
    SpdMlModel,
    accuracy,
    cross_validate,
    fit,
    make_planted_dataset,
    make_planted_observations,
    nn_classify,
    nn_predict,
    transform,
)
from .spd import Metric, SpdMatrix, airm_dist_sq, dist_sq, make_spd, stein_dist_sq

__version__ = "0.1.0"
