"""Shape similarity and correspondence quality measures."""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import DegenerateInputError, InvalidArgumentError, UnsupportedSizeError
from .geometry import as_cloud, cell_indices, padded_bounds, voxelize_solid
from .neighbors import nearest

CD_SCALE = 1000.0
EMD_SCALE = 100.0
EMD_MAX_POINTS = 4096


def _points(cloud, name):
    # accept SphereTemplate or raw arrays
    return as_cloud(getattr(cloud, "points", cloud), name)


def chamfer_terms(P, Q):
    """Directional mean squared nearest-neighbor distances (P->Q, Q->P) plus the indices."""
    P = _points(P, "P")
    Q = _points(Q, "Q")
    nn_pq, d_pq = nearest(P, Q)
    nn_qp, d_qp = nearest(Q, P)
    return d_pq.mean(), d_qp.mean(), nn_pq, nn_qp


def chamfer(P, Q):
    """Symmetric Chamfer distance with each direction averaged over its own cloud."""
    a, b, _, _ = chamfer_terms(P, Q)
    # IEEE addition is commutative, so swapping P and Q gives the same bits
    return float(a + b)


def emd(P, Q, max_points=EMD_MAX_POINTS):
    """Mean matched Euclidean distance under the optimal bijection (exact assignment)."""
    P = _points(P, "P")
    Q = _points(Q, "Q")
    if len(P) != len(Q):
        raise InvalidArgumentError(f"emd needs equal cardinality, got {len(P)} and {len(Q)}")
    if len(P) > max_points:
        raise UnsupportedSizeError(f"emd exact solver is capped at {max_points} points, got {len(P)}")
    cost = cdist(P, Q)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def iou_solid(P, Q, resolution=32):
    """IoU of the solid voxelizations of two clouds on one shared grid."""
    P = _points(P, "P")
    Q = _points(Q, "Q")
    lower, upper = padded_bounds([P, Q], resolution)
    a = voxelize_solid(P, resolution, (lower, upper)).occupancy
    b = voxelize_solid(Q, resolution, (lower, upper)).occupancy
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def spread(template, recon, grid_resolution=8):
    """Mean over template voxel cells of the total variance of the matching reconstructed points."""
    T = _points(template, "template")
    R = _points(recon, "recon")
    if len(T) != len(R):
        raise InvalidArgumentError(f"template has {len(T)} points but recon has {len(R)}")
    lower, upper = T.min(axis=0), T.max(axis=0)
    upper = np.where(upper > lower, upper, lower + 1.0)
    idx = cell_indices(T, lower, upper, grid_resolution)
    keys = (idx[:, 0] * grid_resolution + idx[:, 1]) * grid_resolution + idx[:, 2]
    order = np.argsort(keys, kind="stable")
    uniq, starts, counts = np.unique(keys[order], return_index=True, return_counts=True)
    values = []
    for start, count in zip(starts, counts):
        if count < 2:
            continue
        group = R[order[start:start + count]]
        values.append(group.var(axis=0).sum())
    if not values:
        raise DegenerateInputError("no template cell holds two or more points")
    return float(np.mean(values))


def shift(template, recon):
    """Mean Euclidean displacement between index-aligned template and reconstruction points."""
    T = _points(template, "template")
    R = _points(recon, "recon")
    if len(T) != len(R):
        raise InvalidArgumentError(f"template has {len(T)} points but recon has {len(R)}")
    return float(np.linalg.norm(R - T, axis=1).mean())


@dataclass
class MetricsReport:
    """Scores for one template/target/reconstruction triple.

    ``cd`` and ``emd`` are stored in reporting units (x1000 and x100).
    Metrics that were not computed stay at 0.0 with their flag cleared.
    """

    cd: float = 0.0
    emd: float = 0.0
    iou: float = 0.0
    spread: float = 0.0
    shift: float = 0.0
    computed: dict = field(default_factory=lambda: dict.fromkeys(
        ("cd", "emd", "iou", "spread", "shift"), False))

    def to_dict(self):
        return asdict(self)

    def row(self):
        return {
            "cd_x1000": self.cd if self.computed["cd"] else "",
            "emd_x100": self.emd if self.computed["emd"] else "",
            "iou": self.iou if self.computed["iou"] else "",
            "spread": self.spread if self.computed["spread"] else "",
            "shift": self.shift if self.computed["shift"] else "",
        }


def evaluate(target, recon, template=None, *, cd=True, emd_enabled=True, iou=True,
             spread_enabled=True, shift_enabled=True, iou_resolution=32, spread_resolution=8):
    report = MetricsReport()
    if cd:
        report.cd = chamfer(recon, target) * CD_SCALE
        report.computed["cd"] = True
    if emd_enabled and len(recon) == len(target) and len(recon) <= EMD_MAX_POINTS:
        report.emd = emd(recon, target) * EMD_SCALE
        report.computed["emd"] = True
    if iou:
        report.iou = iou_solid(recon, target, iou_resolution)
        report.computed["iou"] = True
    if template is not None:
        if spread_enabled:
            report.spread = spread(template, recon, spread_resolution)
            report.computed["spread"] = True
        if shift_enabled:
            report.shift = shift(template, recon)
            report.computed["shift"] = True
    return report
