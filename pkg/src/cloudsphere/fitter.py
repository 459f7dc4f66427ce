"""Cloud Sphere representation and its coarse-to-fine direct fit.

A shape is a fixed sphere template plus one offset field per stage. Stage
``K`` is the coarsest and is applied first; ``reconstruct(rep, k)`` adds
stages ``K..k`` to the template. Fitting minimises, per stage, a Chamfer
term against the matching abstraction level and a neighbour-weighted
offset smoothness term, with hand-derived gradients and Adam.
"""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError, OptimizationFailure
from .geometry import (
    AbstractionPyramid,
    SphereTemplate,
    as_cloud,
    build_pyramid,
    generate_sphere_template,
    is_normalized,
)
from .neighbors import NearestIndex
from .optim import Adam

log = logging.getLogger(__name__)

DEFAULT_ALPHA = (0.5, 0.2, 0.2, 0.2, 0.2)
DEFAULT_BETA = (0.0, 0.0, 0.0, 1.0, 10.0)
DEFAULT_CENTROID_COUNTS = (1024, 256, 64, 16)

# Guards the regulariser's unit vector where two offsets coincide.
REG_EPS = 1e-12


@dataclass(frozen=True)
class CloudSphereRep:
    """Template plus offset fields; ``offsets[k]`` is the stage-k field D^k."""

    template: SphereTemplate
    offsets: np.ndarray

    def __post_init__(self):
        off = np.array(self.offsets, dtype=np.float64)
        if off.ndim != 3 or off.shape[1:] != self.template.points.shape:
            raise InvalidArgumentError(
                f"offsets must have shape (K+1, {len(self.template)}, 3), got {off.shape}")
        if not np.all(np.isfinite(off)):
            raise InvalidArgumentError("offsets contain non-finite values")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    @property
    def stage_count(self):
        return self.offsets.shape[0]

    @property
    def K(self):
        return self.offsets.shape[0] - 1

    @property
    def n(self):
        return len(self.template)

    @classmethod
    def zeros(cls, template, stage_count):
        return cls(template, np.zeros((stage_count, len(template), 3)))

    def with_offsets(self, offsets):
        return CloudSphereRep(self.template, offsets)


REG_NORMALIZATIONS = ("edges", "none")


@dataclass(frozen=True)
class LossWeights:
    """Per-stage weights of the Chamfer (alpha) and smoothness (beta) terms.

    ``reg_normalization="edges"`` divides each smoothness sum by the number
    of directed graph edges inside the total loss, making it a weighted mean
    comparable in scale to the per-point-averaged Chamfer term. ``"none"``
    uses the raw sum.
    """

    alpha: tuple
    beta: tuple
    reg_normalization: str = "edges"

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        beta = tuple(float(b) for b in self.beta)
        if len(alpha) != len(beta):
            raise InvalidArgumentError("alpha and beta must have the same length")
        if any(w < 0 or not math.isfinite(w) for w in alpha + beta):
            raise InvalidArgumentError("loss weights must be finite and non-negative")
        if self.reg_normalization not in REG_NORMALIZATIONS:
            raise InvalidArgumentError(f"reg_normalization must be one of {REG_NORMALIZATIONS}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    def __len__(self):
        return len(self.alpha)

    @classmethod
    def defaults(cls, stage_count=5, reg_normalization="edges"):
        """Standard per-stage weights, keeping the finest ``stage_count`` entries."""
        if not 1 <= stage_count <= len(DEFAULT_ALPHA):
            raise InvalidArgumentError(
                f"default weights cover 1..{len(DEFAULT_ALPHA)} stages; pass explicit weights for {stage_count}")
        return cls(DEFAULT_ALPHA[:stage_count], DEFAULT_BETA[:stage_count], reg_normalization)


def weights_reg_scale(weights, graph):
    if weights.reg_normalization == "edges":
        return 1.0 / max(graph.edge_count, 1)
    return 1.0


@dataclass(frozen=True)
class RegGraph:
    """Symmetrised k-nearest-neighbour graph on the template, stored as directed edges."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    k_reg: int
    n: int

    @property
    def edge_count(self):
        return len(self.src)


def build_reg_graph(template, k_reg=8):
    """Neighbour graph with weights exp(-|q_i - q_j|) from template coordinates.

    Every kNN relation is inserted in both directions, so each unordered
    pair appears exactly twice. ``k_reg >= n - 1`` gives the complete graph.
    """
    pts = as_cloud(getattr(template, "points", template), "template")
    n = len(pts)
    if k_reg < 1:
        raise InvalidArgumentError(f"k_reg must be >= 1, got {k_reg}")
    if k_reg >= n - 1:
        src, dst = np.nonzero(~np.eye(n, dtype=bool))
    else:
        _, nbr = cKDTree(pts).query(pts, k=k_reg + 1)
        rows = np.repeat(np.arange(n), k_reg + 1)
        cols = nbr.ravel()
        keep = rows != cols
        rows, cols = rows[keep], cols[keep]
        pairs = np.concatenate([np.stack([rows, cols], 1), np.stack([cols, rows], 1)])
        pairs = np.unique(pairs, axis=0)
        src, dst = pairs[:, 0], pairs[:, 1]
    src = np.ascontiguousarray(src, dtype=np.int64)
    dst = np.ascontiguousarray(dst, dtype=np.int64)
    weight = np.exp(-np.linalg.norm(pts[src] - pts[dst], axis=1))
    for arr in (src, dst, weight):
        arr.setflags(write=False)
    return RegGraph(src, dst, weight, int(k_reg), n)


def reconstruct_all(template_points, offsets):
    """All partial reconstructions; row k of the result is R^k, row K+1 the template."""
    stages = offsets.shape[0]
    out = np.empty((stages + 1,) + template_points.shape)
    out[stages] = template_points
    for k in range(stages - 1, -1, -1):
        out[k] = out[k + 1] + offsets[k]
    return out


def reconstruct(rep, down_to_stage=0):
    """R^k = T + D^K + ... + D^k, accumulated coarse to fine."""
    if int(down_to_stage) != down_to_stage or not 0 <= down_to_stage <= rep.K:
        raise InvalidArgumentError(f"stage must be in [0, {rep.K}], got {down_to_stage}")
    out = np.array(rep.template.points, dtype=np.float64)
    for k in range(rep.K, down_to_stage - 1, -1):
        out = out + rep.offsets[k]
    return out


def _reg_value_grad(d, graph, need_grad=True):
    diff = d[graph.src] - d[graph.dst]
    norm = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    value = float(np.sum(graph.weight * norm))
    if not need_grad:
        return value, None
    coef = graph.weight / np.maximum(norm, REG_EPS)
    contrib = diff * coef[:, None]
    grad = np.zeros_like(d)
    # each undirected pair is stored twice, so +contrib on src and -contrib on dst
    # together give the factor 2 of the symmetric double sum
    np.add.at(grad, graph.src, contrib)
    np.add.at(grad, graph.dst, -contrib)
    return value, grad


def _cd_value_grad(recon, target_index, need_grad=True):
    target = target_index.points
    nn_rt, d_rt = target_index.query(recon)
    nn_tr, d_tr = NearestIndex(recon).query(target)
    value = float(d_rt.mean() + d_tr.mean())
    if not need_grad:
        return value, None
    grad = (2.0 / len(recon)) * (recon - target[nn_rt])
    np.add.at(grad, nn_tr, (2.0 / len(target)) * (recon[nn_tr] - target))
    return value, grad


def _check_sizes(rep, pyramid, weights, graph=None):
    if pyramid.num_levels != rep.stage_count:
        raise InvalidArgumentError(
            f"pyramid has {pyramid.num_levels} levels but rep has {rep.stage_count} stages")
    if pyramid.n != rep.n:
        raise InvalidArgumentError(f"pyramid clouds have {pyramid.n} points, template has {rep.n}")
    if weights is not None and len(weights) != rep.stage_count:
        raise InvalidArgumentError(f"{len(weights)} loss weights for {rep.stage_count} stages")
    if graph is not None and graph.n != rep.n:
        raise InvalidArgumentError(f"graph built for {graph.n} points, template has {rep.n}")


def loss_cd_stage(rep, pyramid, k):
    """Chamfer distance between R^k and the stage-k supervision cloud."""
    _check_sizes(rep, pyramid, None)
    return _cd_value_grad(reconstruct(rep, k), NearestIndex(pyramid[k]), need_grad=False)[0]


def loss_reg_stage(rep, graph, k):
    """Weighted sum of offset differences over the directed edges of ``graph``."""
    if not 0 <= k <= rep.K:
        raise InvalidArgumentError(f"stage must be in [0, {rep.K}], got {k}")
    return _reg_value_grad(rep.offsets[k], graph, need_grad=False)[0]


class Objective:
    """Multi-stage loss with cached nearest-neighbour indices for the fixed targets."""

    def __init__(self, template, pyramid, weights, graph):
        self.template = np.asarray(getattr(template, "points", template), dtype=np.float64)
        self.pyramid = pyramid
        self.weights = weights
        self.graph = graph
        self.target_index = [NearestIndex(level) for level in pyramid.levels]

    def __call__(self, offsets, stages=None, need_grad=True):
        """Return (total, per-stage cd, per-stage reg, gradient).

        ``stages`` restricts which loss terms are included; gradient entries
        for stages no term depends on come out zero.
        """
        K = offsets.shape[0] - 1
        stages = range(K + 1) if stages is None else sorted(stages)
        recon = reconstruct_all(self.template, offsets)
        grad = np.zeros_like(offsets) if need_grad else None
        cd_vals, reg_vals = {}, {}
        total = 0.0
        reg_scale = weights_reg_scale(self.weights, self.graph)
        # g_cd[k] is dL/dR^k; R^k depends on D^m for every m >= k
        recon_grad = np.zeros_like(offsets) if need_grad else None
        for k in stages:
            a, b = self.weights.alpha[k], self.weights.beta[k]
            if a > 0:
                cd, g = _cd_value_grad(recon[k], self.target_index[k], need_grad)
                cd_vals[k] = cd
                total += a * cd
                if need_grad:
                    recon_grad[k] += a * g
            if b > 0:
                reg, g = _reg_value_grad(offsets[k], self.graph, need_grad)
                reg_vals[k] = reg
                total += b * reg_scale * reg
                if need_grad:
                    grad[k] += (b * reg_scale) * g
        if need_grad:
            grad += np.cumsum(recon_grad, axis=0)
        return total, cd_vals, reg_vals, grad


def total_loss(rep, pyramid, weights, graph):
    _check_sizes(rep, pyramid, weights, graph)
    return Objective(rep.template, pyramid, weights, graph)(rep.offsets, need_grad=False)[0]


def grad_total_loss(rep, pyramid, weights, graph):
    """Analytic gradient of the total loss, shaped like ``rep.offsets``."""
    _check_sizes(rep, pyramid, weights, graph)
    return Objective(rep.template, pyramid, weights, graph)(rep.offsets)[3]


@dataclass
class FitConfig:
    centroid_counts: tuple = DEFAULT_CENTROID_COUNTS
    sigma_factor: float = 0.25
    alpha: tuple = None
    beta: tuple = None
    reg_normalization: str = "edges"
    k_reg: int = 8
    iterations: int = 500
    joint_iterations: int = 500
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    schedule: str = "sequential"
    radius: float = 1.0

    def __post_init__(self):
        self.centroid_counts = tuple(int(c) for c in self.centroid_counts)
        if self.schedule not in ("sequential", "joint"):
            raise InvalidArgumentError(f"schedule must be 'sequential' or 'joint', got {self.schedule!r}")
        if self.iterations < 0 or self.joint_iterations < 0:
            raise InvalidArgumentError("iteration counts must be non-negative")
        if not self.lr > 0:
            raise InvalidArgumentError(f"lr must be positive, got {self.lr}")

    @property
    def stage_count(self):
        return len(self.centroid_counts) + 1

    def weights(self):
        if self.alpha is None or self.beta is None:
            defaults = LossWeights.defaults(self.stage_count)
        alpha = self.alpha if self.alpha is not None else defaults.alpha
        beta = self.beta if self.beta is not None else defaults.beta
        weights = LossWeights(alpha, beta, self.reg_normalization)
        if len(weights) != self.stage_count:
            raise InvalidArgumentError(
                f"{len(weights)} loss weights given for {self.stage_count} stages")
        return weights

    def to_dict(self):
        d = asdict(self)
        d["centroid_counts"] = list(self.centroid_counts)
        w = self.weights()
        d["alpha"], d["beta"] = list(w.alpha), list(w.beta)
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for key in ("alpha", "beta", "centroid_counts"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class FitResult:
    rep: CloudSphereRep
    history: list
    pyramid: AbstractionPyramid
    graph: RegGraph = field(repr=False, default=None)

    def __iter__(self):
        # allows ``rep, history = fit(...)``
        return iter((self.rep, self.history))


def _phases(config):
    K = config.stage_count - 1
    if config.schedule == "joint":
        return [("joint", 0, config.joint_iterations)]
    phases = [(f"stage{j}", j, config.iterations) for j in range(K, -1, -1)]
    phases.append(("joint", 0, config.joint_iterations))
    return phases


def fit(target, config=None, template=None):
    """Fit offset fields so the deformed template matches ``target`` at every stage.

    The target must already be normalized (centred, max norm 1). Each
    sequential phase ``j`` trains stages ``K..j`` on the loss terms of those
    stages, keeping the best iterate seen; a final joint phase trains all
    stages on the full loss.
    """
    config = config or FitConfig()
    pts = as_cloud(target, "target")
    if not is_normalized(pts):
        raise InvalidArgumentError("target must be normalized (centroid at origin, max norm 1)")
    n = len(pts)
    if template is None:
        template = generate_sphere_template(n, config.radius)
    elif len(template) != n:
        raise InvalidArgumentError(f"template has {len(template)} points, target has {n}")

    weights = config.weights()
    pyramid = build_pyramid(pts, config.centroid_counts, config.sigma_factor, config.seed)
    graph = build_reg_graph(template, config.k_reg)
    objective = Objective(template, pyramid, weights, graph)

    K = config.stage_count - 1
    offsets = np.zeros((K + 1, n, 3))
    history = []

    def record(phase, step, total, cd_vals, reg_vals):
        row = {"phase": phase, "step": step, "loss": total}
        for k in range(K + 1):
            row[f"cd_{k}"] = cd_vals.get(k, float("nan"))
            row[f"reg_{k}"] = reg_vals.get(k, float("nan"))
        history.append(row)
        if not math.isfinite(total):
            raise OptimizationFailure(f"loss became non-finite in phase {phase} at step {step}", history)

    for name, first_live, iters in _phases(config):
        stages = range(first_live, K + 1)
        mask = np.zeros((K + 1, 1, 1))
        mask[first_live:] = 1.0
        opt = Adam(offsets.shape, config.lr, config.beta1, config.beta2, config.adam_eps)
        best_loss, best = math.inf, offsets.copy()
        for step in range(iters):
            total, cd_vals, reg_vals, grad = objective(offsets, stages)
            record(name, step, total, cd_vals, reg_vals)
            if total < best_loss:
                best_loss, best = total, offsets.copy()
            opt.step(offsets, grad, mask)
        total, cd_vals, reg_vals, _ = objective(offsets, stages, need_grad=False)
        record(name, iters, total, cd_vals, reg_vals)
        if total < best_loss:
            best_loss, best = total, offsets.copy()
        offsets = best
        log.info("phase %s: best loss %.6g after %d steps", name, best_loss, iters)

    rep = CloudSphereRep(template, offsets)
    return FitResult(rep, history, pyramid, graph)
