"""Template-indexed correspondence, color coding, and offset-blending edits."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .fitter import CloudSphereRep, reconstruct
from .metrics import shift

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class RegionMask:
    """Per-template-index selection; ``soft_weights`` (in [0, 1]) win over ``selected``."""

    selected: np.ndarray
    soft_weights: np.ndarray = None

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool)
        object.__setattr__(self, "selected", sel)
        if self.soft_weights is not None:
            w = np.asarray(self.soft_weights, dtype=np.float64)
            if w.shape != sel.shape:
                raise InvalidArgumentError("soft_weights must match the mask length")
            if np.any(w < 0) or np.any(w > 1):
                raise InvalidArgumentError("soft_weights must lie in [0, 1]")
            object.__setattr__(self, "soft_weights", w)

    def __len__(self):
        return len(self.selected)

    def weights(self):
        if self.soft_weights is not None:
            return self.soft_weights
        return self.selected.astype(np.float64)

    @classmethod
    def full(cls, n):
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def empty(cls, n):
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def from_indices(cls, n, indices):
        sel = np.zeros(n, dtype=bool)
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InvalidArgumentError(f"mask index out of range [0, {n})")
        sel[idx] = True
        return cls(sel)

    @classmethod
    def from_box(cls, points, lower, upper):
        pts = np.asarray(points)
        inside = np.all((pts >= np.asarray(lower)) & (pts <= np.asarray(upper)), axis=1)
        return cls(inside)

    def union(self, other):
        if self.soft_weights is None and other.soft_weights is None:
            return RegionMask(self.selected | other.selected)
        return RegionMask(self.selected | other.selected, np.maximum(self.weights(), other.weights()))


def smooth_mask(mask, graph, rings=1):
    """Soften mask edges by repeated weighted averaging over the template neighbour graph.

    Each pass replaces w_i by (w_i + sum_j omega_ij w_j) / (1 + sum_j omega_ij).
    """
    w = mask.weights().copy()
    norm = np.ones_like(w)
    np.add.at(norm, graph.src, graph.weight)
    for _ in range(rings):
        acc = w.copy()
        np.add.at(acc, graph.src, graph.weight * w[graph.dst])
        w = np.clip(acc / norm, 0.0, 1.0)
    return RegionMask(w > 0, w)


@dataclass(frozen=True)
class Correspondence:
    """Identity index map from template points to reconstruction points."""

    template: np.ndarray
    recon: np.ndarray

    @property
    def indices(self):
        return np.arange(len(self.template))

    @property
    def displacements(self):
        return self.recon - self.template

    def shift(self):
        return shift(self.template, self.recon)


def correspondence(rep):
    return Correspondence(np.array(rep.template.points), reconstruct(rep, 0))


def coordinate_ramp(template, axis):
    """Coordinate along ``axis`` mapped linearly so the minimum is 0 and the maximum 1."""
    if axis not in AXES:
        raise InvalidArgumentError(f"axis must be one of x, y, z, got {axis!r}")
    pts = np.asarray(getattr(template, "points", template))
    c = pts[:, AXES[axis]]
    lo, hi = c.min(), c.max()
    if hi == lo:
        return np.zeros_like(c)
    return (c - lo) / (hi - lo)


def color_code(template, axis, cmap="jet"):
    """uint8 RGB per template point; reuse the array for any index-aligned cloud."""
    import matplotlib

    ramp = coordinate_ramp(template, axis)
    rgba = matplotlib.colormaps[cmap](ramp)
    return np.round(rgba[:, :3] * 255).astype(np.uint8)


def _check_shared_template(a, b):
    if a.n != b.n or not np.array_equal(a.template.points, b.template.points):
        raise InvalidArgumentError("representations do not share a template")
    if a.stage_count != b.stage_count:
        raise InvalidArgumentError(
            f"stage counts differ ({a.stage_count} vs {b.stage_count})")


def blend_rep(source, target, mask, t, stages=None):
    """Blended representation; see :func:`blend_offsets`."""
    _check_shared_template(source, target)
    if len(mask) != source.n:
        raise InvalidArgumentError(f"mask has {len(mask)} entries, template has {source.n}")
    if not 0.0 <= t <= 1.0:
        raise InvalidArgumentError(f"t must be in [0, 1], got {t}")
    stages = range(source.stage_count) if stages is None else stages
    stages = sorted(set(int(k) for k in stages))
    if stages and (stages[0] < 0 or stages[-1] > source.K):
        raise InvalidArgumentError(f"stages must lie in [0, {source.K}]")
    tw = (t * mask.weights())[:, None]
    out = np.array(source.offsets)
    for k in stages:
        out[k] = (1.0 - tw) * source.offsets[k] + tw * target.offsets[k]
    return CloudSphereRep(source.template, out)


def blend_offsets(source, target, mask, t, stages=None):
    """Move the masked offsets of ``source`` toward ``target`` and reconstruct.

    d_i^k <- (1 - t w_i) d_i^k(source) + t w_i d_i^k(target) for k in ``stages``
    (default: all). Points with zero weight reproduce the source bit for bit.
    """
    return reconstruct(blend_rep(source, target, mask, t, stages), 0)


def co_edit(reps, donor, mask, t, stages=None):
    """Apply the same masked blend toward ``donor`` to every representation."""
    return [blend_offsets(rep, donor, mask, t, stages) for rep in reps]


def read_mask(path, template, recon=None):
    """Parse a mask file: one template index per line, or ``box xmin ymin zmin xmax ymax zmax [space]``.

    ``space`` is ``template`` (default) or ``recon``; recon boxes need the
    reconstruction the mask is drawn on. Lines combine by union.
    """
    path = Path(path)
    tpts = np.asarray(getattr(template, "points", template))
    n = len(tpts)
    sel = np.zeros(n, dtype=bool)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read mask: {exc.strerror}", path) from None
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split("#", 1)[0].split()
        if not tok:
            continue
        if tok[0] == "box":
            numbers, tail = tok[1:7], tok[7:]
            space = " ".join(tail).replace("space", "").strip(" :=") or "template"
            if len(numbers) != 6:
                raise FormatError("box needs 6 numbers", path, line=lineno)
            try:
                vals = np.array([float(v) for v in numbers])
            except ValueError as exc:
                raise FormatError(str(exc), path, line=lineno) from None
            if space not in ("template", "recon"):
                raise FormatError(f"unknown box space {space!r}", path, line=lineno)
            if space == "recon":
                if recon is None:
                    raise FormatError("recon-space box needs a reconstruction", path, line=lineno)
                pts = np.asarray(recon)
            else:
                pts = tpts
            sel |= RegionMask.from_box(pts, vals[:3], vals[3:]).selected
        else:
            try:
                idx = int(tok[0])
            except ValueError:
                raise FormatError(f"expected an index or 'box', got {tok[0]!r}", path, line=lineno) from None
            if not 0 <= idx < n:
                raise FormatError(f"index {idx} out of range [0, {n})", path, line=lineno)
            sel[idx] = True
    return RegionMask(sel)
