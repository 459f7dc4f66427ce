"""Point-cloud primitives: template generation, normalization, sampling, voxelization.

Point clouds are plain ``(n, 3)`` float64 numpy arrays throughout the
package; row order matters wherever a cloud is paired with a template.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, InvalidArgumentError

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# Tolerance used when checking that a cloud is centred and fits the unit ball.
NORMALIZED_ATOL = 1e-4


def as_cloud(points, name="cloud"):
    """Validate and convert to a contiguous ``(n, 3)`` float64 array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidArgumentError(f"{name} must have shape (n, 3), got {arr.shape}")
    if len(arr) == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite coordinates")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class SphereTemplate:
    points: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        pts = as_cloud(self.points, "template")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Transform:
    """Maps normalized coordinates back with ``original = normalized / scale - translation``."""

    translation: np.ndarray
    scale: float

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) + self.translation) * self.scale

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) / self.scale - self.translation

    def to_dict(self):
        return {"translation": [float(v) for v in self.translation], "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["translation"], dtype=np.float64), float(data["scale"]))


@dataclass(frozen=True)
class AbstractionPyramid:
    """Supervision clouds P^0..P^K; level 0 is the input, higher levels are coarser."""

    levels: tuple
    centroid_counts: tuple
    sigma_per_level: tuple

    @property
    def num_levels(self):
        return len(self.levels)

    @property
    def n(self):
        return len(self.levels[0])

    def __getitem__(self, k):
        return self.levels[k]


@dataclass(frozen=True)
class VoxelGrid:
    resolution: int
    lower: np.ndarray
    upper: np.ndarray
    occupancy: np.ndarray
    surface: np.ndarray = field(default=None, repr=False)

    @property
    def cell_size(self):
        return (self.upper - self.lower) / self.resolution

    def count(self):
        return int(self.occupancy.sum())


def generate_sphere_template(n, radius=1.0):
    """Place ``n`` points on a sphere with the golden-spiral (Fibonacci) lattice.

    The spiral runs along z, so the lattice is mirror-symmetric in z.
    """
    if int(n) != n or n < 4:
        raise InvalidArgumentError(f"template needs n >= 4 points, got {n}")
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be positive, got {radius}")
    n = int(n)
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(1.0 - z * z)
    phi = i * GOLDEN_ANGLE
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1) * radius
    return SphereTemplate(pts, float(radius))


def normalize_cloud(cloud):
    """Centre the cloud at the origin and scale it so the farthest point has norm 1."""
    pts = as_cloud(cloud)
    centroid = pts.mean(axis=0)
    centred = pts - centroid
    max_norm = np.sqrt(np.einsum("ij,ij->i", centred, centred).max())
    if max_norm == 0.0 or not np.isfinite(max_norm):
        raise DegenerateInputError("all points coincide; cannot normalize")
    transform = Transform(-centroid, 1.0 / max_norm)
    return transform.apply(pts), transform


def is_normalized(cloud, atol=NORMALIZED_ATOL):
    pts = np.asarray(cloud, dtype=np.float64)
    centroid = pts.mean(axis=0)
    max_norm = np.linalg.norm(pts, axis=1).max()
    return bool(np.linalg.norm(centroid) <= atol and abs(max_norm - 1.0) <= atol)


def _fps(pts, m, start_index):
    n = len(pts)
    selected = np.empty(m, dtype=np.int64)
    spacing = np.empty(m, dtype=np.float64)
    selected[0] = start_index
    spacing[0] = np.inf
    diff = pts - pts[start_index]
    mind = np.einsum("ij,ij->i", diff, diff)
    taken = np.zeros(n, dtype=bool)
    taken[start_index] = True
    for t in range(1, m):
        # already-selected points are masked so duplicates cannot be chosen twice
        masked = np.where(taken, -1.0, mind)
        nxt = int(np.argmax(masked))
        selected[t] = nxt
        spacing[t] = np.sqrt(mind[nxt])
        taken[nxt] = True
        diff = pts - pts[nxt]
        np.minimum(mind, np.einsum("ij,ij->i", diff, diff), out=mind)
    return selected, spacing, np.sqrt(mind)


def farthest_point_sampling(cloud, m, start_index=0, return_spacing=False):
    """Greedy max-min subsampling; returns ``m`` distinct indices.

    With ``return_spacing`` also returns the selection-time distance of each
    pick (``inf`` for the seed) and the final distance of every point to the
    selected set.
    """
    pts = as_cloud(cloud)
    n = len(pts)
    if int(m) != m or m < 1 or m > n:
        raise InvalidArgumentError(f"m must be in [1, {n}], got {m}")
    if not 0 <= start_index < n:
        raise InvalidArgumentError(f"start_index must be in [0, {n}), got {start_index}")
    selected, spacing, coverage = _fps(pts, int(m), int(start_index))
    if return_spacing:
        return selected, spacing, coverage
    return selected


def gaussian_splatter(centroids, n_total, sigma, seed=0):
    """Replace every centroid by ``n_total / len(centroids)`` isotropic Gaussian samples.

    Samples for centroid ``c`` occupy one contiguous block of rows, in
    centroid order.
    """
    cen = as_cloud(centroids, "centroids")
    m = len(cen)
    if int(n_total) != n_total or n_total < m:
        raise InvalidArgumentError(f"n_total must be an integer >= {m}, got {n_total}")
    if n_total % m:
        raise InvalidArgumentError(f"n_total={n_total} is not divisible by {m} centroids")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    per = int(n_total) // m
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=(int(n_total), 3))
    return np.repeat(cen, per, axis=0) + noise


def build_pyramid(cloud, centroid_counts, sigma_factor=0.25, seed=0):
    """Multi-resolution supervision: FPS down to each centroid count, then splat back to ``n``."""
    pts = as_cloud(cloud)
    n = len(pts)
    counts = tuple(int(c) for c in centroid_counts)
    for c in counts:
        if c < 1 or n % c:
            raise InvalidArgumentError(f"centroid count {c} must divide the cloud size {n}")
    if any(b >= a for a, b in zip(counts, counts[1:])):
        raise InvalidArgumentError(f"centroid counts must be strictly decreasing, got {counts}")
    if counts and counts[0] >= n:
        raise InvalidArgumentError("centroid counts must be smaller than the cloud size")
    if not sigma_factor > 0:
        raise InvalidArgumentError(f"sigma_factor must be positive, got {sigma_factor}")

    level_seeds = np.random.SeedSequence(seed).spawn(len(counts))
    levels = [pts.copy()]
    sigmas = [0.0]
    for count, ss in zip(counts, level_seeds):
        idx, spacing, coverage = farthest_point_sampling(pts, count, 0, return_spacing=True)
        # min pairwise spacing of a greedy FPS set is the last pick's distance
        min_spacing = spacing[-1] if count > 1 else coverage.max()
        sigma = sigma_factor * float(min_spacing)
        levels.append(gaussian_splatter(pts[idx], n, sigma, seed=ss))
        sigmas.append(sigma)
    for lvl in levels:
        lvl.setflags(write=False)
    assert all(len(lvl) == n for lvl in levels)
    return AbstractionPyramid(tuple(levels), counts, tuple(sigmas))


def padded_bounds(clouds, resolution, pad_cells=1):
    """Union bounding box grown by ``pad_cells`` cells on each side.

    The cell size is that of the final grid, so the box spans
    ``resolution - 2 * pad_cells`` cells. Flat axes get unit extent.
    """
    lo = np.min([np.min(c, axis=0) for c in clouds], axis=0)
    hi = np.max([np.max(c, axis=0) for c in clouds], axis=0)
    extent = hi - lo
    flat = extent <= 0
    if np.any(flat):
        extent = np.where(flat, max(extent.max(), 1.0), extent)
        lo = np.where(flat, lo - extent / 2, lo)
        hi = np.where(flat, hi + extent / 2, hi)
    cell = extent / (resolution - 2 * pad_cells)
    return lo - pad_cells * cell, hi + pad_cells * cell


def cell_indices(points, lower, upper, resolution):
    """Integer cell coordinates; points on the upper face go to the last cell."""
    scaled = (points - lower) / (upper - lower) * resolution
    idx = np.floor(scaled).astype(np.int64)
    return np.clip(idx, 0, resolution - 1)


def voxelize_solid(cloud, resolution, bounds):
    """Solid occupancy: every cell not reachable from the grid boundary through empty cells."""
    pts = as_cloud(cloud)
    if int(resolution) != resolution or resolution < 4:
        raise InvalidArgumentError(f"resolution must be >= 4, got {resolution}")
    resolution = int(resolution)
    lower = np.asarray(bounds[0], dtype=np.float64)
    upper = np.asarray(bounds[1], dtype=np.float64)
    if lower.shape != (3,) or upper.shape != (3,) or np.any(upper <= lower):
        raise InvalidArgumentError("bounds must be a non-degenerate (min, max) box")
    if np.any(pts < lower) or np.any(pts > upper):
        raise InvalidArgumentError("point outside voxelization bounds")

    surface = np.zeros((resolution,) * 3, dtype=bool)
    idx = cell_indices(pts, lower, upper, resolution)
    surface[idx[:, 0], idx[:, 1], idx[:, 2]] = True

    # 6-connected components of empty space; those touching the boundary are exterior
    labels, _ = ndimage.label(~surface, structure=ndimage.generate_binary_structure(3, 1))
    border = np.concatenate([
        labels[0].ravel(), labels[-1].ravel(),
        labels[:, 0].ravel(), labels[:, -1].ravel(),
        labels[:, :, 0].ravel(), labels[:, :, -1].ravel(),
    ])
    border = np.unique(border[border > 0])
    exterior = np.isin(labels, border)
    solid = ~exterior
    return VoxelGrid(resolution, lower, upper, solid, surface)
