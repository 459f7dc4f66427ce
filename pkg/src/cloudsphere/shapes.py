"""Synthetic target shapes sampled uniformly over their surfaces."""

import numpy as np

from .errors import InvalidArgumentError


def _box_faces(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    faces = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        area = (hi[u] - lo[u]) * (hi[v] - lo[v])
        for value in (lo[axis], hi[axis]):
            faces.append((axis, value, u, v, lo, hi, area))
    return faces


def sample_boxes(boxes, n, seed=0):
    """Area-weighted uniform samples over the surfaces of axis-aligned boxes."""
    rng = np.random.default_rng(seed)
    faces = [f for lo, hi in boxes for f in _box_faces(lo, hi)]
    areas = np.array([f[-1] for f in faces])
    choice = rng.choice(len(faces), size=n, p=areas / areas.sum())
    uv = rng.random((n, 2))
    pts = np.empty((n, 3))
    for i, (axis, value, u, v, lo, hi, _) in enumerate(faces):
        sel = choice == i
        pts[sel, axis] = value
        pts[sel, u] = lo[u] + uv[sel, 0] * (hi[u] - lo[u])
        pts[sel, v] = lo[v] + uv[sel, 1] * (hi[v] - lo[v])
    return pts


def cube_shell(n, seed=0, edge=1.0):
    h = edge / 2
    return sample_boxes([((-h, -h, -h), (h, h, h))], n, seed)


def torus(n, seed=0, major=1.0, minor=0.35):
    # rejection on the area element so samples are uniform over the surface
    rng = np.random.default_rng(seed)
    out = []
    while sum(len(o) for o in out) < n:
        u = rng.uniform(0, 2 * np.pi, 2 * n)
        v = rng.uniform(0, 2 * np.pi, 2 * n)
        keep = rng.uniform(0, major + minor, 2 * n) < major + minor * np.cos(v)
        u, v = u[keep], v[keep]
        ring = major + minor * np.cos(v)
        out.append(np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], 1))
    return np.concatenate(out)[:n]


def cylinder(n, seed=0, radius=0.5, height=1.5):
    rng = np.random.default_rng(seed)
    side = 2 * np.pi * radius * height
    cap = np.pi * radius ** 2
    part = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
    theta = rng.uniform(0, 2 * np.pi, n)
    pts = np.empty((n, 3))
    on_side = part == 0
    pts[on_side, 0] = radius * np.cos(theta[on_side])
    pts[on_side, 1] = radius * np.sin(theta[on_side])
    pts[on_side, 2] = rng.uniform(-height / 2, height / 2, on_side.sum())
    on_cap = ~on_side
    r = radius * np.sqrt(rng.random(on_cap.sum()))
    pts[on_cap, 0] = r * np.cos(theta[on_cap])
    pts[on_cap, 1] = r * np.sin(theta[on_cap])
    pts[on_cap, 2] = np.where(part[on_cap] == 1, height / 2, -height / 2)
    return pts


def l_bracket(n, seed=0):
    return sample_boxes([
        ((0.0, 0.0, 0.0), (1.0, 0.3, 0.3)),
        ((0.0, 0.0, 0.3), (0.3, 0.3, 1.0)),
    ], n, seed)


def chair_boxes(arms=False, leg=0.08):
    """Seat, backrest and four legs (optionally two armrests) as axis-aligned boxes."""
    boxes = [
        ((-0.5, -0.5, 0.0), (0.5, 0.5, 0.1)),       # seat
        ((-0.5, 0.4, 0.1), (0.5, 0.5, 1.0)),        # back
    ]
    for x in (-0.5, 0.5 - leg):
        for y in (-0.5, 0.5 - leg):
            boxes.append(((x, y, -0.8), (x + leg, y + leg, 0.0)))
    if arms:
        for x in (-0.5, 0.5 - leg):
            boxes.append(((x, -0.45, 0.1), (x + leg, -0.35, 0.45)))     # post
            boxes.append(((x, -0.45, 0.45), (x + leg, 0.4, 0.53)))      # rest
    return boxes


def chair(n, seed=0, arms=False):
    return sample_boxes(chair_boxes(arms), n, seed)


SHAPES = {
    "cube": cube_shell,
    "torus": torus,
    "cylinder": cylinder,
    "l_bracket": l_bracket,
    "chair": chair,
    "chair_arms": lambda n, seed=0: chair(n, seed, arms=True),
}


def make_shape(name, n, seed=0):
    try:
        gen = SHAPES[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown synthetic shape {name!r}; choose from {sorted(SHAPES)}") from None
    return gen(n, seed=seed)
