"""Parametric surface primitives with area-uniform point sampling.

These stand in for CAD meshes: each primitive samples points uniformly by
surface area, then the cloud is scaled into the unit ball about the
primitive's own center.
"""

from dataclasses import dataclass, field

import numpy as np

SHAPE_KINDS = (
    "sphere",
    "cube",
    "cylinder",
    "cone",
    "torus",
    "pyramid",
    "ellipsoid",
    "disk",
    "capsule",
    "cross",
)

DEFAULT_PARAMS = {
    "sphere": {"radius": 1.0},
    "cube": {"side": 2.0},
    "cylinder": {"radius": 0.5, "height": 2.0},
    "cone": {"radius": 1.0, "height": 1.5},
    "torus": {"major": 1.0, "minor": 0.3},
    "pyramid": {"base": 2.0, "height": 1.5},
    "ellipsoid": {"a": 1.0, "b": 0.6, "c": 0.35},
    "disk": {"radius": 1.0},
    "capsule": {"radius": 0.35, "length": 1.5},
    "cross": {"length": 2.0, "width": 0.3},
}


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def resolved(self):
        if self.kind not in DEFAULT_PARAMS:
            raise ValueError(f"unknown shape {self.kind!r}; expected one of {SHAPE_KINDS}")
        merged = dict(DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.params)
        return merged


def _sphere(rng, n, radius):
    v = rng.normal(size=(n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def _disk_points(rng, n, radius):
    r = radius * np.sqrt(rng.random(n))
    phi = rng.random(n) * 2 * np.pi
    return r * np.cos(phi), r * np.sin(phi)


def _choose(rng, n, areas):
    areas = np.asarray(areas, dtype=np.float64)
    return rng.choice(len(areas), size=n, p=areas / areas.sum())


def _box(rng, n, size):
    """Surface of an axis-aligned box with edge lengths ``size`` centered at 0."""
    sx, sy, sz = size
    areas = [sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy]
    face = _choose(rng, n, areas)
    pts = (rng.random((n, 3)) - 0.5) * np.asarray(size)
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts[np.arange(n), axis] = sign * np.asarray(size)[axis] / 2
    return pts


def _cylinder(rng, n, radius, height):
    part = _choose(rng, n, [2 * np.pi * radius * height, np.pi * radius**2, np.pi * radius**2])
    pts = np.empty((n, 3))
    phi = rng.random(n) * 2 * np.pi
    side = part == 0
    pts[side, 0] = radius * np.cos(phi[side])
    pts[side, 1] = radius * np.sin(phi[side])
    pts[side, 2] = (rng.random(side.sum()) - 0.5) * height
    for p, z in ((1, -height / 2), (2, height / 2)):
        m = part == p
        x, y = _disk_points(rng, m.sum(), radius)
        pts[m] = np.column_stack([x, y, np.full(m.sum(), z)])
    return pts


def _cone(rng, n, radius, height):
    slant = np.hypot(radius, height)
    part = _choose(rng, n, [np.pi * radius * slant, np.pi * radius**2])
    pts = np.empty((n, 3))
    lat = part == 0
    # distance from apex grows with sqrt(u) for area-uniform lateral sampling
    t = np.sqrt(rng.random(lat.sum()))
    phi = rng.random(lat.sum()) * 2 * np.pi
    pts[lat] = np.column_stack(
        [t * radius * np.cos(phi), t * radius * np.sin(phi), height / 2 - t * height]
    )
    base = ~lat
    x, y = _disk_points(rng, base.sum(), radius)
    pts[base] = np.column_stack([x, y, np.full(base.sum(), -height / 2)])
    return pts


def _torus(rng, n, major, minor):
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        theta = rng.random(m) * 2 * np.pi
        phi = rng.random(m) * 2 * np.pi
        keep = rng.random(m) * (major + minor) < major + minor * np.cos(phi)
        theta, phi = theta[keep], phi[keep]
        ring = major + minor * np.cos(phi)
        pts = np.column_stack([ring * np.cos(theta), ring * np.sin(theta), minor * np.sin(phi)])
        out = np.vstack([out, pts])
    return out[:n]


def _triangles(rng, n, tris):
    tris = np.asarray(tris, dtype=np.float64)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    which = _choose(rng, n, areas)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    return tris[which, 0] + u[:, None] * e1[which] + v[:, None] * e2[which]


def _pyramid(rng, n, base, height):
    h = base / 2
    a, b, c, d = [(-h, -h, -height / 2), (h, -h, -height / 2), (h, h, -height / 2), (-h, h, -height / 2)]
    apex = (0.0, 0.0, height / 2)
    tris = [(a, b, c), (a, c, d), (a, b, apex), (b, c, apex), (c, d, apex), (d, a, apex)]
    return _triangles(rng, n, tris)


def _ellipsoid(rng, n, a, b, c):
    axes = np.array([a, b, c])
    # area element of the scaled sphere relative to its largest value
    weights = np.array([b * c, a * c, a * b])
    wmax = weights.max()
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        u = _sphere(rng, m, 1.0)
        dens = np.sqrt(((u * weights) ** 2).sum(axis=1))
        keep = rng.random(m) * wmax < dens
        out = np.vstack([out, u[keep] * axes])
    return out[:n]


def _disk(rng, n, radius):
    x, y = _disk_points(rng, n, radius)
    return np.column_stack([x, y, np.zeros(n)])


def _capsule(rng, n, radius, length):
    part = _choose(rng, n, [2 * np.pi * radius * length, 4 * np.pi * radius**2])
    pts = np.empty((n, 3))
    side = part == 0
    phi = rng.random(side.sum()) * 2 * np.pi
    pts[side] = np.column_stack(
        [radius * np.cos(phi), radius * np.sin(phi), (rng.random(side.sum()) - 0.5) * length]
    )
    caps = ~side
    s = _sphere(rng, caps.sum(), radius)
    s[:, 2] += np.where(s[:, 2] >= 0, length / 2, -length / 2)
    pts[caps] = s
    return pts


def _cross(rng, n, length, width):
    """Two orthogonal bars in the xy-plane; points inside the other bar are dropped."""
    size_x = np.array([length, width, width])
    size_y = np.array([width, length, width])
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        half = m // 2
        pa = _box(rng, half, size_x)
        pb = _box(rng, m - half, size_y)
        inside_b = np.all(np.abs(pa) < size_y / 2, axis=1)
        inside_a = np.all(np.abs(pb) < size_x / 2, axis=1)
        pts = np.vstack([pa[~inside_b], pb[~inside_a]])
        out = np.vstack([out, pts[rng.permutation(len(pts))]])
    return out[:n]


_SAMPLERS = {
    "sphere": lambda rng, n, p: _sphere(rng, n, p["radius"]),
    "cube": lambda rng, n, p: _box(rng, n, (p["side"],) * 3),
    "cylinder": lambda rng, n, p: _cylinder(rng, n, p["radius"], p["height"]),
    "cone": lambda rng, n, p: _cone(rng, n, p["radius"], p["height"]),
    "torus": lambda rng, n, p: _torus(rng, n, p["major"], p["minor"]),
    "pyramid": lambda rng, n, p: _pyramid(rng, n, p["base"], p["height"]),
    "ellipsoid": lambda rng, n, p: _ellipsoid(rng, n, p["a"], p["b"], p["c"]),
    "disk": lambda rng, n, p: _disk(rng, n, p["radius"]),
    "capsule": lambda rng, n, p: _capsule(rng, n, p["radius"], p["length"]),
    "cross": lambda rng, n, p: _cross(rng, n, p["length"], p["width"]),
}


def sample_shape(shape, n, seed):
    """Sample ``n`` area-uniform surface points, scaled so the farthest has norm 1.

    ``shape`` is a :class:`ShapeSpec` or a bare kind name. The primitive is
    built around its own center and only scaled, so a centered sphere keeps
    every point at exactly unit norm.
    """
    if isinstance(shape, str):
        shape = ShapeSpec(shape)
    if n < 1:
        raise ValueError("n must be at least 1")
    params = shape.resolved()
    rng = np.random.default_rng(seed)
    pts = _SAMPLERS[shape.kind](rng, int(n), params)
    scale = np.sqrt((pts**2).sum(axis=1)).max()
    if not scale > 0:
        raise ValueError("sampled shape has zero extent")
    return pts / scale


def jittered_spec(kind, rng, amount=0.2):
    """A ShapeSpec with every default parameter scaled by an independent factor in 1 +/- amount."""
    base = DEFAULT_PARAMS[kind]
    factors = rng.uniform(1 - amount, 1 + amount, size=len(base))
    return ShapeSpec(kind, {k: v * f for (k, v), f in zip(sorted(base.items()), factors)})
