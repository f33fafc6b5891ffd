"""Planar domains, computational lattices and distance to the boundary.

Shapes expose a signed distance ``sdf`` (negative inside) and its negation
``depth``.  Interior nodes of a :class:`Grid` are lattice points with
``depth > offset``; for every interior node the four axis arms record where
the segment to the neighbouring node leaves the (possibly eroded) domain, so
stencils can place boundary data at the true crossing point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

EXTERIOR, BAND, INTERIOR = 0, 1, 2
# arm order: +x, -x, +y, -y
DIRECTIONS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts.reshape(-1, 2)


class Shape:
    """Common interface of the domain catalog."""

    kind: str = "shape"

    def sdf(self, points) -> np.ndarray:
        raise NotImplementedError

    def depth(self, points) -> np.ndarray:
        return -self.sdf(points)

    def contains(self, points) -> np.ndarray:
        return self.sdf(points) < 0.0

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def scaled(self, factor: float) -> "Shape":
        raise NotImplementedError

    def boundary_length(self) -> float:
        raise NotImplementedError

    def sample_boundary(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Disk(Shape):
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    kind = "disk"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ConfigError(f"disk radius must be positive, got {self.radius}")

    def sdf(self, points):
        p = _as_points(points) - np.asarray(self.center)
        return np.hypot(p[:, 0], p[:, 1]) - self.radius

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def scaled(self, factor):
        return Disk(tuple(factor * np.asarray(self.center)), factor * self.radius)

    def boundary_length(self):
        return 2 * np.pi * self.radius

    def sample_boundary(self, n, rng):
        t = rng.uniform(0, 2 * np.pi, n)
        return np.asarray(self.center) + self.radius * np.column_stack([np.cos(t), np.sin(t)])

    def to_dict(self):
        return {"shape": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Annulus(Shape):
    center: tuple = (0.0, 0.0)
    r_inner: float = 0.5
    r_outer: float = 1.0
    kind = "annulus"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not 0 < self.r_inner < self.r_outer:
            raise ConfigError("annulus needs 0 < r_inner < r_outer, got "
                              f"{self.r_inner}, {self.r_outer}")

    def sdf(self, points):
        p = _as_points(points) - np.asarray(self.center)
        rho = np.hypot(p[:, 0], p[:, 1])
        return np.maximum(rho - self.r_outer, self.r_inner - rho)

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.r_outer, c + self.r_outer

    def scaled(self, factor):
        return Annulus(tuple(factor * np.asarray(self.center)), factor * self.r_inner,
                       factor * self.r_outer)

    def boundary_length(self):
        return 2 * np.pi * (self.r_inner + self.r_outer)

    def sample_boundary(self, n, rng):
        t = rng.uniform(0, 2 * np.pi, n)
        inner = rng.uniform(size=n) < self.r_inner / (self.r_inner + self.r_outer)
        r = np.where(inner, self.r_inner, self.r_outer)
        return np.asarray(self.center) + r[:, None] * np.column_stack([np.cos(t), np.sin(t)])

    def to_dict(self):
        return {"shape": "annulus", "center": list(self.center),
                "r_inner": self.r_inner, "r_outer": self.r_outer}


@dataclass(frozen=True)
class Rectangle(Shape):
    lo: tuple = (0.0, 0.0)
    hi: tuple = (1.0, 1.0)
    kind = "rectangle"

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in self.hi))
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ConfigError(f"rectangle needs lo < hi componentwise, got {self.lo}, {self.hi}")

    def sdf(self, points):
        p = _as_points(points)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        q = np.abs(p - 0.5 * (lo + hi)) - 0.5 * (hi - lo)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(q.max(axis=1), 0.0)

    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def scaled(self, factor):
        return Rectangle(tuple(factor * np.asarray(self.lo)), tuple(factor * np.asarray(self.hi)))

    def _polygon(self):
        (x0, y0), (x1, y1) = self.lo, self.hi
        return ConvexPolygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    def boundary_length(self):
        return 2 * sum(b - a for a, b in zip(self.lo, self.hi))

    def sample_boundary(self, n, rng):
        return self._polygon().sample_boundary(n, rng)

    def to_dict(self):
        return {"shape": "rectangle", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class ConvexPolygon(Shape):
    vertices: tuple = ()
    kind = "convex_polygon"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ConfigError("convex_polygon needs at least three 2-D vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        turning = np.arctan2(cross, np.einsum("ij,ij->i", e, np.roll(e, -1, axis=0))).sum()
        if np.any(cross <= 0) or not np.isclose(turning, 2 * np.pi):
            raise ConfigError("convex_polygon vertices must form a strictly convex "
                              "counterclockwise loop")
        object.__setattr__(self, "vertices", tuple(tuple(map(float, p)) for p in v))

    @property
    def _v(self):
        return np.asarray(self.vertices)

    def sdf(self, points):
        p = _as_points(points)
        a = self._v
        b = np.roll(a, -1, axis=0)
        e = b - a
        # distance to each edge segment
        w = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pek,ek->pe", w, e) / np.einsum("ek,ek->e", e, e), 0.0, 1.0)
        diff = w - t[..., None] * e[None]
        dist = np.sqrt(np.einsum("pek,pek->pe", diff, diff)).min(axis=1)
        # inside iff left of every edge
        side = e[None, :, 0] * w[..., 1] - e[None, :, 1] * w[..., 0]
        inside = np.all(side > 0, axis=1)
        return np.where(inside, -dist, dist)

    def bbox(self):
        return self._v.min(axis=0), self._v.max(axis=0)

    def scaled(self, factor):
        return ConvexPolygon(tuple(map(tuple, factor * self._v)))

    def boundary_length(self):
        return float(np.linalg.norm(np.roll(self._v, -1, axis=0) - self._v, axis=1).sum())

    def sample_boundary(self, n, rng):
        a = self._v
        e = np.roll(a, -1, axis=0) - a
        lengths = np.linalg.norm(e, axis=1)
        s = rng.uniform(0, lengths.sum(), n)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(a) - 1)
        t = (s - cum[k]) / lengths[k]
        return a[k] + t[:, None] * e[k]

    def to_dict(self):
        return {"shape": "convex_polygon", "vertices": [list(p) for p in self.vertices]}


@dataclass(frozen=True)
class Difference(Shape):
    """Outer primitive minus pairwise disjoint disks lying strictly inside it."""

    outer: Shape = field(default_factory=Disk)
    holes: tuple = ()
    kind = "difference"

    def __post_init__(self):
        holes = tuple(self.holes)
        object.__setattr__(self, "holes", holes)
        if isinstance(self.outer, Difference):
            raise ConfigError("difference outer shape must be a primitive")
        for hole in holes:
            if not isinstance(hole, Disk):
                raise ConfigError("excluded regions of a difference must be disks")
            if not self.outer.depth(hole.center)[0] > hole.radius:
                raise ConfigError(f"excluded disk {hole} is not strictly inside the outer shape")
        for i, a in enumerate(holes):
            for b in holes[i + 1:]:
                if np.hypot(*np.subtract(a.center, b.center)) <= a.radius + b.radius:
                    raise ConfigError("excluded disks of a difference must be pairwise disjoint")

    def sdf(self, points):
        s = self.outer.sdf(points)
        for hole in self.holes:
            s = np.maximum(s, -hole.sdf(points))
        return s

    def bbox(self):
        return self.outer.bbox()

    def scaled(self, factor):
        return Difference(self.outer.scaled(factor), tuple(h.scaled(factor) for h in self.holes))

    def boundary_length(self):
        return self.outer.boundary_length() + sum(h.boundary_length() for h in self.holes)

    def sample_boundary(self, n, rng):
        parts = [self.outer, *self.holes]
        w = np.array([p.boundary_length() for p in parts])
        which = rng.choice(len(parts), size=n, p=w / w.sum())
        out = np.empty((n, 2))
        for k, part in enumerate(parts):
            sel = which == k
            out[sel] = part.sample_boundary(int(sel.sum()), rng)
        return out

    def to_dict(self):
        return {"shape": "difference", "outer": self.outer.to_dict(),
                "holes": [h.to_dict() for h in self.holes]}


DomainSpec = Shape


def domain_from_dict(spec: dict) -> Shape:
    """Build a shape from its JSON description (see the CLI config format)."""
    kind = spec.get("shape")
    if kind == "disk":
        return Disk(tuple(spec.get("center", (0.0, 0.0))), spec["radius"])
    if kind == "annulus":
        return Annulus(tuple(spec.get("center", (0.0, 0.0))), spec["r_inner"], spec["r_outer"])
    if kind == "rectangle":
        return Rectangle(tuple(spec["lo"]), tuple(spec["hi"]))
    if kind == "convex_polygon":
        return ConvexPolygon(tuple(map(tuple, spec["vertices"])))
    if kind == "difference":
        return Difference(domain_from_dict(spec["outer"]),
                          tuple(domain_from_dict(h) for h in spec.get("holes", [])))
    raise ConfigError(f"unknown shape {kind!r}")


def distance(domain: Shape, point) -> np.ndarray | float:
    """Euclidean distance to the boundary, clamped to 0 outside the domain."""
    scalar = np.ndim(point) == 1
    d = np.maximum(domain.depth(point), 0.0)
    return float(d[0]) if scalar else d


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distance to the boundary of the (eroded) domain on every lattice node.

    Non-interior nodes carry 0.
    """

    values: np.ndarray
    nearest: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice ``x = h*i``, ``y = h*j`` restricted to a domain.

    Attributes mirror the classification: ``node_class`` and ``index`` are
    ``(ny, nx)`` arrays; per interior row, ``nbr[k, a]`` is the interior row of
    the neighbour along arm ``a`` (or -1) and ``theta[k, a]`` is the arm length
    in units of h.  Boundary data live in *slots*: the arm crossing points
    followed by the band nodes.
    """

    domain: Shape
    h: float
    offset: float
    i0: int
    j0: int
    nx: int
    ny: int
    node_class: np.ndarray
    index: np.ndarray
    points: np.ndarray
    ij: np.ndarray
    nbr: np.ndarray
    theta: np.ndarray
    arm_slot: np.ndarray
    band_slot: np.ndarray
    slot_points: np.ndarray
    distance: DistanceField

    @property
    def n_interior(self) -> int:
        return len(self.points)

    @property
    def n_slots(self) -> int:
        return len(self.slot_points)

    @property
    def d(self) -> np.ndarray:
        """Distance to the boundary at interior nodes."""
        return self.distance.values[self.ij[:, 1], self.ij[:, 0]]

    @property
    def slot_d(self) -> np.ndarray:
        return np.zeros(self.n_slots)

    def lattice_coords(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.h * (self.i0 + np.arange(self.nx)),
                self.h * (self.j0 + np.arange(self.ny)))

    def lattice_keys(self) -> np.ndarray:
        """Absolute lattice index pairs of interior nodes (comparable across grids)."""
        return self.ij + np.array([self.i0, self.j0])

    def interior_width_nodes(self) -> int:
        """Smallest count of interior nodes along a lattice row or column."""
        inside = self.node_class == INTERIOR
        rows = inside.sum(axis=1)
        cols = inside.sum(axis=0)
        return int(min(rows[rows > 0].max(), cols[cols > 0].max()))


def _crossings(depth_fn, start, direction, h, offset, iters=60):
    """Arm fraction t in (0, 1] where depth - offset changes sign."""
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = depth_fn(start + (mid * h)[:, None] * direction) > offset
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def build_grid(domain: Shape, h: float, offset: float = 0.0) -> Grid:
    """Classify lattice nodes of spacing ``h`` for ``{x : d(x) > offset}``."""
    if not h > 0:
        raise ConfigError(f"grid spacing must be positive, got {h}")
    if offset < 0:
        raise ConfigError(f"offset must be nonnegative, got {offset}")
    lo, hi = domain.bbox()
    i0, j0 = int(np.floor(lo[0] / h)) - 1, int(np.floor(lo[1] / h)) - 1
    i1, j1 = int(np.ceil(hi[0] / h)) + 1, int(np.ceil(hi[1] / h)) + 1
    nx, ny = i1 - i0 + 1, j1 - j0 + 1
    xs = h * (i0 + np.arange(nx))
    ys = h * (j0 + np.arange(ny))
    X, Y = np.meshgrid(xs, ys)
    depth = domain.depth(np.column_stack([X.ravel(), Y.ravel()])).reshape(ny, nx)
    inside = depth > offset
    if not inside.any():
        raise ConfigError(f"no interior nodes for spacing h={h} and offset={offset}")

    node_class = np.zeros((ny, nx), dtype=np.int8)
    padded = np.pad(inside, 1)
    near = np.zeros_like(inside)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            near |= padded[1 + dj:1 + dj + ny, 1 + di:1 + di + nx]
    node_class[near & ~inside] = BAND
    node_class[inside] = INTERIOR

    jj, ii = np.nonzero(inside)
    n = len(ii)
    index = -np.ones((ny, nx), dtype=np.int64)
    index[jj, ii] = np.arange(n)
    points = np.column_stack([xs[ii], ys[jj]])

    nbr = -np.ones((n, 4), dtype=np.int64)
    theta = np.ones((n, 4))
    arm_slot = -np.ones((n, 4), dtype=np.int64)
    crossing_points = []
    n_cross = 0
    for a, (di, dj) in enumerate(DIRECTIONS):
        nb = index[jj + dj, ii + di]
        nbr[:, a] = nb
        cut = nb < 0
        if cut.any():
            step = np.array([di, dj], dtype=float)
            t = _crossings(domain.depth, points[cut], step, h, offset)
            theta[cut, a] = t
            arm_slot[cut, a] = n_cross + np.arange(cut.sum())
            crossing_points.append(points[cut] + (t * h)[:, None] * step)
            n_cross += int(cut.sum())

    bj, bi = np.nonzero(node_class == BAND)
    band_slot = -np.ones((ny, nx), dtype=np.int64)
    band_slot[bj, bi] = n_cross + np.arange(len(bi))
    slot_points = np.vstack(crossing_points + [np.column_stack([xs[bi], ys[bj]])])

    dvals = np.where(inside, depth - offset, 0.0)
    return Grid(domain=domain, h=float(h), offset=float(offset), i0=i0, j0=j0, nx=nx, ny=ny,
                node_class=node_class, index=index, points=points,
                ij=np.column_stack([ii, jj]), nbr=nbr, theta=theta, arm_slot=arm_slot,
                band_slot=band_slot, slot_points=slot_points,
                distance=DistanceField(dvals))


@dataclass
class ExteriorBallReport:
    status: str  # "holds" | "fails" | "inconclusive"
    worst_ratio: float
    witness_point: tuple
    witness_radius: float
    n_samples: int

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def _best_exterior_ratio(domain: Shape, x: np.ndarray, r: float, n_ang: int, n_rad: int) -> float:
    """Largest rho/r over balls B_rho(y) inside B_r(x) and outside the closed domain."""
    ang = np.linspace(0, 2 * np.pi, n_ang, endpoint=False)
    rad = np.linspace(0, 1, n_rad + 1)[1:]
    A, R = np.meshgrid(ang, rad)
    y = x + r * np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()])
    rho = np.minimum(domain.sdf(y), r * (1 - R.ravel()))
    k = int(np.argmax(rho))
    # local refinement around the coarse optimum
    a0, t0 = A.ravel()[k], R.ravel()[k]
    da, dt = 2 * np.pi / n_ang, 1.0 / n_rad
    fa = a0 + np.linspace(-da, da, 21)
    ft = np.clip(t0 + np.linspace(-dt, dt, 21), 0, 1)
    FA, FT = np.meshgrid(fa, ft)
    y2 = x + r * np.column_stack([(FT * np.cos(FA)).ravel(), (FT * np.sin(FA)).ravel()])
    rho2 = np.minimum(domain.sdf(y2), r * (1 - FT.ravel()))
    return max(rho.max(), rho2.max()) / r


def check_exterior_ball(domain: Shape, delta1: float, r1: float, n_samples: int = 400,
                        seed: int = 0, resolution: float = 0.01) -> ExteriorBallReport:
    """Randomized search for exterior balls of radius ``delta1 * r`` in ``B_r(x)``.

    Boundary points and radii ``r < r1`` (log-uniform over three decades) are
    sampled; for each pair the best feasible ratio is found by a polar search.
    ``resolution`` is the search accuracy: ratios within it below ``delta1``
    make the outcome inconclusive rather than a failure.
    """
    if not 0 < delta1 < 1:
        raise ConfigError(f"delta1 must lie in (0, 1), got {delta1}")
    if not r1 > 0:
        raise ConfigError(f"r1 must be positive, got {r1}")
    rng = np.random.default_rng(seed)
    xs = domain.sample_boundary(n_samples, rng)
    rs = r1 * 10.0 ** rng.uniform(-3, 0, n_samples)
    worst, witness = np.inf, (None, None)
    for x, r in zip(xs, rs):
        ratio = _best_exterior_ratio(domain, x, r, 64, 16)
        if ratio < worst:
            worst, witness = ratio, (tuple(map(float, x)), float(r))
    if worst >= delta1:
        status = "holds"
    elif worst < delta1 - resolution:
        status = "fails"
    else:
        status = "inconclusive"
    return ExteriorBallReport(status, float(worst), witness[0], witness[1], n_samples)
