"""Uniform lattice geometry, hole rasterization and discrete integration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, GeometryError, NumericalError, ShapeError

HOLE, EXTERIOR, OUTER_PAD = 1, 0, 2


@dataclass(frozen=True)
class Grid:
    """Box [-L, L]^N sampled with an odd number of points per axis."""

    dimension: int
    points: int
    extent: float

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points - 1)

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dimension

    @property
    def size(self) -> int:
        return self.points ** self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    @property
    def center_index(self) -> int:
        return (self.points - 1) // 2

    @property
    def memory_estimate(self) -> int:
        """Bytes for one float64 field on this grid."""
        return 8 * self.size

    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.points)

    def coordinates(self) -> list:
        """Broadcastable coordinate arrays, one per axis."""
        ax = self.axis()
        out = []
        for k in range(self.dimension):
            shape = [1] * self.dimension
            shape[k] = self.points
            out.append(ax.reshape(shape))
        return out

    def radius_squared(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for c in self.coordinates():
            r2 = r2 + c * c
        return r2

    def radius(self) -> np.ndarray:
        return np.sqrt(self.radius_squared())

    def check(self, values: np.ndarray, name: str = "field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ShapeError(f"{name} has shape {values.shape}, grid expects {self.shape}")
        return values


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar lattice function with an optional time tag."""

    values: np.ndarray
    grid: Grid
    time: float | None = None
    name: str = "field"

    def __post_init__(self):
        v = self.grid.check(self.values, self.name)
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"{self.name} contains non-finite values")
        object.__setattr__(self, "values", v)


def build_grid(dimension: int, points_per_axis: int, extent: float, min_points: int = 17) -> Grid:
    """Validate and build a lattice.

    ``min_points`` may be lowered for dense-oracle grids; physics runs keep
    the default.
    """
    errors = []
    if int(dimension) != dimension or dimension < 1:
        errors.append(f"dimension must be a positive integer, got {dimension}")
    if int(points_per_axis) != points_per_axis or points_per_axis % 2 == 0:
        errors.append(f"points must be odd so the origin is a node, got {points_per_axis}")
    elif points_per_axis < min_points:
        errors.append(f"points must be >= {min_points}, got {points_per_axis}")
    if not extent > 0:
        errors.append(f"extent must be positive, got {extent}")
    if errors:
        raise ConfigurationError("; ".join(errors))
    return Grid(int(dimension), int(points_per_axis), float(extent))


@dataclass(frozen=True)
class Primitive:
    """One hole primitive.

    ``size`` is a radius for ``ball``, per-axis half-widths for ``box`` and
    ``(inner, outer)`` radii for ``shell``.
    """

    shape: str
    center: tuple
    size: tuple

    def __post_init__(self):
        if self.shape not in ("ball", "box", "shell"):
            raise ConfigurationError(f"unknown hole shape {self.shape!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        size = self.size if np.ndim(self.size) else (self.size,)
        object.__setattr__(self, "size", tuple(float(s) for s in size))
        if self.shape == "shell" and not (len(self.size) == 2 and 0 < self.size[0] < self.size[1]):
            raise ConfigurationError(f"shell needs 0 < inner < outer, got {self.size}")
        if any(s <= 0 for s in self.size):
            raise ConfigurationError(f"hole size must be positive, got {self.size}")

    def reach(self) -> np.ndarray:
        """Per-axis half-width of the bounding box."""
        n = len(self.center)
        if self.shape == "ball":
            return np.full(n, self.size[0])
        if self.shape == "shell":
            return np.full(n, self.size[1])
        return np.broadcast_to(np.asarray(self.size), (n,)).astype(float)

    def circumradius(self) -> float:
        """Largest distance from the origin to a point of the primitive."""
        c = np.asarray(self.center)
        if self.shape == "box":
            return float(np.linalg.norm(np.abs(c) + self.reach()))
        return float(np.linalg.norm(c) + self.reach()[0])

    def contains(self, grid: Grid) -> np.ndarray:
        coords = grid.coordinates()
        if len(self.center) != grid.dimension:
            raise ConfigurationError(
                f"hole center {self.center} does not match dimension {grid.dimension}")
        d2 = np.zeros(grid.shape)
        for c, x in zip(self.center, coords):
            d2 = d2 + (x - c) ** 2
        if self.shape == "ball":
            return d2 < self.size[0] ** 2
        if self.shape == "shell":
            return (d2 >= self.size[0] ** 2) & (d2 < self.size[1] ** 2)
        inside = np.ones(grid.shape, dtype=bool)
        for c, x, hw in zip(self.center, coords, self.reach()):
            inside = inside & (np.abs(x - c) < hw)
        return inside


@dataclass(frozen=True)
class HoleSet:
    primitives: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def __len__(self):
        return len(self.primitives)

    def __iter__(self):
        return iter(self.primitives)

    def circumradius(self) -> float:
        return max((p.circumradius() for p in self.primitives), default=0.0)


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Per-node classification plus connected-component labels."""

    grid: Grid
    classes: np.ndarray
    interaction_radius: float
    component_id: np.ndarray | None = None
    unbounded_component_id: int | None = None
    bounded_component_ids: tuple = field(default=())

    @property
    def hole(self) -> np.ndarray:
        return self.classes == HOLE

    @property
    def exterior(self) -> np.ndarray:
        return self.classes == EXTERIOR

    @property
    def pad(self) -> np.ndarray:
        return self.classes == OUTER_PAD

    @property
    def omega(self) -> np.ndarray:
        """Nodes where the equation is solved (everything but the holes)."""
        return self.classes != HOLE

    def component(self, cid: int) -> np.ndarray:
        if self.component_id is None:
            raise GeometryError("component labels not computed; call components() first")
        return (self.component_id == cid) & self.exterior

    def bounded_nodes(self) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=bool)
        for cid in self.bounded_component_ids:
            out |= self.component(cid)
        return out


def rasterize(holes: HoleSet, grid: Grid, support_radius: float) -> DomainMask:
    """Classify nodes into hole, exterior and outer pad."""
    margin = 2.0 * support_radius
    hole = np.zeros(grid.shape, dtype=bool)
    for p in holes:
        lo = np.asarray(p.center) - p.reach()
        hi = np.asarray(p.center) + p.reach()
        if np.any(lo <= -grid.extent + margin) or np.any(hi >= grid.extent - margin):
            raise GeometryError(
                f"{p.shape} at {p.center} violates the {margin:g} margin inside [-{grid.extent:g}, {grid.extent:g}]")
        hole |= p.contains(grid)

    face_distance = np.full(grid.shape, np.inf)
    for x in grid.coordinates():
        face_distance = np.minimum(face_distance, grid.extent - np.abs(x))
    pad = face_distance < support_radius - 1e-12 * grid.spacing

    classes = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    classes[pad] = OUTER_PAD
    classes[hole] = HOLE
    return DomainMask(grid=grid, classes=classes, interaction_radius=float(support_radius))


def _ball_structure(dimension: int, radius_nodes: float, width: int) -> np.ndarray:
    idx = np.indices((2 * width + 1,) * dimension) - width
    return (idx ** 2).sum(axis=0) < radius_nodes ** 2


def components(mask: DomainMask, interaction_radius: float | None = None) -> DomainMask:
    """Label components of the non-hole nodes linked at distance < interaction_radius."""
    grid = mask.grid
    r = mask.interaction_radius if interaction_radius is None else float(interaction_radius)
    rn = r / grid.spacing
    free = mask.classes != HOLE

    local = _ball_structure(grid.dimension, rn, 1)
    labels, count = ndimage.label(free, structure=local)
    if count == 0:
        return DomainMask(grid, mask.classes, r, np.full(grid.shape, -1, dtype=np.int32), None, ())

    # union-find over the short-range labels, merging any pair within reach
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    width = int(math.ceil(rn))
    reach = _ball_structure(grid.dimension, rn, width)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    sizes[0] = 0
    biggest = int(np.argmax(sizes))
    if width > 1 or not np.array_equal(reach, local):
        for lab in range(1, count + 1):
            if lab == biggest:
                continue
            grown = ndimage.binary_dilation(labels == lab, structure=reach)
            for other in np.unique(labels[grown & free]):
                a, b = find(lab), find(int(other))
                if a != b:
                    parent[max(a, b)] = min(a, b)

    roots = np.array([find(i) for i in range(count + 1)])
    merged = roots[labels]
    merged[~free] = 0

    # consecutive ids ordered by first flat index, independent of visit order
    flat = merged.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = [u for _, u in sorted(zip(first, uniq)) if u != 0]
    remap = np.full(count + 1, -1, dtype=np.int32)
    for new, old in enumerate(order):
        remap[old] = new
    cid = remap[merged].astype(np.int32)

    pad_ids = np.unique(cid[mask.pad])
    pad_ids = pad_ids[pad_ids >= 0]
    unbounded = int(pad_ids[0]) if len(pad_ids) else None
    if len(pad_ids) > 1:
        raise GeometryError("outer pad split into several components")
    bounded = tuple(int(i) for i in range(len(order)) if i != unbounded)
    return DomainMask(grid, mask.classes, r, cid, unbounded, bounded)


def build_mask(holes: HoleSet, grid: Grid, support_radius: float) -> DomainMask:
    return components(rasterize(holes, grid, support_radius))


def integrate(f: np.ndarray, grid: Grid) -> float:
    """h^N times the compensated sum of ``f``."""
    f = grid.check(f)
    return grid.cell_volume * math.fsum(f.ravel().tolist())


def weighted_mass(u: np.ndarray, w: np.ndarray, grid: Grid) -> float:
    u = grid.check(u, "u")
    w = grid.check(w, "w")
    return grid.cell_volume * math.fsum((u * w).ravel().tolist())


class RadialProfile(NamedTuple):
    r_mid: np.ndarray
    r_mean: np.ndarray
    mean: np.ndarray
    max: np.ndarray
    count: np.ndarray

    def rows(self) -> list:
        return list(zip(self.r_mid.tolist(), self.mean.tolist(), self.max.tolist(),
                        self.count.tolist()))

    def select(self, r_lo: float, r_hi: float) -> "RadialProfile":
        keep = (self.r_mid >= r_lo) & (self.r_mid <= r_hi)
        return RadialProfile(*(a[keep] for a in self))


def radial_profile(f: np.ndarray, grid: Grid, bin_width: float,
                   where: np.ndarray | None = None) -> RadialProfile:
    """Bin ``f`` by |x|; ``where`` restricts the nodes that contribute."""
    if bin_width < grid.spacing * (1 - 1e-12):
        raise ConfigurationError(f"bin_width {bin_width} smaller than spacing {grid.spacing}")
    f = grid.check(f)
    r = grid.radius()
    sel = np.ones(grid.shape, dtype=bool) if where is None else np.asarray(where, dtype=bool)
    rv, fv = r[sel], f[sel]
    idx = np.floor(rv / bin_width).astype(np.int64)
    nb = int(idx.max()) + 1 if idx.size else 0
    count = np.bincount(idx, minlength=nb)
    total = np.bincount(idx, weights=fv, minlength=nb)
    rsum = np.bincount(idx, weights=rv, minlength=nb)
    keep = count > 0
    k = np.nonzero(keep)[0]
    fmax = np.asarray(ndimage.maximum(fv, labels=idx, index=k), dtype=float)
    return RadialProfile(
        r_mid=(k + 0.5) * bin_width,
        r_mean=rsum[keep] / count[keep],
        mean=total[keep] / count[keep],
        max=fmax,
        count=count[keep],
    )


def parse_holes(specs: Sequence[dict]) -> HoleSet:
    return HoleSet(tuple(Primitive(s["shape"], tuple(s["center"]), s["size"]) for s in specs))
