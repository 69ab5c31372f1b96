"""Planar pose algebra, convex polygon footprints, and log-polar cell grids.

Every other module works in terms of the immutable value types defined here.
Conventions that the whole package relies on:

* angles are normalized to the half-open interval [-pi, pi),
* all grid bins are half-open [lo, hi) with the lower edge inclusive,
* polygons are strictly convex and counter-clockwise,
* boundary contact counts as overlap unless ``strict=True`` is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np

TAU = math.tau

Cell = tuple[int, int, int]


class GridMismatchError(ValueError):
    """Raised when two cell sets live on different grid specs."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    wrapped = (theta + math.pi) % TAU - math.pi
    if wrapped >= math.pi:  # float modulo can land exactly on the upper edge
        wrapped -= TAU
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """A planar pose (x, y in meters, theta in radians, normalized)."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"pose coordinates must be finite, got {self}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


IDENTITY = Pose2(0.0, 0.0, 0.0)


def se2_compose(a: Pose2, b: Pose2) -> Pose2:
    """Compose two poses: the frame of ``b`` is expressed relative to ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def se2_inverse(a: Pose2) -> Pose2:
    """Inverse pose, so that se2_compose(se2_inverse(a), a) is the identity."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-(c * a.x + s * a.y), -(-s * a.x + c * a.y), -a.theta)


def se2_relative(anchor: Pose2, world: Pose2) -> Pose2:
    """Express ``world`` in the frame anchored at ``anchor``."""
    return se2_compose(se2_inverse(anchor), world)


def se2_apply(pose: Pose2, x: float, y: float) -> tuple[float, float]:
    """Map a point from the pose's local frame into the parent frame."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return (pose.x + c * x - s * y, pose.y + s * x + c * y)


@dataclass(frozen=True)
class Footprint:
    """Strictly convex CCW polygon, vertices in meters in the local frame."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise ValueError("footprint needs at least 3 vertices")
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross <= 0.0:
                raise ValueError("footprint must be strictly convex and CCW")
        if self.area() <= 0.0:
            raise ValueError("footprint must have nonzero area")

    @classmethod
    def from_box(cls, length: float, width: float) -> "Footprint":
        """Axis-aligned box centered at the origin, length along +x."""
        hl, hw = length / 2.0, width / 2.0
        return cls(((hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)))

    @classmethod
    def regular(cls, n: int, radius: float) -> "Footprint":
        pts = tuple(
            (radius * math.cos(TAU * i / n), radius * math.sin(TAU * i / n)) for i in range(n)
        )
        return cls(pts)

    def area(self) -> float:
        verts = self.vertices
        acc = 0.0
        for i in range(len(verts)):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % len(verts)]
            acc += x0 * y1 - x1 * y0
        return acc / 2.0

    def radius(self) -> float:
        """Circumscribed radius around the local origin."""
        return max(math.hypot(x, y) for x, y in self.vertices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)

    def transformed(self, pose: Pose2) -> np.ndarray:
        """Vertices placed at ``pose``, as an (n, 2) array."""
        return transform_polygon(pose, self.as_array())

    def contains(self, x: float, y: float, include_boundary: bool = True) -> bool:
        verts = self.vertices
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
            if include_boundary:
                if cross < 0.0:
                    return False
            elif cross <= 0.0:
                return False
        return True


def transform_polygon(pose: Pose2, verts: np.ndarray) -> np.ndarray:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    rot = np.array([[c, -s], [s, c]])
    return verts @ rot.T + np.array([pose.x, pose.y])


def _edge_normals(verts: np.ndarray) -> np.ndarray:
    edges = np.roll(verts, -1, axis=0) - verts
    return np.stack([edges[:, 1], -edges[:, 0]], axis=1)


def sat_overlap(poly_a: np.ndarray, poly_b: np.ndarray, strict: bool = False) -> bool:
    """Separating-axis test for two convex polygons given as (n, 2) arrays.

    With ``strict=False`` boundary contact counts as overlap; with
    ``strict=True`` only interior intersection does.
    """
    for axes_src in (poly_a, poly_b):
        axes = _edge_normals(axes_src)
        proj_a = poly_a @ axes.T
        proj_b = poly_b @ axes.T
        lo_a, hi_a = proj_a.min(axis=0), proj_a.max(axis=0)
        lo_b, hi_b = proj_b.min(axis=0), proj_b.max(axis=0)
        if strict:
            if np.any(hi_a <= lo_b) or np.any(hi_b <= lo_a):
                return False
        else:
            if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
                return False
    return True


def footprints_overlap(
    f1: Footprint, pose1: Pose2, f2: Footprint, pose2: Pose2, strict: bool = False
) -> bool:
    """True iff the two placed footprints intersect (separating-axis test)."""
    return sat_overlap(f1.transformed(pose1), f2.transformed(pose2), strict=strict)


def sat_overlap_many(poly: np.ndarray, others: np.ndarray, strict: bool = False) -> np.ndarray:
    """Vectorized SAT: one (m, 2) polygon against a batch of (n, k, 2) polygons.

    Returns a boolean mask of length n. All polygons must be convex; the batch
    must share a vertex count.
    """
    if others.ndim != 3:
        raise ValueError("others must have shape (n, k, 2)")
    n = others.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)

    axes_a = _edge_normals(poly)  # (m, 2)
    proj_aa = poly @ axes_a.T  # (m_verts, m_axes)
    lo_aa, hi_aa = proj_aa.min(axis=0), proj_aa.max(axis=0)
    proj_ba = np.einsum("nkj,aj->nka", others, axes_a)
    lo_ba, hi_ba = proj_ba.min(axis=1), proj_ba.max(axis=1)  # (n, m_axes)
    if strict:
        sep_a = np.any((hi_aa[None, :] <= lo_ba) | (hi_ba <= lo_aa[None, :]), axis=1)
    else:
        sep_a = np.any((hi_aa[None, :] < lo_ba) | (hi_ba < lo_aa[None, :]), axis=1)

    edges = np.roll(others, -1, axis=1) - others
    axes_b = np.stack([edges[..., 1], -edges[..., 0]], axis=2)  # (n, k, 2)
    proj_bb = np.einsum("nvj,naj->nva", others, axes_b)
    lo_bb, hi_bb = proj_bb.min(axis=1), proj_bb.max(axis=1)  # (n, k)
    proj_ab = np.einsum("vj,naj->nva", poly, axes_b)
    lo_ab, hi_ab = proj_ab.min(axis=1), proj_ab.max(axis=1)  # (n, k)
    if strict:
        sep_b = np.any((hi_ab <= lo_bb) | (hi_bb <= lo_ab), axis=1)
    else:
        sep_b = np.any((hi_ab < lo_bb) | (hi_bb < lo_ab), axis=1)

    return ~(sep_a | sep_b)


@dataclass(frozen=True)
class PolarGridSpec:
    """Log-polar grid with orientation bins.

    Radial edges are log-spaced between r_min and r_max, azimuth bins
    partition [-pi, pi) uniformly, and theta intervals partition the relative
    heading range [-pi, pi) uniformly.
    """

    r_min: float
    r_max: float
    n_radial: int
    n_angular: int
    n_theta: int

    def __post_init__(self) -> None:
        if not (0.0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if min(self.n_radial, self.n_angular, self.n_theta) < 1:
            raise ValueError("grid bin counts must be positive")

    @cached_property
    def radial_edges(self) -> tuple[float, ...]:
        ratio = self.r_max / self.r_min
        return tuple(
            self.r_min * ratio ** (i / self.n_radial) for i in range(self.n_radial + 1)
        )

    @property
    def n_cells(self) -> int:
        return self.n_radial * self.n_angular * self.n_theta

    def key(self) -> tuple:
        return (self.r_min, self.r_max, self.n_radial, self.n_angular, self.n_theta)

    def radial_index(self, r: float) -> Optional[int]:
        if r < self.r_min or r >= self.r_max:
            return None
        u = math.log(r / self.r_min) / math.log(self.r_max / self.r_min)
        return min(int(u * self.n_radial), self.n_radial - 1)

    def angular_index(self, azimuth: float) -> int:
        az = wrap_angle(azimuth)
        idx = int((az + math.pi) / TAU * self.n_angular)
        return min(idx, self.n_angular - 1)

    def theta_index(self, theta: float) -> int:
        th = wrap_angle(theta)
        idx = int((th + math.pi) / TAU * self.n_theta)
        return min(idx, self.n_theta - 1)

    def cell_of(self, q: Pose2) -> Optional[Cell]:
        """Cell containing the pose, or None when the radius is out of range."""
        r = math.hypot(q.x, q.y)
        ri = self.radial_index(r)
        if ri is None:
            return None
        az = math.atan2(q.y, q.x) if r > 0.0 else 0.0
        return (ri, self.angular_index(az), self.theta_index(q.theta))

    def cell_of_clamped(self, q: Pose2) -> Cell:
        """Like cell_of but clamping out-of-range radii to the edge bins."""
        r = math.hypot(q.x, q.y)
        ri = self.radial_index(r)
        if ri is None:
            ri = 0 if r < self.r_min else self.n_radial - 1
        az = math.atan2(q.y, q.x) if r > 0.0 else 0.0
        return (ri, self.angular_index(az), self.theta_index(q.theta))

    def azimuth_interval(self, ai: int) -> tuple[float, float]:
        width = TAU / self.n_angular
        lo = -math.pi + ai * width
        return (lo, lo + width)

    def theta_interval(self, ti: int) -> tuple[float, float]:
        width = TAU / self.n_theta
        lo = -math.pi + ti * width
        return (lo, lo + width)

    def theta_mid(self, ti: int) -> float:
        lo, hi = self.theta_interval(ti)
        return (lo + hi) / 2.0

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        """(radius, azimuth) of the cell center; radius is the log midpoint."""
        ri, ai, _ = cell
        edges = self.radial_edges
        r = math.sqrt(edges[ri] * edges[ri + 1])
        lo, hi = self.azimuth_interval(ai)
        return (r, (lo + hi) / 2.0)

    def cell_corners(self, cell: Cell) -> list[tuple[float, float]]:
        """The four (radius, azimuth) corners of the cell's radial-azimuth patch."""
        ri, ai, _ = cell
        edges = self.radial_edges
        alo, ahi = self.azimuth_interval(ai)
        return [
            (edges[ri], alo),
            (edges[ri], ahi),
            (edges[ri + 1], alo),
            (edges[ri + 1], ahi),
        ]

    def cell_positions(self, cell: Cell) -> list[tuple[float, float]]:
        """Center plus the four corners, as Cartesian (x, y) points."""
        pts = [self.cell_center(cell)] + self.cell_corners(cell)
        return [(r * math.cos(a), r * math.sin(a)) for r, a in pts]

    def all_cells(self) -> Iterator[Cell]:
        for ri in range(self.n_radial):
            for ai in range(self.n_angular):
                for ti in range(self.n_theta):
                    yield (ri, ai, ti)

    def validate_cell(self, cell: Cell) -> None:
        ri, ai, ti = cell
        if not (0 <= ri < self.n_radial and 0 <= ai < self.n_angular and 0 <= ti < self.n_theta):
            raise ValueError(f"cell index out of range: {cell}")


@dataclass(frozen=True)
class CellSet:
    """A set of grid cells on a shared PolarGridSpec."""

    grid: PolarGridSpec
    cells: frozenset[Cell]

    def __post_init__(self) -> None:
        cells = frozenset(tuple(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        for c in cells:
            self.grid.validate_cell(c)

    @classmethod
    def empty(cls, grid: PolarGridSpec) -> "CellSet":
        return cls(grid, frozenset())

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, cell: Cell) -> bool:
        return cell in self.cells

    def sorted_cells(self) -> list[Cell]:
        return sorted(self.cells)


def _check_same_grid(a: CellSet, b: CellSet) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(
            f"cell sets on different grids are incomparable: {a.grid} vs {b.grid}"
        )


def cellset_subset(a: CellSet, b: CellSet) -> bool:
    """True iff every cell of ``a`` is in ``b``. Grids must match."""
    _check_same_grid(a, b)
    return a.cells <= b.cells


def cellset_union(a: CellSet, b: CellSet) -> CellSet:
    _check_same_grid(a, b)
    return CellSet(a.grid, a.cells | b.cells)


def cellset_intersection(a: CellSet, b: CellSet) -> CellSet:
    _check_same_grid(a, b)
    return CellSet(a.grid, a.cells & b.cells)


def cellset_from_poses(grid: PolarGridSpec, poses: Sequence[Pose2], clamp: bool = False) -> CellSet:
    cells = set()
    for q in poses:
        if clamp:
            cells.add(grid.cell_of_clamped(q))
        else:
            cell = grid.cell_of(q)
            if cell is not None:
                cells.add(cell)
    return CellSet(grid, frozenset(cells))
