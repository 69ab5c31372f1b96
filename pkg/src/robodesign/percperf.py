"""Perception pipelines: sensor models, detection-rate intervals, coverage.

A pipeline is a sensor plus its detector, summarized by a parametric model of
false-negative and false-positive rates over geometric and environmental
features. Visibility is computed by casting the sensor's ray grid against the
robot's own 2.5D extrusion prisms (self-occlusion) and the target's box.

Cell coverage is worst-case: a cell counts as covered only when every
representative configuration in it has both rate upper bounds strictly below
the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .geom import CellSet, Footprint, PolarGridSpec, Pose2, se2_relative, wrap_angle
from .planner import RobotBody
from .world import Appearance, EnvCondition, ObjectClass

SENSOR_KINDS = ("lidar", "camera")

WILSON_Z = 1.959963984540054  # two-sided 95%


@dataclass(frozen=True)
class LogisticCoeffs:
    """Linear logit coefficients over the detection feature vector.

    Features, in order: bias 1, radial distance (m), absolute bearing (rad),
    visible fraction [0, 1], hit count, night flag, rain flag, size (m).
    """

    bias: float
    dist: float
    bearing: float
    visibility: float
    hits: float
    night: float
    rain: float
    size: float

    def logit(self, features: tuple[float, ...]) -> float:
        coeffs = (
            self.bias,
            self.dist,
            self.bearing,
            self.visibility,
            self.hits,
            self.night,
            self.rain,
            self.size,
        )
        return sum(c * f for c, f in zip(coeffs, features))

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.bias,
            self.dist,
            self.bearing,
            self.visibility,
            self.hits,
            self.night,
            self.rain,
            self.size,
        )


@dataclass(frozen=True)
class PerfCalib:
    """Calibrated logistic models for FNR and FPR plus an interval width knob.

    ``pseudo_count`` is the effective sample size behind the point estimates;
    intervals are Wilson score at 95%. An infinite pseudo count collapses the
    intervals onto the point estimates.
    """

    fnr: LogisticCoeffs
    fpr: LogisticCoeffs
    pseudo_count: float

    def __post_init__(self) -> None:
        if not self.pseudo_count > 0:
            raise ValueError("pseudo_count must be positive")


@dataclass(frozen=True)
class PerceptionPipeline:
    id: str
    sensor_kind: str
    fov_h: float
    fov_v: float
    range_max: float
    n_az: int
    n_el: int
    price: float
    mass: float
    power: float
    detector_flops: float
    calib: PerfCalib

    def __post_init__(self) -> None:
        if self.sensor_kind not in SENSOR_KINDS:
            raise ValueError(f"sensor_kind must be one of {SENSOR_KINDS}")
        if not (0 < self.fov_h <= 2 * math.pi + 1e-12):
            raise ValueError("fov_h must lie in (0, 2*pi]")
        if self.fov_v <= 0 or self.range_max <= 0:
            raise ValueError("fov_v and range_max must be positive")
        if self.n_az < 1 or self.n_el < 1:
            raise ValueError("ray counts must be positive")

    def resources(self) -> tuple[float, float, float, float]:
        return (self.price, self.mass, self.power, self.detector_flops)


@dataclass(frozen=True)
class MountedPerceptionPipeline:
    """A pipeline fixed at a mount point with a yaw/pitch orientation."""

    pipeline: PerceptionPipeline
    body: RobotBody
    mount: str
    yaw: float
    pitch: float

    def __post_init__(self) -> None:
        self.body.mount(self.mount)  # raises on unknown mount names

    @property
    def id(self) -> str:
        return (
            f"{self.pipeline.id}@{self.body.id}:{self.mount}"
            f":yaw{math.degrees(self.yaw):+.0f}:pitch{math.degrees(self.pitch):+.0f}"
        )

    def mount_position(self) -> tuple[float, float, float]:
        return self.body.mount(self.mount)

    def sensor_planar_pose(self) -> Pose2:
        mx, my, _ = self.mount_position()
        return Pose2(mx, my, self.yaw)


@dataclass(frozen=True)
class VisibilityReport:
    hit_count: int
    visible_fraction: float
    in_fov: bool


@dataclass
class CoverageSet:
    """Cells detectable by one mounted pipeline, per (class, env, theta bin)."""

    mpp_id: str
    epsilon: float
    grid: PolarGridSpec
    entries: dict[tuple[str, EnvCondition, int], CellSet]

    def cells_for(self, class_id: str, env: EnvCondition, theta_idx: int) -> CellSet:
        return self.entries.get((class_id, env, theta_idx), CellSet.empty(self.grid))


@lru_cache(maxsize=256)
def _ray_directions(
    fov_h: float, fov_v: float, n_az: int, n_el: int, yaw: float, pitch: float
) -> np.ndarray:
    """Unit ray directions in the body frame for a mounted sensor, (n, 3)."""
    az = -fov_h / 2 + (np.arange(n_az) + 0.5) * (fov_h / n_az)
    el = -fov_v / 2 + (np.arange(n_el) + 0.5) * (fov_v / n_el)
    azg, elg = np.meshgrid(az, el, indexing="ij")
    dirs = np.stack(
        [
            np.cos(elg) * np.cos(azg),
            np.cos(elg) * np.sin(azg),
            np.sin(elg),
        ],
        axis=-1,
    ).reshape(-1, 3)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return dirs @ (rz @ ry).T


def _polygon_world(footprint: Footprint, pose: Pose2) -> np.ndarray:
    return footprint.transformed(pose)


def ray_prism_entries(
    origin: np.ndarray, dirs: np.ndarray, poly: np.ndarray, z0: float, z1: float
) -> np.ndarray:
    """Entry parameter of each ray into a convex prism, inf when it misses.

    The prism is a CCW polygon extruded over [z0, z1]; the interval of ray
    parameters inside the prism is computed by clipping the z slab against
    the polygon's half-planes.
    """
    n = dirs.shape[0]
    lo = np.zeros(n)
    hi = np.full(n, np.inf)

    dz = dirs[:, 2]
    oz = origin[2]
    vertical_ok = (oz >= z0) & (oz <= z1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (z0 - oz) / dz
        t2 = (z1 - oz) / dz
    parallel_z = np.abs(dz) < 1e-15
    zlo = np.where(parallel_z, np.where(vertical_ok, -np.inf, np.inf), np.minimum(t1, t2))
    zhi = np.where(parallel_z, np.where(vertical_ok, np.inf, -np.inf), np.maximum(t1, t2))
    lo = np.maximum(lo, zlo)
    hi = np.minimum(hi, zhi)

    o_xy = origin[:2]
    d_xy = dirs[:, :2]
    k = poly.shape[0]
    for i in range(k):
        a = poly[i]
        b = poly[(i + 1) % k]
        edge = b - a
        normal = np.array([edge[1], -edge[0]])  # outward for CCW
        num = (o_xy - a) @ normal
        den = d_xy @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            tb = -num / den
        parallel = np.abs(den) < 1e-15
        lo = np.where(~parallel & (den < 0), np.maximum(lo, tb), lo)
        hi = np.where(~parallel & (den > 0), np.minimum(hi, tb), hi)
        hi = np.where(parallel & (num > 0), -np.inf, hi)

    entry = np.where((lo <= hi) & (hi > 1e-9), lo, np.inf)
    return entry


def intersect_ray_prism_reference(
    origin: np.ndarray, direction: np.ndarray, poly: np.ndarray, z0: float, z1: float
) -> float:
    """Slow face-by-face ray/prism intersection, kept as an independent oracle.

    Enumerates the side quads and the top and bottom polygon faces, returning
    the smallest positive hit parameter (inf when the ray misses).
    """
    best = math.inf
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    k = poly.shape[0]
    for i in range(k):
        a = poly[i]
        b = poly[(i + 1) % k]
        edge = b - a
        normal = np.array([edge[1], -edge[0], 0.0])
        den = float(normal @ d)
        if abs(den) < 1e-15:
            continue
        t = float(normal @ (np.array([a[0], a[1], z0]) - o)) / den
        if t <= 1e-9:
            continue
        p = o + t * d
        if not (z0 - 1e-9 <= p[2] <= z1 + 1e-9):
            continue
        u = float((p[:2] - a) @ edge) / float(edge @ edge)
        if -1e-9 <= u <= 1.0 + 1e-9:
            best = min(best, t)
    if abs(d[2]) >= 1e-15:
        for z_face in (z0, z1):
            t = (z_face - o[2]) / d[2]
            if t <= 1e-9:
                continue
            p = o + t * d
            inside = True
            for i in range(k):
                a = poly[i]
                b = poly[(i + 1) % k]
                cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                if cross < -1e-9:
                    inside = False
                    break
            if inside:
                best = min(best, t)
    # origin already inside the prism counts as an immediate hit
    inside_xy = True
    for i in range(k):
        a = poly[i]
        b = poly[(i + 1) % k]
        cross = (b[0] - a[0]) * (o[1] - a[1]) - (b[1] - a[1]) * (o[0] - a[0])
        if cross < 0.0:
            inside_xy = False
            break
    if inside_xy and z0 <= o[2] <= z1:
        best = 0.0
    return best


@lru_cache(maxsize=512)
def _body_entry_distances(
    fov_h: float,
    fov_v: float,
    n_az: int,
    n_el: int,
    yaw: float,
    pitch: float,
    mount_pos: tuple[float, float, float],
    height_profile: tuple[tuple[Footprint, float], ...],
    intersector: str,
) -> np.ndarray:
    """Per-ray entry distance into the nearest body prism; target-independent."""
    origin = np.array(mount_pos)
    dirs = _ray_directions(fov_h, fov_v, n_az, n_el, yaw, pitch)
    nearest = np.full(dirs.shape[0], np.inf)
    for prism_fp, height in height_profile:
        poly = prism_fp.as_array()
        if intersector == "fast":
            t_prism = ray_prism_entries(origin, dirs, poly, 0.0, height)
        else:
            t_prism = np.array(
                [intersect_ray_prism_reference(origin, d, poly, 0.0, height) for d in dirs]
            )
        nearest = np.minimum(nearest, t_prism)
    return nearest


def cast_rays(
    mpp: MountedPerceptionPipeline,
    body: RobotBody,
    target_footprint: Footprint,
    target_pose: Pose2,
    target_height: float,
    intersector: str = "fast",
) -> VisibilityReport:
    """Visibility of a target box from a mounted sensor, with self-occlusion.

    A ray hits when it reaches the target prism within range before entering
    any of the body's extrusion prisms. ``visible_fraction`` is hits divided
    by the rays that would hit with the body removed.
    """
    pipeline = mpp.pipeline
    origin = np.array(mpp.mount_position())
    dirs = _ray_directions(
        pipeline.fov_h, pipeline.fov_v, pipeline.n_az, pipeline.n_el, mpp.yaw, mpp.pitch
    )
    target_poly = _polygon_world(target_footprint, target_pose)

    if intersector == "fast":
        t_target = ray_prism_entries(origin, dirs, target_poly, 0.0, target_height)
    else:
        t_target = np.array(
            [
                intersect_ray_prism_reference(origin, d, target_poly, 0.0, target_height)
                for d in dirs
            ]
        )
    would_hit = np.isfinite(t_target) & (t_target <= pipeline.range_max)
    n_would = int(would_hit.sum())
    if n_would == 0:
        return VisibilityReport(0, 0.0, False)

    t_body = _body_entry_distances(
        pipeline.fov_h,
        pipeline.fov_v,
        pipeline.n_az,
        pipeline.n_el,
        mpp.yaw,
        mpp.pitch,
        mpp.mount_position(),
        body.height_profile,
        intersector,
    )
    blocked = t_body < t_target - 1e-9
    hits = int((would_hit & ~blocked).sum())
    return VisibilityReport(hits, hits / n_would, True)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def wilson_interval(p: float, n: float) -> tuple[float, float]:
    """Two-sided 95% Wilson score interval for a rate estimate with n samples."""
    if math.isinf(n):
        return (p, p)
    z2 = WILSON_Z * WILSON_Z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = WILSON_Z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def detection_features(
    q_sensor: Pose2, appearance: Appearance, env: EnvCondition, vis: VisibilityReport
) -> tuple[float, ...]:
    """Feature vector for the logistic rate models; order matches LogisticCoeffs."""
    r = math.hypot(q_sensor.x, q_sensor.y)
    bearing = abs(wrap_angle(math.atan2(q_sensor.y, q_sensor.x))) if r > 0 else 0.0
    return (
        1.0,
        r,
        bearing,
        vis.visible_fraction,
        float(vis.hit_count),
        1.0 if env.light == "night" else 0.0,
        1.0 if env.weather == "rain" else 0.0,
        appearance.size_factor(),
    )


def ppp(
    q_sensor: Pose2,
    appearance: Appearance,
    pipeline: PerceptionPipeline,
    env: EnvCondition,
    vis: VisibilityReport,
) -> tuple[tuple[float, float], tuple[float, float]]:
    """FNR and FPR confidence intervals for one class configuration.

    A configuration with no sensor return is undetectable: FNR pinned to
    [1, 1] and FPR to [0, 0]. Otherwise logistic point estimates are widened
    to Wilson 95% intervals with the calibration's pseudo count.
    """
    if not vis.in_fov or vis.hit_count == 0:
        return ((1.0, 1.0), (0.0, 0.0))
    features = detection_features(q_sensor, appearance, env, vis)
    calib = pipeline.calib
    p_fnr = _sigmoid(calib.fnr.logit(features))
    p_fpr = _sigmoid(calib.fpr.logit(features))
    return (wilson_interval(p_fnr, calib.pseudo_count), wilson_interval(p_fpr, calib.pseudo_count))


def _cell_rep_poses(grid: PolarGridSpec, cell) -> list[Pose2]:
    """Five positions (center plus corners) at both theta interval endpoints."""
    lo, hi = grid.theta_interval(cell[2])
    return [
        Pose2(x, y, th) for x, y in grid.cell_positions(cell) for th in (lo, hi)
    ]


def mppcc(
    object_class: ObjectClass,
    appearance: Appearance,
    mpp: MountedPerceptionPipeline,
    env: EnvCondition,
    epsilon: float,
    grid: PolarGridSpec,
    intersector: str = "fast",
) -> CellSet:
    """Cells detectable by a mounted pipeline under threshold epsilon.

    Worst case over the cell's representatives: every representative must
    have both upper bounds strictly below epsilon. ``epsilon = 0`` is
    therefore unattainable.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon == 0.0:
        return CellSet.empty(grid)
    pipeline = mpp.pipeline
    sensor_pose = mpp.sensor_planar_pose()
    fp = appearance.footprint()
    reach = pipeline.range_max + fp.radius()
    sx, sy, _ = mpp.mount_position()

    covered = set()
    for cell in grid.all_cells():
        reps = _cell_rep_poses(grid, cell)
        if all(math.hypot(p.x - sx, p.y - sy) > reach for p in reps):
            continue
        ok = True
        for rep in reps:
            vis = cast_rays(mpp, mpp.body, fp, rep, appearance.height, intersector)
            q_sensor = se2_relative(sensor_pose, rep)
            (fnr_lo, fnr_hi), (fpr_lo, fpr_hi) = ppp(q_sensor, appearance, pipeline, env, vis)
            if not (fnr_hi < epsilon and fpr_hi < epsilon):
                ok = False
                break
        if ok:
            covered.add(cell)
    return CellSet(grid, frozenset(covered))


def class_coverage(
    object_class: ObjectClass,
    mpp: MountedPerceptionPipeline,
    env: EnvCondition,
    epsilon: float,
    grid: PolarGridSpec,
    intersector: str = "fast",
) -> CellSet:
    """Worst case over the class's appearance choices (set intersection)."""
    result: Optional[CellSet] = None
    for appearance, _ in object_class.appearance_choices:
        cs = mppcc(object_class, appearance, mpp, env, epsilon, grid, intersector)
        result = cs if result is None else CellSet(grid, result.cells & cs.cells)
    assert result is not None
    return result


def build_coverage_set(
    mpp: MountedPerceptionPipeline,
    classes: dict[str, ObjectClass],
    envs: Iterable[EnvCondition],
    epsilon: float,
    grid: PolarGridSpec,
    intersector: str = "fast",
) -> CoverageSet:
    """CoverageSet over the given classes and environments, split by theta bin."""
    entries: dict[tuple[str, EnvCondition, int], CellSet] = {}
    for class_id in sorted(classes.keys()):
        for env in envs:
            cells = class_coverage(classes[class_id], mpp, env, epsilon, grid, intersector)
            by_theta: dict[int, set] = {}
            for c in cells.cells:
                by_theta.setdefault(c[2], set()).add(c)
            for ti, cs in by_theta.items():
                entries[(class_id, env, ti)] = CellSet(grid, frozenset(cs))
    return CoverageSet(mpp.id, epsilon, grid, entries)


def coverage_set_to_dict(cov: CoverageSet) -> dict:
    return {
        "schema_version": 1,
        "kind": "coverage",
        "mpp_id": cov.mpp_id,
        "epsilon": cov.epsilon,
        "grid": {
            "r_min_m": cov.grid.r_min,
            "r_max_m": cov.grid.r_max,
            "n_radial": cov.grid.n_radial,
            "n_angular": cov.grid.n_angular,
            "n_theta": cov.grid.n_theta,
        },
        "entries": [
            {
                "class_id": class_id,
                "light": env.light,
                "weather": env.weather,
                "theta_idx": ti,
                "cells": [list(c) for c in cov.entries[(class_id, env, ti)].sorted_cells()],
            }
            for class_id, env, ti in sorted(
                cov.entries.keys(), key=lambda k: (k[0], k[1].light, k[1].weather, k[2])
            )
        ],
    }


def coverage_set_from_dict(d: dict) -> CoverageSet:
    g = d["grid"]
    grid = PolarGridSpec(g["r_min_m"], g["r_max_m"], g["n_radial"], g["n_angular"], g["n_theta"])
    entries = {}
    for e in d["entries"]:
        key = (e["class_id"], EnvCondition(e["light"], e["weather"]), e["theta_idx"])
        entries[key] = CellSet(grid, frozenset(tuple(c) for c in e["cells"]))
    return CoverageSet(d["mpp_id"], d["epsilon"], grid, entries)
