"""From query logs to task perception requirements.

The pipeline runs per scenario instance: occupancy queries are expanded into
class configurations that would collide at the queried pose (enumerated over
grid cell representatives), class dynamics are sampled backward in time to
find the start configurations that must be perceived now, infeasible
trajectories are filtered against the instance's class prior, and surviving
start poses are binned onto the shared log-polar grid.

RNG streams are keyed by (global seed, quantized query), never drawn
sequentially across queries. That is what makes the monotonicity properties
exact: growing a query set cannot perturb the trajectories sampled for the
queries already present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Optional

import numpy as np

from .geom import (
    CellSet,
    Footprint,
    PolarGridSpec,
    Pose2,
    cellset_union,
    sat_overlap_many,
    se2_compose,
    wrap_angle,
)
from .planner import OccupancyQuery, PlannerSpec, RobotBody, run_task
from .world import Appearance, EnvCondition, ObjectClass, Prior, Task

PCP_DT = 0.2  # control grid for backward trajectory sampling


@dataclass(frozen=True)
class CollidingTrajectory:
    """A sampled class trajectory ending in collision at the queried pose.

    Samples are (t, pose) in the ego frame with t ascending from 0 to tau;
    the pose at tau is the colliding end configuration.
    """

    class_id: str
    appearance_id: str
    samples: tuple[tuple[float, Pose2], ...]
    tau: float
    env: EnvCondition
    ego_world_pose: Pose2

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("trajectory needs at least one sample")
        if abs(self.samples[0][0]) > 1e-9 or abs(self.samples[-1][0] - self.tau) > 1e-9:
            raise ValueError("samples must run from t=0 to t=tau")

    @property
    def start_pose(self) -> Pose2:
        return self.samples[0][1]

    @property
    def end_pose(self) -> Pose2:
        return self.samples[-1][1]


@dataclass
class RequirementSet:
    """Cells the perception system must cover, per (class, env, theta bin)."""

    grid: PolarGridSpec
    entries: dict[tuple[str, EnvCondition, int], CellSet]

    @classmethod
    def empty(cls, grid: PolarGridSpec) -> "RequirementSet":
        return cls(grid, {})

    def cells_for(self, class_id: str, env: EnvCondition, theta_idx: int) -> CellSet:
        return self.entries.get((class_id, env, theta_idx), CellSet.empty(self.grid))

    def atom_count(self) -> int:
        return sum(len(cs) for cs in self.entries.values())

    def atoms(self) -> Iterator[tuple[str, EnvCondition, int, tuple[int, int, int]]]:
        """All (class_id, env, theta_idx, cell) atoms in sorted order."""
        for key in sorted(self.entries.keys(), key=_entry_sort_key):
            class_id, env, theta_idx = key
            for cell in self.entries[key].sorted_cells():
                yield (class_id, env, theta_idx, cell)

    def subset_of(self, other: "RequirementSet") -> bool:
        if self.grid != other.grid:
            return False
        for key, cells in self.entries.items():
            other_cells = other.entries.get(key)
            if other_cells is None:
                if len(cells) > 0:
                    return False
            elif not cells.cells <= other_cells.cells:
                return False
        return True

    def union(self, other: "RequirementSet") -> "RequirementSet":
        if self.grid != other.grid:
            raise ValueError("cannot union requirement sets on different grids")
        merged = dict(self.entries)
        for key, cells in other.entries.items():
            if key in merged:
                merged[key] = cellset_union(merged[key], cells)
            else:
                merged[key] = cells
        return RequirementSet(self.grid, merged)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "requirements",
            "grid": {
                "r_min_m": self.grid.r_min,
                "r_max_m": self.grid.r_max,
                "n_radial": self.grid.n_radial,
                "n_angular": self.grid.n_angular,
                "n_theta": self.grid.n_theta,
            },
            "entries": [
                {
                    "class_id": class_id,
                    "light": env.light,
                    "weather": env.weather,
                    "theta_idx": theta_idx,
                    "cells": [list(c) for c in self.entries[(class_id, env, theta_idx)].sorted_cells()],
                }
                for class_id, env, theta_idx in sorted(self.entries.keys(), key=_entry_sort_key)
                if len(self.entries[(class_id, env, theta_idx)]) > 0
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RequirementSet":
        g = d["grid"]
        grid = PolarGridSpec(g["r_min_m"], g["r_max_m"], g["n_radial"], g["n_angular"], g["n_theta"])
        entries = {}
        for e in d["entries"]:
            key = (e["class_id"], EnvCondition(e["light"], e["weather"]), e["theta_idx"])
            entries[key] = CellSet(grid, frozenset(tuple(c) for c in e["cells"]))
        return cls(grid, entries)


def _entry_sort_key(key: tuple[str, EnvCondition, int]) -> tuple:
    class_id, env, theta_idx = key
    return (class_id, env.light, env.weather, theta_idx)


@lru_cache(maxsize=16)
def _grid_representatives(grid_key: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell representative positions for a grid.

    Returns (cells, positions, radii): cells is (n, 3) int, positions is
    (n, 5, 2) with the center followed by the four radial-azimuth corners,
    radii is (n,) with the largest representative radius per cell.
    """
    grid = PolarGridSpec(*grid_key)
    cells = []
    positions = []
    for cell in grid.all_cells():
        cells.append(cell)
        positions.append(grid.cell_positions(cell))
    cells_arr = np.array(cells, dtype=np.int64)
    pos_arr = np.array(positions, dtype=np.float64)
    radii = np.linalg.norm(pos_arr, axis=2).max(axis=1)
    return cells_arr, pos_arr, radii


def _polygons_at(footprint: Footprint, poses: np.ndarray) -> np.ndarray:
    """Footprint vertices placed at each (x, y, theta) row of ``poses``."""
    verts = footprint.as_array()  # (k, 2)
    cos = np.cos(poses[:, 2])
    sin = np.sin(poses[:, 2])
    rot = np.stack(
        [np.stack([cos, -sin], axis=1), np.stack([sin, cos], axis=1)], axis=1
    )  # (n, 2, 2)
    return np.einsum("nij,kj->nki", rot, verts) + poses[:, None, :2]


def collision(
    ego_pose: Pose2,
    object_class: ObjectClass,
    body: RobotBody,
    grid: PolarGridSpec,
    appearance: Optional[Appearance] = None,
) -> list[Pose2]:
    """Grid representative poses whose class footprint hits the robot at ego_pose.

    Each cell contributes its center and four radial-azimuth corners, at the
    midpoint heading of its theta interval. Representatives are returned in
    cell order, which downstream RNG streams rely on.
    """
    fp = appearance.footprint() if appearance is not None else object_class.footprint
    cells, pos, radii = _grid_representatives(grid.key())
    reach = fp.radius() + body.footprint.radius()
    ego_xy = np.array([ego_pose.x, ego_pose.y])

    near = np.linalg.norm(pos - ego_xy, axis=2).min(axis=1) <= reach + 1e-9
    if not near.any():
        return []

    theta_mids = np.array([grid.theta_mid(int(t)) for t in cells[:, 2]])
    cand_pos = pos[near].reshape(-1, 2)  # (m*5, 2)
    cand_theta = np.repeat(theta_mids[near], 5)
    poses = np.column_stack([cand_pos, cand_theta])

    robot_poly = body.footprint.transformed(ego_pose)
    mask = sat_overlap_many(robot_poly, _polygons_at(fp, poses), strict=False)
    return [Pose2(*poses[i]) for i in np.nonzero(mask)[0]]


def _query_rng(seed: int, query: OccupancyQuery) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=query.stream_hash(seed)))


def _backward_steps(tau: float) -> list[float]:
    """Backward step sizes from t=tau down to t=0 on the PCP control grid."""
    steps = []
    remaining = tau
    while remaining > 1e-9:
        step = min(PCP_DT, remaining)
        steps.append(step)
        remaining -= step
    return steps


def _sample_backward(
    end_poses: np.ndarray,
    limits,
    n_traj: int,
    rng: np.random.Generator,
    tau: float,
) -> np.ndarray:
    """Backward trajectories from each end pose.

    Returns an array of shape (n_steps + 1, n_end * n_traj, 3) whose first
    axis runs from t=0 to t=tau (so index -1 holds the end poses). Controls
    are piecewise-constant on the PCP_DT grid and integration applies the
    forward Euler model with a negated time step.
    """
    steps = _backward_steps(tau)
    n_end = end_poses.shape[0]
    n = n_end * n_traj
    kappa_max = limits.max_curvature
    kappa_cap = 0.0 if not math.isfinite(kappa_max) else kappa_max

    speeds = rng.uniform(0.0, limits.v_max, size=(n_end, n_traj)).reshape(n)
    n_seg = len(steps)
    accels = rng.uniform(-limits.d_max, limits.a_max, size=(n_end, n_traj, max(n_seg, 1)))
    kappas = rng.uniform(-kappa_cap, kappa_cap, size=(n_end, n_traj, max(n_seg, 1)))
    accels = accels.reshape(n, -1)
    kappas = kappas.reshape(n, -1)

    poses = np.repeat(end_poses, n_traj, axis=0).astype(np.float64)
    out = np.empty((n_seg + 1, n, 3))
    out[n_seg] = poses
    v = speeds
    for k, dt in enumerate(steps):
        a = accels[:, n_seg - 1 - k]
        kap = kappas[:, n_seg - 1 - k]
        # forward model, negated time step
        poses = poses.copy()
        poses[:, 0] -= v * np.cos(poses[:, 2]) * dt
        poses[:, 1] -= v * np.sin(poses[:, 2]) * dt
        poses[:, 2] -= v * kap * dt
        v = np.clip(v - a * dt, 0.0, limits.v_max)
        out[n_seg - 1 - k] = poses
    return out


def _wrap_array(theta: np.ndarray) -> np.ndarray:
    wrapped = (theta + math.pi) % (2 * math.pi) - math.pi
    wrapped[wrapped >= math.pi] -= 2 * math.pi
    return wrapped


def _poses_in_prior_mask(prior: Prior, poses: np.ndarray) -> np.ndarray:
    """Vectorized in_prior over (n, 3) world poses."""
    n = poses.shape[0]
    ok = np.zeros(n, dtype=bool)
    theta = _wrap_array(poses[:, 2])
    for region in prior.regions:
        in_heading = (theta >= region.heading_lo) & (theta < region.heading_hi)
        if not in_heading.any():
            continue
        inside = np.ones(n, dtype=bool)
        verts = region.polygon.vertices
        for i in range(len(verts)):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % len(verts)]
            cross = (bx - ax) * (poses[:, 1] - ay) - (by - ay) * (poses[:, 0] - ax)
            inside &= cross >= 0.0
        ok |= in_heading & inside
    return ok


def _compose_many(anchor: Pose2, poses: np.ndarray) -> np.ndarray:
    c, s = math.cos(anchor.theta), math.sin(anchor.theta)
    out = np.empty_like(poses)
    out[:, 0] = anchor.x + c * poses[:, 0] - s * poses[:, 1]
    out[:, 1] = anchor.y + s * poses[:, 0] + c * poses[:, 1]
    out[:, 2] = poses[:, 2] + anchor.theta
    return out


def _surviving_starts(
    query: OccupancyQuery,
    object_class: ObjectClass,
    body: RobotBody,
    grid: PolarGridSpec,
    prior: Prior,
    n_traj: int,
    seed: int,
    appearance: Optional[Appearance] = None,
) -> np.ndarray:
    """Ego-frame start poses of feasible colliding trajectories for one query."""
    if prior.is_empty():
        return np.empty((0, 3))
    end_list = collision(query.pose, object_class, body, grid, appearance)
    if not end_list:
        return np.empty((0, 3))
    end_poses = np.array([p.as_tuple() for p in end_list])
    rng = _query_rng(seed, query)
    trajs = _sample_backward(end_poses, object_class.limits, n_traj, rng, query.tau)
    n_steps_p1, n, _ = trajs.shape

    flat = trajs.reshape(-1, 3)
    world = _compose_many(query.ego_world_pose, flat)
    in_prior_mask = _poses_in_prior_mask(prior, world).reshape(n_steps_p1, n)
    feasible = in_prior_mask.all(axis=0)
    if not feasible.any():
        return np.empty((0, 3))

    fp = appearance.footprint() if appearance is not None else object_class.footprint
    starts_world = world.reshape(n_steps_p1, n, 3)[0][feasible]
    robot_poly = body.footprint.transformed(query.ego_world_pose)
    overlapping = sat_overlap_many(robot_poly, _polygons_at(fp, starts_world), strict=True)
    survivors_idx = np.nonzero(feasible)[0][~overlapping]
    return trajs[0][survivors_idx]


def pcp(
    queries: Iterable[OccupancyQuery],
    object_class: ObjectClass,
    body: RobotBody,
    grid: PolarGridSpec,
    n_traj: int,
    seed: int,
    appearance: Optional[Appearance] = None,
) -> set[CollidingTrajectory]:
    """Backward-sampled colliding class trajectories for a set of queries.

    Deterministic for a fixed seed; per-query RNG streams make the output
    monotone in the query set (exact set inclusion).
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    appearance_id = f"{object_class.id}/nominal" if appearance is None else (
        f"{object_class.id}/{appearance.tone}-{appearance.length:g}x{appearance.width:g}"
    )
    out: set[CollidingTrajectory] = set()
    for query in sorted(queries, key=lambda q: q.quantized_key()):
        end_list = collision(query.pose, object_class, body, grid, appearance)
        if not end_list:
            continue
        end_poses = np.array([p.as_tuple() for p in end_list])
        rng = _query_rng(seed, query)
        trajs = _sample_backward(end_poses, object_class.limits, n_traj, rng, query.tau)
        times = [0.0]
        acc = 0.0
        for dt in reversed(_backward_steps(query.tau)):
            acc += dt
            times.append(acc)
        for j in range(trajs.shape[1]):
            samples = tuple(
                (times[k], Pose2(*trajs[k, j])) for k in range(trajs.shape[0])
            )
            out.add(
                CollidingTrajectory(
                    class_id=object_class.id,
                    appearance_id=appearance_id,
                    samples=samples,
                    tau=query.tau,
                    env=query.env,
                    ego_world_pose=query.ego_world_pose,
                )
            )
    return out


def prior_check(
    trajectories: Iterable[CollidingTrajectory],
    prior: Prior,
    body: RobotBody,
    class_footprint: Footprint,
) -> set[Pose2]:
    """Start poses (ego frame) of trajectories that survive the prior filter.

    A trajectory survives when every sample lies in the prior after the world
    transform and its start footprint does not strictly overlap the robot
    footprint; boundary contact is allowed, starting inside a collision is not.
    """
    survivors: set[Pose2] = set()
    for traj in trajectories:
        anchor = traj.ego_world_pose
        poses = np.array([p.as_tuple() for _, p in traj.samples])
        world = _compose_many(anchor, poses)
        if not _poses_in_prior_mask(prior, world).all():
            continue
        start_world = world[0:1]
        robot_poly = body.footprint.transformed(anchor)
        overlap = sat_overlap_many(
            robot_poly, _polygons_at(class_footprint, start_world), strict=True
        )
        if overlap[0]:
            continue
        survivors.add(traj.start_pose)
    return survivors


def requirements_from_queries(
    queries_by_instance: dict[str, list[OccupancyQuery]],
    priors_by_instance: dict[str, dict[str, Prior]],
    classes: dict[str, ObjectClass],
    body: RobotBody,
    grid: PolarGridSpec,
    n_traj: int,
    seed: int,
) -> RequirementSet:
    """Core requirement assembly from per-instance query lists.

    Start poses outside the radial range are clamped onto the edge bins so
    requirements are never silently dropped.
    """
    acc: dict[tuple[str, EnvCondition, int], set] = {}
    for instance_id in sorted(queries_by_instance.keys()):
        priors = priors_by_instance[instance_id]
        for class_id in sorted(priors.keys()):
            if class_id not in classes:
                continue
            object_class = classes[class_id]
            prior = priors[class_id]
            for query in queries_by_instance[instance_id]:
                starts = _surviving_starts(
                    query, object_class, body, grid, prior, n_traj, seed
                )
                for row in starts:
                    pose = Pose2(*row)
                    cell = grid.cell_of_clamped(pose)
                    key = (class_id, query.env, cell[2])
                    acc.setdefault(key, set()).add(cell)
    entries = {key: CellSet(grid, frozenset(cells)) for key, cells in acc.items()}
    return RequirementSet(grid, entries)


def perception_requirements(
    planner_spec: PlannerSpec,
    body: RobotBody,
    task: Task,
    classes: dict[str, ObjectClass],
    n_traj: int,
    grid: PolarGridSpec,
    seed: Optional[int] = None,
) -> RequirementSet:
    """Full pipeline: simulate, expand queries, filter by priors, discretize."""
    if seed is None:
        seed = planner_spec.seed
    results = run_task(planner_spec, body, task, classes)
    queries_by_instance = {
        inst.id: results[inst.id].log.deduped_queries() for inst in task.instances
    }
    priors_by_instance = {inst.id: dict(inst.priors) for inst in task.instances}
    return requirements_from_queries(
        queries_by_instance, priors_by_instance, classes, body, grid, n_traj, seed
    )
