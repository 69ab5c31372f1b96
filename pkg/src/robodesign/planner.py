"""Robot bodies and sampling-based motion planners that log occupancy queries.

A planner run is a receding-horizon loop: search over the planning horizon,
execute one replan period, repeat. Every occupancy test issued during search
goes through the caller-supplied oracle and is recorded in the query log, so
the log over-approximates what the deployed perception system must answer.

Runs are deterministic for a fixed seed. Tree planners key their RNG streams
by (seed, episode index) and draw a fixed number of variates per iteration,
which makes the query set of a small sampling budget an exact prefix-subset
of a larger budget on the same episode.
"""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dubins
from .geom import (
    Footprint,
    Pose2,
    sat_overlap,
    se2_compose,
    se2_relative,
    transform_polygon,
    wrap_angle,
)
from .world import (
    DynamicsLimits,
    EnvCondition,
    ObjectClass,
    ScenarioInstance,
    Task,
    euler_step,
    rollout_trace,
)

PLANNER_KINDS = ("lattice_astar", "rrt", "rrt_star")

# query dedup quantization: finer than the coarsest grid cell
QUANT_POS = 0.1
QUANT_THETA = math.radians(2.0)
QUANT_TAU = 0.1

QUERYLOG_HEADER = "# querylog v1: instance_id x_m y_m theta_rad tau_s light weather ego_x_m ego_y_m ego_theta_rad"


class TaskInfeasibleError(RuntimeError):
    """Raised when a design cannot complete every instance of a task."""


@dataclass(frozen=True)
class RobotBody:
    """A robot chassis: shape, dynamics, mounts, budgets and costs."""

    id: str
    footprint: Footprint
    height_profile: tuple[tuple[Footprint, float], ...]
    limits: DynamicsLimits
    mount_points: tuple[tuple[str, tuple[float, float, float]], ...]
    payload_max: float
    aux_power: float
    driving_range: float
    fixed_cost: float
    op_cost: float

    def __post_init__(self) -> None:
        if not self.mount_points:
            raise ValueError("body needs at least one mount point")
        names = [name for name, _ in self.mount_points]
        if len(set(names)) != len(names):
            raise ValueError("mount point names must be unique")
        for name, (mx, my, mz) in self.mount_points:
            if mz < 0.0:
                raise ValueError(f"mount {name!r} must be at or above the ground plane")
            if not self.footprint.contains(mx, my):
                raise ValueError(f"mount {name!r} must lie on the footprint")
        if self.fixed_cost <= 0.0 or self.op_cost <= 0.0:
            raise ValueError("costs must be positive")

    def mount(self, name: str) -> tuple[float, float, float]:
        for mount_name, pos in self.mount_points:
            if mount_name == name:
                return pos
        raise KeyError(f"unknown mount point {name!r}")

    def mount_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.mount_points)

    def dynamics_key(self) -> tuple[float, float, float]:
        """(a_max, d_max, turn_radius_min); the co-design layer orders on these."""
        return (self.limits.a_max, self.limits.d_max, self.limits.turn_radius_min)


@dataclass(frozen=True)
class PlannerSpec:
    id: str
    kind: str
    horizon_s: float
    replan_period_s: float
    budget: int
    seed: int
    primitive_dt_s: float = 0.5
    check_dt_s: float = 0.1
    timeout_s: float = 120.0
    cost_per_check_gflops: float = 1e-4
    goal_bias: float = 0.05
    steer_samples: int = 5
    rewire_radius_m: float = 8.0

    def __post_init__(self) -> None:
        if self.kind not in PLANNER_KINDS:
            raise ValueError(f"kind must be one of {PLANNER_KINDS}")
        if self.horizon_s <= 0 or self.budget <= 0:
            raise ValueError("horizon and budget must be positive")
        if not 0 < self.replan_period_s <= self.horizon_s:
            raise ValueError("replan period must lie in (0, horizon]")
        if self.kind == "lattice_astar":
            depth = self.horizon_s / self.primitive_dt_s
            if abs(depth - round(depth)) > 1e-9:
                raise ValueError("primitive_dt_s must divide horizon_s")


@dataclass(frozen=True)
class OccupancyQuery:
    """Would the ego collide at ego-frame pose ``pose``, ``tau`` seconds ahead?

    ``ego_world_pose`` anchors the ego frame: it is the world pose of the ego
    at the instant the query was issued, which downstream processing needs to
    transform class trajectories into the world frame.
    """

    pose: Pose2
    tau: float
    env: EnvCondition
    ego_world_pose: Pose2

    def __post_init__(self) -> None:
        if self.tau < 0.0:
            raise ValueError("tau must be >= 0")

    def quantized_key(self) -> tuple:
        return (
            round(self.pose.x / QUANT_POS),
            round(self.pose.y / QUANT_POS),
            round(self.pose.theta / QUANT_THETA),
            round(self.tau / QUANT_TAU),
            self.env.as_tuple(),
        )

    def stream_hash(self, seed: int) -> int:
        """Stable per-query hash used to key downstream RNG streams."""
        payload = repr((seed,) + self.quantized_key()).encode()
        return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


@dataclass
class QueryLog:
    """Append-only record of (query, collision checks) for one instance run."""

    instance_id: str
    records: list[tuple[OccupancyQuery, int]] = field(default_factory=list)

    def append(self, query: OccupancyQuery, checks: int) -> None:
        self.records.append((query, checks))

    def deduped_queries(self) -> list[OccupancyQuery]:
        """First occurrence per quantized key, in stable key order."""
        seen: dict[tuple, OccupancyQuery] = {}
        for query, _ in self.records:
            seen.setdefault(query.quantized_key(), query)
        return [seen[k] for k in sorted(seen.keys())]

    def total_checks(self) -> int:
        return sum(c for _, c in self.records)

    def export_text(self) -> str:
        lines = [QUERYLOG_HEADER]
        for q in self.deduped_queries():
            lines.append(
                f"{self.instance_id} {q.pose.x:.6f} {q.pose.y:.6f} {q.pose.theta:.6f} "
                f"{q.tau:.3f} {q.env.light} {q.env.weather} "
                f"{q.ego_world_pose.x:.6f} {q.ego_world_pose.y:.6f} {q.ego_world_pose.theta:.6f}"
            )
        return "\n".join(lines) + "\n"


def parse_querylog_text(text: str) -> tuple[str, list[OccupancyQuery]]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    instance_id = ""
    queries = []
    for ln in lines:
        parts = ln.split()
        instance_id = parts[0]
        queries.append(
            OccupancyQuery(
                pose=Pose2(float(parts[1]), float(parts[2]), float(parts[3])),
                tau=float(parts[4]),
                env=EnvCondition(parts[5], parts[6]),
                ego_world_pose=Pose2(float(parts[7]), float(parts[8]), float(parts[9])),
            )
        )
    return instance_id, queries


@dataclass
class PlanResult:
    trajectory: list[tuple[float, Pose2, float]]  # (t, world pose, speed)
    log: QueryLog
    outcome: str  # reached | timeout | stuck

    def path_length(self) -> float:
        acc = 0.0
        for (_, a, _), (_, b, _) in zip(self.trajectory, self.trajectory[1:]):
            acc += math.hypot(b.x - a.x, b.y - a.y)
        return acc

    def elapsed(self) -> float:
        if len(self.trajectory) < 2:
            return 0.0
        return self.trajectory[-1][0] - self.trajectory[0][0]


class GroundTruthOracle:
    """Answers occupancy queries from the scenario ground truth.

    Used at design time: simulation logs must over-approximate what runtime
    perception will be asked, so the oracle sees everything perfectly. Returns
    (collides, number of footprint tests performed).
    """

    def __init__(
        self,
        instance: ScenarioInstance,
        body: RobotBody,
        classes: dict[str, ObjectClass],
        table_dt: float = 0.05,
        t_max: float = 200.0,
    ) -> None:
        self.instance = instance
        self.body = body
        self._table_dt = table_dt
        self._tables: list[tuple[np.ndarray, Footprint]] = []
        for obj in instance.objects:
            cls = classes[obj.class_id]
            samples = rollout_trace(
                cls.limits, obj.pose, obj.speed, obj.trace, table_dt, t_max
            )
            poses = np.array([[p.x, p.y, p.theta] for _, p in samples])
            fp = cls.appearance(obj.appearance_idx).footprint()
            self._tables.append((poses, fp))
        self._static = [obs.as_array() for obs in instance.workspace.obstacles]

    def object_pose(self, obj_idx: int, t: float) -> Pose2:
        poses, _ = self._tables[obj_idx]
        i = min(int(round(t / self._table_dt)), len(poses) - 1)
        return Pose2(*poses[i])

    def __call__(self, query: OccupancyQuery, t_abs: float) -> tuple[bool, int]:
        ego_pose = se2_compose(query.ego_world_pose, query.pose)
        ego_poly = self.body.footprint.transformed(ego_pose)
        checks = 0
        for idx, (_, fp) in enumerate(self._tables):
            checks += 1
            obj_pose = self.object_pose(idx, t_abs)
            if sat_overlap(ego_poly, transform_polygon(obj_pose, fp.as_array())):
                return True, checks
        for verts in self._static:
            checks += 1
            if sat_overlap(ego_poly, verts):
                return True, checks
        return False, checks


Oracle = Callable[[OccupancyQuery, float], tuple[bool, int]]


def _goal_center(goal: Footprint) -> tuple[float, float]:
    arr = goal.as_array()
    return (float(arr[:, 0].mean()), float(arr[:, 1].mean()))


def _dist_to_goal(pose: Pose2, goal: Footprint) -> float:
    """Euclidean distance from the pose position to the goal polygon."""
    if goal.contains(pose.x, pose.y):
        return 0.0
    verts = goal.vertices
    best = math.inf
    for i in range(len(verts)):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % len(verts)]
        ex, ey = bx - ax, by - ay
        denom = ex * ex + ey * ey
        u = ((pose.x - ax) * ex + (pose.y - ay) * ey) / denom if denom > 0 else 0.0
        u = min(max(u, 0.0), 1.0)
        best = min(best, math.hypot(pose.x - (ax + u * ex), pose.y - (ay + u * ey)))
    return best


class _EpisodeContext:
    """Shared state for one planning episode: origin frame, logging, checks."""

    def __init__(
        self,
        spec: PlannerSpec,
        instance: ScenarioInstance,
        oracle: Oracle,
        origin: Pose2,
        t0: float,
        log: QueryLog,
    ) -> None:
        self.spec = spec
        self.instance = instance
        self.oracle = oracle
        self.origin = origin
        self.t0 = t0
        self.log = log

    def blocked(self, world_pose: Pose2, tau: float) -> bool:
        """One occupancy query; out-of-workspace poses are blocked without a query."""
        ws = self.instance.workspace
        if not ws.contains(world_pose.x, world_pose.y):
            return True
        query = OccupancyQuery(
            pose=se2_relative(self.origin, world_pose),
            tau=tau,
            env=self.instance.env,
            ego_world_pose=self.origin,
        )
        hit, checks = self.oracle(query, self.t0 + query.tau)
        self.log.append(query, checks)
        return hit

    def edge_free(self, samples: list[tuple[float, Pose2]]) -> bool:
        for tau, pose in samples:
            if self.blocked(pose, tau):
                return False
        return True


def _arc_samples(
    pose: Pose2, v: float, curvature: float, t_start: float, duration: float, check_dt: float
) -> list[tuple[float, Pose2]]:
    """Poses along a constant-curvature arc, sampled every check_dt."""
    samples = []
    n = max(1, int(round(duration / check_dt)))
    dt = duration / n
    cur = pose
    for i in range(n):
        cur, _ = euler_step(cur, v, 0.0, curvature, dt, math.inf)
        samples.append((t_start + (i + 1) * dt, cur))
    return samples


def _lattice_curvatures(limits: DynamicsLimits) -> list[float]:
    kappa = limits.max_curvature
    if not math.isfinite(kappa):
        kappa = 0.25  # unbounded curvature: pick a gentle default arc
    return [0.0, kappa, -kappa, kappa / 2.0, -kappa / 2.0]


def _lattice_episode(
    ctx: _EpisodeContext, body: RobotBody, v_cruise: float
) -> Optional[list[tuple[float, Pose2]]]:
    """Best-first expansion of the full primitive tree up to the horizon.

    The whole feasible tree is expanded (subject to the budget) rather than
    stopping at the first goal node, so the query set of a shorter horizon is
    an exact subset of a longer one on the same episode.
    """
    spec = ctx.spec
    depth_max = int(round(spec.horizon_s / spec.primitive_dt_s))
    curvatures = _lattice_curvatures(body.limits)
    goal = ctx.instance.goal

    # node: (pose, depth, samples-from-root, primitive word)
    root = (ctx.origin, 0, [], ())
    heap: list[tuple[float, int, tuple]] = []
    counter = 0
    heapq.heappush(heap, (0.0, counter, root))
    goal_hits: list[tuple[float, tuple[int, ...], list[tuple[float, Pose2]]]] = []
    best_leaf: Optional[tuple[float, tuple[int, ...], list[tuple[float, Pose2]]]] = None
    expansions = 0

    while heap and expansions < spec.budget:
        _, _, (pose, depth, samples, word) = heapq.heappop(heap)
        expansions += 1
        if depth >= depth_max:
            continue
        t_node = depth * spec.primitive_dt_s
        for prim_idx, kappa in enumerate(curvatures):
            edge = _arc_samples(pose, v_cruise, kappa, t_node, spec.primitive_dt_s, spec.check_dt_s)
            if not ctx.edge_free(edge):
                continue
            child_samples = samples + edge
            child_word = word + (prim_idx,)
            child_pose = edge[-1][1]
            hit = next(((tau, p) for tau, p in edge if goal.contains(p.x, p.y)), None)
            if hit is not None:
                goal_hits.append((hit[0], child_word, child_samples))
            h = _dist_to_goal(child_pose, goal) / max(v_cruise, 1e-9)
            leaf_key = (h, child_word, child_samples)
            if best_leaf is None or (h, child_word) < (best_leaf[0], best_leaf[1]):
                best_leaf = leaf_key
            counter += 1
            g = (depth + 1) * spec.primitive_dt_s
            heapq.heappush(heap, (g + h, counter, (child_pose, depth + 1, child_samples, child_word)))

    if goal_hits:
        goal_hits.sort(key=lambda e: (e[0], e[1]))
        return goal_hits[0][2]
    if best_leaf is None:
        return None
    return best_leaf[2]


def _rrt_episode(
    ctx: _EpisodeContext, body: RobotBody, v_cruise: float, rng: np.random.Generator
) -> Optional[list[tuple[float, Pose2]]]:
    """Control-sampling tree search; fixed RNG draws per iteration."""
    spec = ctx.spec
    ws = ctx.instance.workspace
    goal = ctx.instance.goal
    gx, gy = _goal_center(goal)
    limits = body.limits
    kappa_max = limits.max_curvature if math.isfinite(limits.max_curvature) else 0.25

    # node: (pose, v, t, parent_idx, samples_from_parent)
    nodes: list[tuple[Pose2, float, float, int, list[tuple[float, Pose2]]]] = [
        (ctx.origin, v_cruise, 0.0, -1, [])
    ]
    for _ in range(spec.budget):
        coin = rng.uniform()
        xy = rng.uniform(size=2)
        controls = rng.uniform(-1.0, 1.0, size=(spec.steer_samples, 2))
        if coin < spec.goal_bias:
            tx, ty = gx, gy
        else:
            tx = ws.x_min + xy[0] * (ws.x_max - ws.x_min)
            ty = ws.y_min + xy[1] * (ws.y_max - ws.y_min)
        expandable = [i for i, n in enumerate(nodes) if n[2] + spec.primitive_dt_s <= spec.horizon_s + 1e-9]
        if not expandable:
            continue
        near = min(expandable, key=lambda i: (math.hypot(nodes[i][0].x - tx, nodes[i][0].y - ty), i))
        pose, v, t, _, _ = nodes[near]
        best_ctrl = None
        best_d = math.inf
        for raw_a, raw_k in controls:
            accel = raw_a * (limits.a_max if raw_a >= 0 else limits.d_max)
            kappa = raw_k * kappa_max
            p, nv = pose, v
            n_sub = max(1, int(round(spec.primitive_dt_s / spec.check_dt_s)))
            for _s in range(n_sub):
                p, nv = euler_step(p, nv, accel, kappa, spec.primitive_dt_s / n_sub, limits.v_max)
            d = math.hypot(p.x - tx, p.y - ty)
            if d < best_d:
                best_d = d
                best_ctrl = (accel, kappa)
        accel, kappa = best_ctrl
        n_sub = max(1, int(round(spec.primitive_dt_s / spec.check_dt_s)))
        dt = spec.primitive_dt_s / n_sub
        p, nv = pose, v
        edge = []
        for i in range(n_sub):
            p, nv = euler_step(p, nv, accel, kappa, dt, limits.v_max)
            edge.append((t + (i + 1) * dt, p))
        if ctx.edge_free(edge):
            nodes.append((p, nv, t + spec.primitive_dt_s, near, edge))

    if len(nodes) == 1:
        return None
    best = min(
        range(len(nodes)),
        key=lambda i: (
            0.0 if goal.contains(nodes[i][0].x, nodes[i][0].y) else 1.0,
            nodes[i][2] if goal.contains(nodes[i][0].x, nodes[i][0].y)
            else _dist_to_goal(nodes[i][0], goal),
            i,
        ),
    )
    if best == 0:
        return None
    samples: list[tuple[float, Pose2]] = []
    chain = []
    i = best
    while i != -1:
        chain.append(i)
        i = nodes[i][3]
    for i in reversed(chain):
        samples.extend(nodes[i][4])
    return samples


def _dubins_edge_samples(
    path: dubins.DubinsPath, length: float, t_offset: float, v_cruise: float, ds: float
) -> list[tuple[float, Pose2]]:
    n = max(1, int(math.ceil(length / ds)))
    out = []
    for i in range(1, n + 1):
        s = min(length, i * length / n)
        out.append((t_offset + s / v_cruise, path.sample(s)))
    return out


def _rrt_star_episode(
    ctx: _EpisodeContext, body: RobotBody, v_cruise: float, rng: np.random.Generator
) -> Optional[list[tuple[float, Pose2]]]:
    """Optimizing tree search with Dubins steering and rewiring."""
    spec = ctx.spec
    ws = ctx.instance.workspace
    goal = ctx.instance.goal
    gx, gy = _goal_center(goal)
    rho = max(body.limits.turn_radius_min, 0.5)
    if not math.isfinite(rho):
        rho = 1e6  # effectively straight-line steering
    max_len = v_cruise * spec.horizon_s
    steer_len = v_cruise * spec.primitive_dt_s
    check_ds = v_cruise * spec.check_dt_s

    # node: [pose, cost (arclength from root), parent_idx]
    nodes: list[list] = [[ctx.origin, 0.0, -1]]

    def edge_ok(p0: Pose2, p1: Pose2, t_offset_len: float) -> Optional[dubins.DubinsPath]:
        path = dubins.shortest_path(p0, p1, rho)
        if t_offset_len + path.length > max_len + 1e-9:
            return None
        samples = _dubins_edge_samples(path, path.length, t_offset_len / v_cruise, v_cruise, check_ds)
        if not ctx.edge_free(samples):
            return None
        return path

    for _ in range(spec.budget):
        coin = rng.uniform()
        sample3 = rng.uniform(size=3)
        if coin < spec.goal_bias:
            target = Pose2(gx, gy, ctx.origin.theta)
        else:
            target = Pose2(
                ws.x_min + sample3[0] * (ws.x_max - ws.x_min),
                ws.y_min + sample3[1] * (ws.y_max - ws.y_min),
                -math.pi + sample3[2] * (2 * math.pi),
            )
        near = min(
            range(len(nodes)),
            key=lambda i: (math.hypot(nodes[i][0].x - target.x, nodes[i][0].y - target.y), i),
        )
        steer_path = dubins.shortest_path(nodes[near][0], target, rho)
        new_pose = steer_path.sample(min(steer_len, steer_path.length))

        # choose the cheapest collision-free parent among nearby nodes
        neighbor_idx = [
            i
            for i in range(len(nodes))
            if math.hypot(nodes[i][0].x - new_pose.x, nodes[i][0].y - new_pose.y)
            <= spec.rewire_radius_m
        ] or [near]
        best_parent, best_cost, best_path = -1, math.inf, None
        for i in sorted(neighbor_idx):
            path = edge_ok(nodes[i][0], new_pose, nodes[i][1])
            if path is not None and nodes[i][1] + path.length < best_cost:
                best_parent, best_cost = i, nodes[i][1] + path.length
                best_path = path
        if best_path is None:
            continue
        new_idx = len(nodes)
        nodes.append([new_pose, best_cost, best_parent])

        # rewire neighbors through the new node when it is cheaper
        for i in neighbor_idx:
            if i == best_parent:
                continue
            path = edge_ok(new_pose, nodes[i][0], best_cost)
            if path is not None and best_cost + path.length + 1e-9 < nodes[i][1]:
                nodes[i][1] = best_cost + path.length
                nodes[i][2] = new_idx

    if len(nodes) == 1:
        return None
    best = min(
        range(1, len(nodes)),
        key=lambda i: (
            0.0 if goal.contains(nodes[i][0].x, nodes[i][0].y) else 1.0,
            nodes[i][1] if goal.contains(nodes[i][0].x, nodes[i][0].y)
            else _dist_to_goal(nodes[i][0], goal),
            i,
        ),
    )
    chain = []
    i = best
    while i != -1:
        chain.append(i)
        i = nodes[i][2]
    chain.reverse()
    samples: list[tuple[float, Pose2]] = []
    for parent, child in zip(chain, chain[1:]):
        path = dubins.shortest_path(nodes[parent][0], nodes[child][0], rho)
        samples.extend(
            _dubins_edge_samples(path, path.length, nodes[parent][1] / v_cruise, v_cruise, check_ds)
        )
    return samples


def plan_episode(
    spec: PlannerSpec,
    body: RobotBody,
    instance: ScenarioInstance,
    oracle: Oracle,
    origin: Pose2,
    t0: float,
    episode_idx: int,
    log: QueryLog,
) -> Optional[list[tuple[float, Pose2]]]:
    """One planning episode from ``origin``; returns (tau, world pose) samples."""
    ctx = _EpisodeContext(spec, instance, oracle, origin, t0, log)
    v_cruise = min(instance.nominal_speed, body.limits.v_max)
    if v_cruise <= 0.0:
        return None
    if spec.kind == "lattice_astar":
        return _lattice_episode(ctx, body, v_cruise)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(spec.seed, episode_idx)))
    if spec.kind == "rrt":
        return _rrt_episode(ctx, body, v_cruise, rng)
    return _rrt_star_episode(ctx, body, v_cruise, rng)


def plan(
    spec: PlannerSpec,
    body: RobotBody,
    instance: ScenarioInstance,
    oracle: Oracle,
) -> PlanResult:
    """Receding-horizon run on one scenario instance.

    Plans over the horizon, executes one replan period, and repeats until the
    goal polygon is entered, the timeout elapses, or progress stalls. Failures
    are outcomes, not exceptions.
    """
    log = QueryLog(instance_id=instance.id)
    v_cruise = min(instance.nominal_speed, body.limits.v_max)
    pose = instance.start
    if instance.goal.contains(pose.x, pose.y):
        return PlanResult([], log, "reached")

    trajectory: list[tuple[float, Pose2, float]] = [(0.0, pose, v_cruise)]
    t = 0.0
    episode_idx = 0
    stall_count = 0
    last_goal_dist = _dist_to_goal(pose, instance.goal)

    while t < spec.timeout_s:
        samples = plan_episode(spec, body, instance, oracle, pose, t, episode_idx, log)
        episode_idx += 1
        if not samples:
            return PlanResult(trajectory, log, "stuck")
        reached = False
        for tau, p in samples:
            if tau > spec.replan_period_s + 1e-9:
                break
            trajectory.append((t + tau, p, v_cruise))
            pose = p
            if instance.goal.contains(p.x, p.y):
                reached = True
                break
        if reached:
            return PlanResult(trajectory, log, "reached")
        t += spec.replan_period_s
        goal_dist = _dist_to_goal(pose, instance.goal)
        if goal_dist >= last_goal_dist - 0.01:
            stall_count += 1
            if stall_count >= 3:
                return PlanResult(trajectory, log, "stuck")
        else:
            stall_count = 0
        last_goal_dist = goal_dist

    return PlanResult(trajectory, log, "timeout")


def instance_seed(base_seed: int, instance_id: str) -> int:
    payload = repr((base_seed, instance_id)).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def run_task(
    spec: PlannerSpec,
    body: RobotBody,
    task: Task,
    classes: dict[str, ObjectClass],
) -> dict[str, PlanResult]:
    """Plan every instance of the task with a ground-truth oracle.

    Each instance runs with a seed derived from (spec.seed, instance id), so
    per-instance results do not depend on which task they are part of.
    """
    results = {}
    for instance in task.instances:
        oracle = GroundTruthOracle(instance, body, classes)
        inst_spec = dataclasses.replace(spec, seed=instance_seed(spec.seed, instance.id))
        results[instance.id] = plan(inst_spec, body, instance, oracle)
    return results


def task_queries(
    spec: PlannerSpec,
    body: RobotBody,
    task: Task,
    classes: dict[str, ObjectClass],
) -> set[OccupancyQuery]:
    """Union of per-instance deduplicated query logs over the task."""
    queries: set[OccupancyQuery] = set()
    for result in run_task(spec, body, task, classes).values():
        queries.update(result.log.deduped_queries())
    return queries


def average_speed(results: Sequence[PlanResult]) -> float:
    """Pooled average speed over executed trajectories; all runs must reach."""
    for r in results:
        if r.outcome != "reached":
            raise TaskInfeasibleError(f"instance outcome {r.outcome!r}; design infeasible")
    total_len = sum(r.path_length() for r in results)
    total_time = sum(r.elapsed() for r in results)
    if total_time <= 0.0:
        return 0.0
    return total_len / total_time
