"""Object classes, priors, scenarios and tasks, plus shared unicycle dynamics.

Scenario instances are concrete: object counts are drawn from per-class
Poisson distributions and poses are rejection-sampled into the class prior,
deterministically for a fixed seed. Tasks are ordered sets of instances and
downstream artifacts are unions over instances, which is what makes all the
task-monotonicity properties hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geom import Footprint, Pose2, footprints_overlap, wrap_angle

LIGHT_TOKENS = ("day", "night")
WEATHER_TOKENS = ("dry", "rain")
TONE_TOKENS = ("light", "dark")

SCHEMA_VERSION = 1
REJECTION_BUDGET = 10_000


class InfeasibleScenarioError(RuntimeError):
    """Raised when a scenario spec cannot be instantiated (empty prior, etc.)."""


@dataclass(frozen=True)
class DynamicsLimits:
    """Unicycle limits: top speed, accel/decel bounds, minimum turning radius.

    ``turn_radius_min`` may be ``math.inf`` to encode a straight-only class;
    ``v_max == 0`` encodes a stationary class.
    """

    v_max: float
    a_max: float
    d_max: float
    turn_radius_min: float

    def __post_init__(self) -> None:
        for name in ("v_max", "a_max", "d_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not (self.turn_radius_min >= 0.0):
            raise ValueError("turn_radius_min must be >= 0")

    @property
    def max_curvature(self) -> float:
        if self.turn_radius_min == 0.0:
            return math.inf
        return 1.0 / self.turn_radius_min


@dataclass(frozen=True)
class Appearance:
    length: float
    width: float
    height: float
    reflectivity: float
    tone: str

    def __post_init__(self) -> None:
        if min(self.length, self.width, self.height) <= 0.0:
            raise ValueError("appearance extents must be positive")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError("reflectivity must lie in [0, 1]")
        if self.tone not in TONE_TOKENS:
            raise ValueError(f"tone must be one of {TONE_TOKENS}")

    def footprint(self) -> Footprint:
        return Footprint.from_box(self.length, self.width)

    def size_factor(self) -> float:
        """Characteristic size in meters (cube root of the bounding volume)."""
        return (self.length * self.width * self.height) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ObjectClass:
    """An object class: dynamics, nominal footprint, weighted appearances."""

    id: str
    limits: DynamicsLimits
    footprint: Footprint
    appearance_choices: tuple[tuple[Appearance, float], ...]

    def __post_init__(self) -> None:
        if not self.appearance_choices:
            raise ValueError("object class needs at least one appearance")
        if any(w <= 0.0 for _, w in self.appearance_choices):
            raise ValueError("appearance weights must be positive")

    @classmethod
    def build(
        cls,
        id: str,
        limits: DynamicsLimits,
        appearance_choices: Sequence[tuple[Appearance, float]],
    ) -> "ObjectClass":
        """Nominal footprint is the worst-case box over the appearance choices."""
        length = max(a.length for a, _ in appearance_choices)
        width = max(a.width for a, _ in appearance_choices)
        return cls(id, limits, Footprint.from_box(length, width), tuple(appearance_choices))

    def appearance(self, idx: int) -> Appearance:
        return self.appearance_choices[idx][0]


@dataclass(frozen=True)
class EnvCondition:
    light: str
    weather: str

    def __post_init__(self) -> None:
        if self.light not in LIGHT_TOKENS:
            raise ValueError(f"light must be one of {LIGHT_TOKENS}")
        if self.weather not in WEATHER_TOKENS:
            raise ValueError(f"weather must be one of {WEATHER_TOKENS}")

    def as_tuple(self) -> tuple[str, str]:
        return (self.light, self.weather)


@dataclass(frozen=True)
class PriorRegion:
    """A convex world-frame polygon with a half-open heading interval."""

    polygon: Footprint
    heading_lo: float
    heading_hi: float

    def __post_init__(self) -> None:
        if not (-math.pi <= self.heading_lo < self.heading_hi <= math.pi):
            raise ValueError("heading interval must satisfy -pi <= lo < hi <= pi")

    def contains(self, q: Pose2) -> bool:
        if not (self.heading_lo <= q.theta < self.heading_hi):
            return False
        return self.polygon.contains(q.x, q.y)


@dataclass(frozen=True)
class Prior:
    regions: tuple[PriorRegion, ...]

    @classmethod
    def empty(cls) -> "Prior":
        return cls(())

    def is_empty(self) -> bool:
        return not self.regions


def in_prior(prior: Prior, q: Pose2) -> bool:
    """True iff some region polygon contains (x, y) with theta in its interval."""
    return any(region.contains(q) for region in prior.regions)


@dataclass(frozen=True)
class Workspace:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    obstacles: tuple[Footprint, ...] = ()

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("workspace rectangle must be nonempty")

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class ControlSegment:
    duration: float
    accel: float
    curvature: float


@dataclass(frozen=True)
class ScenarioObject:
    class_id: str
    appearance_idx: int
    pose: Pose2
    speed: float
    trace: tuple[ControlSegment, ...]


@dataclass
class ScenarioInstance:
    """A concrete scenario realization. Treated as immutable once built."""

    id: str
    workspace: Workspace
    start: Pose2
    goal: Footprint
    env: EnvCondition
    objects: tuple[ScenarioObject, ...]
    priors: dict[str, Prior]
    nominal_speed: float

    def prior_for(self, class_id: str) -> Prior:
        return self.priors.get(class_id, Prior.empty())


@dataclass(frozen=True)
class Task:
    """An ordered set of scenario instances; subset relations are meaningful."""

    instances: tuple[ScenarioInstance, ...]

    def __post_init__(self) -> None:
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError("task instances must have unique ids")

    def __len__(self) -> int:
        return len(self.instances)

    def instance_ids(self) -> frozenset[str]:
        return frozenset(inst.id for inst in self.instances)

    def subset(self, n: int) -> "Task":
        return Task(self.instances[:n])


@dataclass(frozen=True)
class ClassSpawn:
    """Per-class sampling parameters for a scenario spec."""

    class_id: str
    poisson_lambda: float
    speed_range: tuple[float, float] = (0.0, 0.0)
    trace_segments: int = 1
    trace_duration: float = 10.0
    accel_scale: float = 0.0
    curvature_scale: float = 0.0

    def __post_init__(self) -> None:
        if self.poisson_lambda < 0.0:
            raise ValueError("poisson_lambda must be >= 0")
        lo, hi = self.speed_range
        if lo > hi or lo < 0.0:
            raise ValueError("speed_range must satisfy 0 <= lo <= hi")


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    workspace: Workspace
    start: Pose2
    goal: Footprint
    env: EnvCondition
    nominal_speed: float
    spawns: tuple[ClassSpawn, ...]
    priors: tuple[tuple[str, Prior], ...]
    clearance: float = 2.0


def euler_step(
    pose: Pose2, speed: float, accel: float, curvature: float, dt: float, v_max: float
) -> tuple[Pose2, float]:
    """One unvalidated Euler step of the unicycle model; dt may be negative.

    Position advances with the heading at the start of the step.
    """
    new_pose = Pose2(
        pose.x + speed * math.cos(pose.theta) * dt,
        pose.y + speed * math.sin(pose.theta) * dt,
        pose.theta + speed * curvature * dt,
    )
    new_speed = min(max(speed + accel * dt, 0.0), v_max)
    return new_pose, new_speed


def step(
    limits: DynamicsLimits,
    state: tuple[Pose2, float],
    control: tuple[float, float],
    dt: float,
) -> tuple[Pose2, float]:
    """Validated forward Euler step under the given dynamics limits."""
    pose, speed = state
    accel, curvature = control
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not (-limits.d_max - 1e-12 <= accel <= limits.a_max + 1e-12):
        raise ValueError(f"accel {accel} outside [-{limits.d_max}, {limits.a_max}]")
    if abs(curvature) > limits.max_curvature + 1e-12:
        raise ValueError(f"curvature {curvature} exceeds max {limits.max_curvature}")
    return euler_step(pose, speed, accel, curvature, dt, limits.v_max)


def rollout_trace(
    limits: DynamicsLimits,
    pose: Pose2,
    speed: float,
    trace: Sequence[ControlSegment],
    dt: float,
    t_end: float,
) -> list[tuple[float, Pose2]]:
    """Sampled world poses at multiples of dt from 0 to t_end inclusive."""
    samples = [(0.0, pose)]
    seg_iter = list(trace)
    seg_idx = 0
    seg_left = seg_iter[0].duration if seg_iter else math.inf
    t = 0.0
    cur_pose, cur_speed = pose, speed
    n_steps = int(round(t_end / dt))
    for _ in range(n_steps):
        if seg_iter:
            while seg_left <= 0.0 and seg_idx + 1 < len(seg_iter):
                seg_idx += 1
                seg_left = seg_iter[seg_idx].duration
            seg = seg_iter[seg_idx]
            accel, curv = seg.accel, seg.curvature
            seg_left -= dt
        else:
            accel, curv = 0.0, 0.0
        cur_pose, cur_speed = euler_step(cur_pose, cur_speed, accel, curv, dt, limits.v_max)
        t += dt
        samples.append((t, cur_pose))
    return samples


def _sample_pose_in_region(
    rng: np.random.Generator, region: PriorRegion
) -> Optional[Pose2]:
    xs = [v[0] for v in region.polygon.vertices]
    ys = [v[1] for v in region.polygon.vertices]
    x = rng.uniform(min(xs), max(xs))
    y = rng.uniform(min(ys), max(ys))
    theta = rng.uniform(region.heading_lo, region.heading_hi)
    if region.polygon.contains(x, y):
        return Pose2(x, y, theta)
    return None


def sample_instance(
    spec: ScenarioSpec, seed: int, classes: dict[str, ObjectClass]
) -> ScenarioInstance:
    """Draw a concrete instance; deterministic for a fixed seed.

    Object counts are Poisson per class and poses are rejection-sampled into
    the class prior, keeping a clearance margin from the ego start and from
    already-placed objects.
    """
    rng = np.random.default_rng(seed)
    priors = dict(spec.priors)
    objects: list[ScenarioObject] = []
    ego_fp = Footprint.from_box(5.0, 2.2)  # generous keep-out around the start

    for spawn in spec.spawns:
        if spawn.class_id not in classes:
            raise InfeasibleScenarioError(f"unknown class id {spawn.class_id!r}")
        cls = classes[spawn.class_id]
        count = int(rng.poisson(spawn.poisson_lambda))
        prior = priors.get(spawn.class_id, Prior.empty())
        if count > 0 and prior.is_empty():
            raise InfeasibleScenarioError(
                f"class {spawn.class_id!r} has an empty prior but lambda > 0"
            )
        for _ in range(count):
            placed = False
            for _attempt in range(REJECTION_BUDGET):
                weights = np.array([r.polygon.area() for r in prior.regions])
                region = prior.regions[
                    int(rng.choice(len(prior.regions), p=weights / weights.sum()))
                ]
                pose = _sample_pose_in_region(rng, region)
                if pose is None:
                    continue
                fp = cls.footprint
                if footprints_overlap(fp, pose, ego_fp, spec.start):
                    continue
                if any(
                    footprints_overlap(fp, pose, classes[o.class_id].footprint, o.pose)
                    for o in objects
                ):
                    continue
                app_weights = np.array([w for _, w in cls.appearance_choices])
                app_idx = int(rng.choice(len(cls.appearance_choices), p=app_weights / app_weights.sum()))
                speed = rng.uniform(*spawn.speed_range) if cls.limits.v_max > 0 else 0.0
                speed = min(speed, cls.limits.v_max)
                segs = []
                seg_dur = spawn.trace_duration / max(spawn.trace_segments, 1)
                for _s in range(max(spawn.trace_segments, 1)):
                    accel = rng.uniform(-1.0, 1.0) * spawn.accel_scale * cls.limits.a_max
                    max_curv = cls.limits.max_curvature
                    curv_cap = 0.0 if not math.isfinite(max_curv) else max_curv
                    if math.isfinite(max_curv):
                        curv = rng.uniform(-1.0, 1.0) * spawn.curvature_scale * curv_cap
                    else:
                        rng.uniform(-1.0, 1.0)  # keep the stream aligned
                        curv = 0.0
                    segs.append(ControlSegment(seg_dur, accel, curv))
                objects.append(
                    ScenarioObject(spawn.class_id, app_idx, pose, speed, tuple(segs))
                )
                placed = True
                break
            if not placed:
                raise InfeasibleScenarioError(
                    f"rejection budget exhausted placing class {spawn.class_id!r}"
                )

    return ScenarioInstance(
        id=f"{spec.id}-s{seed}",
        workspace=spec.workspace,
        start=spec.start,
        goal=spec.goal,
        env=spec.env,
        objects=tuple(objects),
        priors=priors,
        nominal_speed=spec.nominal_speed,
    )


# --- JSON serialization -----------------------------------------------------
#
# Field names in files carry explicit units (suffix _m, _mps, _rad, ...); see
# docs/formats.md for the documented schema.


def _pose_to_dict(p: Pose2) -> dict:
    return {"x_m": p.x, "y_m": p.y, "theta_rad": p.theta}


def _pose_from_dict(d: dict) -> Pose2:
    return Pose2(d["x_m"], d["y_m"], d["theta_rad"])


def _footprint_to_dict(f: Footprint) -> dict:
    return {"vertices_m": [list(v) for v in f.vertices]}


def _footprint_from_dict(d: dict) -> Footprint:
    return Footprint(tuple((v[0], v[1]) for v in d["vertices_m"]))


def limits_to_dict(l: DynamicsLimits) -> dict:
    return {
        "v_max_mps": l.v_max,
        "a_max_mps2": l.a_max,
        "d_max_mps2": l.d_max,
        "turn_radius_min_m": None if math.isinf(l.turn_radius_min) else l.turn_radius_min,
    }


def limits_from_dict(d: dict) -> DynamicsLimits:
    r = d["turn_radius_min_m"]
    return DynamicsLimits(
        d["v_max_mps"], d["a_max_mps2"], d["d_max_mps2"], math.inf if r is None else r
    )


def appearance_to_dict(a: Appearance) -> dict:
    return {
        "length_m": a.length,
        "width_m": a.width,
        "height_m": a.height,
        "reflectivity": a.reflectivity,
        "tone": a.tone,
    }


def appearance_from_dict(d: dict) -> Appearance:
    return Appearance(d["length_m"], d["width_m"], d["height_m"], d["reflectivity"], d["tone"])


def object_class_to_dict(c: ObjectClass) -> dict:
    return {
        "id": c.id,
        "limits": limits_to_dict(c.limits),
        "footprint": _footprint_to_dict(c.footprint),
        "appearances": [
            {"appearance": appearance_to_dict(a), "weight": w}
            for a, w in c.appearance_choices
        ],
    }


def object_class_from_dict(d: dict) -> ObjectClass:
    return ObjectClass(
        d["id"],
        limits_from_dict(d["limits"]),
        _footprint_from_dict(d["footprint"]),
        tuple(
            (appearance_from_dict(e["appearance"]), e["weight"]) for e in d["appearances"]
        ),
    )


def _prior_to_dict(p: Prior) -> dict:
    return {
        "regions": [
            {
                "polygon": _footprint_to_dict(r.polygon),
                "heading_lo_rad": r.heading_lo,
                "heading_hi_rad": r.heading_hi,
            }
            for r in p.regions
        ]
    }


def _prior_from_dict(d: dict) -> Prior:
    return Prior(
        tuple(
            PriorRegion(
                _footprint_from_dict(r["polygon"]), r["heading_lo_rad"], r["heading_hi_rad"]
            )
            for r in d["regions"]
        )
    )


def instance_to_dict(inst: ScenarioInstance) -> dict:
    return {
        "id": inst.id,
        "workspace": {
            "x_min_m": inst.workspace.x_min,
            "x_max_m": inst.workspace.x_max,
            "y_min_m": inst.workspace.y_min,
            "y_max_m": inst.workspace.y_max,
            "obstacles": [_footprint_to_dict(o) for o in inst.workspace.obstacles],
        },
        "start": _pose_to_dict(inst.start),
        "goal": _footprint_to_dict(inst.goal),
        "env": {"light": inst.env.light, "weather": inst.env.weather},
        "objects": [
            {
                "class_id": o.class_id,
                "appearance_idx": o.appearance_idx,
                "pose": _pose_to_dict(o.pose),
                "speed_mps": o.speed,
                "trace": [
                    {"duration_s": s.duration, "accel_mps2": s.accel, "curvature_per_m": s.curvature}
                    for s in o.trace
                ],
            }
            for o in inst.objects
        ],
        "priors": {cid: _prior_to_dict(p) for cid, p in sorted(inst.priors.items())},
        "nominal_speed_mps": inst.nominal_speed,
    }


def instance_from_dict(d: dict) -> ScenarioInstance:
    ws = d["workspace"]
    return ScenarioInstance(
        id=d["id"],
        workspace=Workspace(
            ws["x_min_m"],
            ws["x_max_m"],
            ws["y_min_m"],
            ws["y_max_m"],
            tuple(_footprint_from_dict(o) for o in ws["obstacles"]),
        ),
        start=_pose_from_dict(d["start"]),
        goal=_footprint_from_dict(d["goal"]),
        env=EnvCondition(d["env"]["light"], d["env"]["weather"]),
        objects=tuple(
            ScenarioObject(
                o["class_id"],
                o["appearance_idx"],
                _pose_from_dict(o["pose"]),
                o["speed_mps"],
                tuple(
                    ControlSegment(s["duration_s"], s["accel_mps2"], s["curvature_per_m"])
                    for s in o["trace"]
                ),
            )
            for o in d["objects"]
        ),
        priors={cid: _prior_from_dict(p) for cid, p in d["priors"].items()},
        nominal_speed=d["nominal_speed_mps"],
    )


def task_to_dict(task: Task) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "task",
        "instances": [instance_to_dict(i) for i in task.instances],
    }


def task_from_dict(d: dict) -> Task:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported task schema version: {d.get('schema_version')}")
    return Task(tuple(instance_from_dict(e) for e in d["instances"]))
