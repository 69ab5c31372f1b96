import math

import pytest

from robodesign.dubins import shortest_path
from robodesign.geom import Footprint, Pose2, se2_compose
from robodesign.planner import (
    GroundTruthOracle,
    OccupancyQuery,
    PlannerSpec,
    PlanResult,
    QueryLog,
    RobotBody,
    TaskInfeasibleError,
    average_speed,
    parse_querylog_text,
    plan,
    plan_episode,
    run_task,
    task_queries,
)
from robodesign.world import (
    Appearance,
    DynamicsLimits,
    EnvCondition,
    ObjectClass,
    Prior,
    PriorRegion,
    ScenarioInstance,
    Task,
    Workspace,
)

ENV = EnvCondition("day", "dry")


def small_body(turn_radius=4.0):
    return RobotBody(
        id="bot",
        footprint=Footprint.from_box(2.4, 1.4),
        height_profile=((Footprint.from_box(2.4, 1.4), 1.4),),
        limits=DynamicsLimits(10.0, 2.0, 4.0, turn_radius),
        mount_points=(("roof", (0.0, 0.0, 1.6)),),
        payload_max=100.0,
        aux_power=500.0,
        driving_range=100000.0,
        fixed_cost=10000.0,
        op_cost=0.1,
    )


def car_class():
    app = Appearance(4.0, 1.8, 1.5, 0.5, "dark")
    return ObjectClass.build("car", DynamicsLimits(12.0, 2.0, 4.0, 5.0), [(app, 1.0)])


def corridor_instance(inst_id="c0", objects=(), goal_x=40.0, nominal=6.0):
    ws = Workspace(-5, 60, -6, 6)
    prior_poly = Footprint(((60, -6), (60, 6), (-5, 6), (-5, -6)))
    return ScenarioInstance(
        id=inst_id,
        workspace=ws,
        start=Pose2(0, 0, 0),
        goal=Footprint(
            ((goal_x + 3, -3), (goal_x + 3, 3), (goal_x - 3, 3), (goal_x - 3, -3))
        ),
        env=ENV,
        objects=tuple(objects),
        priors={"car": Prior((PriorRegion(prior_poly, -math.pi, math.pi),))},
        nominal_speed=nominal,
    )


def lattice_spec(horizon=1.0, seed=1, budget=4000, replan=0.5):
    return PlannerSpec(
        id="lat",
        kind="lattice_astar",
        horizon_s=horizon,
        replan_period_s=replan,
        budget=budget,
        seed=seed,
        primitive_dt_s=0.5,
    )


class TestDubins:
    def test_straight(self):
        p = shortest_path(Pose2(0, 0, 0), Pose2(5, 0, 0), 1.0)
        assert p.length == pytest.approx(5.0, abs=1e-9)

    @pytest.mark.parametrize(
        "q1",
        [
            Pose2(4, 3, 1.2),
            Pose2(-2, 5, -2.0),
            Pose2(0.5, 0.2, 3.0),
            Pose2(10, -1, 0.0),
        ],
    )
    def test_endpoint_matches(self, q1):
        q0 = Pose2(0.3, -0.7, 0.4)
        p = shortest_path(q0, q1, 1.5)
        end = p.sample(p.length)
        assert math.hypot(end.x - q1.x, end.y - q1.y) < 1e-6
        assert abs((end.theta - q1.theta + math.pi) % (2 * math.pi) - math.pi) < 1e-6

    def test_length_at_least_euclidean(self):
        q0, q1 = Pose2(0, 0, 0), Pose2(6, 2, 0.3)
        p = shortest_path(q0, q1, 2.0)
        assert p.length >= math.hypot(6, 2) - 1e-9


class TestBodyValidation:
    def test_mount_off_footprint(self):
        with pytest.raises(ValueError):
            RobotBody(
                id="bad",
                footprint=Footprint.from_box(2, 1),
                height_profile=(),
                limits=DynamicsLimits(5, 1, 1, 3),
                mount_points=(("far", (5.0, 0.0, 1.0)),),
                payload_max=10,
                aux_power=100,
                driving_range=1000,
                fixed_cost=1000,
                op_cost=0.1,
            )

    def test_no_mounts(self):
        with pytest.raises(ValueError):
            RobotBody(
                id="bad",
                footprint=Footprint.from_box(2, 1),
                height_profile=(),
                limits=DynamicsLimits(5, 1, 1, 3),
                mount_points=(),
                payload_max=10,
                aux_power=100,
                driving_range=1000,
                fixed_cost=1000,
                op_cost=0.1,
            )


class TestPlanCorridor:
    def test_reaches_and_queries_bounded(self):
        body = small_body()
        inst = corridor_instance()
        oracle = GroundTruthOracle(inst, body, {"car": car_class()})
        spec = lattice_spec()
        result = plan(spec, body, inst, oracle)
        assert result.outcome == "reached"
        v_bound = spec.horizon_s * body.limits.v_max + 1e-6
        for q, _ in result.log.records:
            assert math.hypot(q.pose.x, q.pose.y) <= v_bound
            assert 0.0 <= q.tau <= spec.horizon_s + 1e-9

    def test_goal_at_start(self):
        body = small_body()
        inst = corridor_instance(goal_x=0.0)
        oracle = GroundTruthOracle(inst, body, {"car": car_class()})
        result = plan(lattice_spec(), body, inst, oracle)
        assert result.outcome == "reached"
        assert result.trajectory == []
        assert result.log.records == []

    def test_determinism(self):
        body = small_body()
        inst = corridor_instance()
        spec = lattice_spec()
        runs = []
        for _ in range(2):
            oracle = GroundTruthOracle(inst, body, {"car": car_class()})
            runs.append(plan(spec, body, inst, oracle))
        assert runs[0].log.export_text() == runs[1].log.export_text()
        assert runs[0].trajectory == runs[1].trajectory

    @pytest.mark.parametrize("kind", ["rrt", "rrt_star"])
    def test_tree_planners_reach(self, kind):
        body = small_body()
        inst = corridor_instance(goal_x=25.0)
        oracle = GroundTruthOracle(inst, body, {"car": car_class()})
        spec = PlannerSpec(
            id=kind,
            kind=kind,
            horizon_s=2.0,
            replan_period_s=0.5,
            budget=120,
            seed=5,
            primitive_dt_s=0.5,
        )
        result = plan(spec, body, inst, oracle)
        assert result.outcome == "reached"

    def test_blocked_corridor_is_stuck_not_error(self):
        # a wall of static obstacles across the whole corridor
        wall = tuple(
            Footprint(((12.0, y), (13.0, y), (13.0, y + 2.0), (12.0, y + 2.0)))
            for y in (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0)
        )
        inst = corridor_instance()
        inst.workspace = Workspace(-5, 60, -6, 6, obstacles=wall)
        body = small_body()
        oracle = GroundTruthOracle(inst, body, {"car": car_class()})
        result = plan(lattice_spec(), body, inst, oracle)
        assert result.outcome in ("stuck", "timeout")


class TestQueryLog:
    def test_dedup_quantization(self):
        log = QueryLog("i0")
        q1 = OccupancyQuery(Pose2(1.00, 0, 0), 0.5, ENV, Pose2(0, 0, 0))
        q2 = OccupancyQuery(Pose2(1.01, 0, 0), 0.5, ENV, Pose2(0, 0, 0))  # same key
        q3 = OccupancyQuery(Pose2(1.30, 0, 0), 0.5, ENV, Pose2(0, 0, 0))
        for q in (q1, q2, q3):
            log.append(q, 1)
        deduped = log.deduped_queries()
        assert len(deduped) == 2
        assert q1 in deduped and q3 in deduped

    def test_export_roundtrip(self):
        body = small_body()
        inst = corridor_instance(goal_x=10.0)
        oracle = GroundTruthOracle(inst, body, {"car": car_class()})
        result = plan(lattice_spec(), body, inst, oracle)
        text = result.log.export_text()
        inst_id, queries = parse_querylog_text(text)
        assert inst_id == inst.id
        assert len(queries) == len(result.log.deduped_queries())


class TestTaskQueries:
    def make_task(self, n):
        instances = tuple(corridor_instance(f"i{k}", goal_x=20.0) for k in range(n))
        return Task(instances)

    def test_empty_task(self):
        assert task_queries(lattice_spec(), small_body(), Task(()), {"car": car_class()}) == set()

    def test_nested_tasks_nested_queries(self):
        body = small_body()
        classes = {"car": car_class()}
        spec = lattice_spec()
        big = self.make_task(3)
        small = Task(big.instances[:2])
        q_small = task_queries(spec, body, small, classes)
        q_big = task_queries(spec, body, big, classes)
        assert q_small <= q_big

    def test_single_instance_equals_log(self):
        body = small_body()
        classes = {"car": car_class()}
        spec = lattice_spec()
        task = self.make_task(1)
        qs = task_queries(spec, body, task, classes)
        results = run_task(spec, body, task, classes)
        assert qs == set(results["i0"].log.deduped_queries())


class TestBudgetPrefix:
    @pytest.mark.parametrize("kind", ["rrt", "rrt_star"])
    def test_episode_query_prefix(self, kind):
        # larger sampling budget on the same episode yields a query superset
        body = small_body()
        inst = corridor_instance(goal_x=30.0)
        classes = {"car": car_class()}

        def episode_queries(budget):
            oracle = GroundTruthOracle(inst, body, classes)
            spec = PlannerSpec(
                id=kind,
                kind=kind,
                horizon_s=2.0,
                replan_period_s=0.5,
                budget=budget,
                seed=11,
                primitive_dt_s=0.5,
            )
            log = QueryLog(inst.id)
            plan_episode(spec, body, inst, oracle, inst.start, 0.0, 0, log)
            return [q for q, _ in log.records]

        small_q = episode_queries(40)
        big_q = episode_queries(90)
        assert big_q[: len(small_q)] == small_q
        assert len(big_q) >= len(small_q)

    def test_lattice_horizon_nesting_per_episode(self):
        body = small_body()
        inst = corridor_instance(goal_x=40.0)
        classes = {"car": car_class()}

        def episode_queries(horizon):
            oracle = GroundTruthOracle(inst, body, classes)
            log = QueryLog(inst.id)
            plan_episode(
                lattice_spec(horizon=horizon), body, inst, oracle, inst.start, 0.0, 0, log
            )
            return {q for q, _ in log.records}

        assert episode_queries(1.0) <= episode_queries(2.0)


class TestAverageSpeed:
    def _result(self, length, elapsed, outcome="reached"):
        traj = [(0.0, Pose2(0, 0, 0), 1.0), (elapsed, Pose2(length, 0, 0), 1.0)]
        return PlanResult(traj, QueryLog("x"), outcome)

    def test_single(self):
        assert average_speed([self._result(10.0, 2.0)]) == pytest.approx(5.0)

    def test_pooled(self):
        r = [self._result(10.0, 2.0), self._result(30.0, 4.0)]
        assert average_speed(r) == pytest.approx(40.0 / 6.0)

    def test_failure_is_infeasible(self):
        with pytest.raises(TaskInfeasibleError):
            average_speed([self._result(10.0, 2.0, outcome="stuck")])
