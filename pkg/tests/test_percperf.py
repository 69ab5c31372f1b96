import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robodesign.geom import CellSet, Footprint, PolarGridSpec, Pose2
from robodesign.percperf import (
    LogisticCoeffs,
    MountedPerceptionPipeline,
    PerceptionPipeline,
    PerfCalib,
    VisibilityReport,
    build_coverage_set,
    cast_rays,
    class_coverage,
    coverage_set_from_dict,
    coverage_set_to_dict,
    detection_features,
    intersect_ray_prism_reference,
    mppcc,
    ppp,
    ray_prism_entries,
    wilson_interval,
)
from robodesign.planner import RobotBody
from robodesign.world import Appearance, DynamicsLimits, EnvCondition, ObjectClass

DAY = EnvCondition("day", "dry")
NIGHT = EnvCondition("night", "dry")


def zero_coeffs(bias=0.0, **kw):
    base = dict(bias=bias, dist=0.0, bearing=0.0, visibility=0.0, hits=0.0, night=0.0, rain=0.0, size=0.0)
    base.update(kw)
    return LogisticCoeffs(**base)


def perfect_calib():
    return PerfCalib(zero_coeffs(bias=-1e9), zero_coeffs(bias=-1e9), math.inf)


def make_pipeline(calib=None, fov_h=2 * math.pi, fov_v=0.6, range_max=30.0, n_az=128, n_el=8):
    return PerceptionPipeline(
        id="sensor",
        sensor_kind="lidar",
        fov_h=fov_h,
        fov_v=fov_v,
        range_max=range_max,
        n_az=n_az,
        n_el=n_el,
        price=1000.0,
        mass=1.0,
        power=10.0,
        detector_flops=20.0,
        calib=calib or perfect_calib(),
    )


def flat_roof_body(half_len=1.2, half_wid=0.8, roof_h=1.4):
    fp = Footprint.from_box(2 * half_len, 2 * half_wid)
    return RobotBody(
        id="roofed",
        footprint=fp,
        height_profile=((fp, roof_h),),
        limits=DynamicsLimits(10, 2, 4, 4),
        mount_points=(("roof", (0.0, 0.0, 1.8)), ("nose", (half_len, 0.0, 0.6))),
        payload_max=100,
        aux_power=500,
        driving_range=1e5,
        fixed_cost=1e4,
        op_cost=0.1,
    )


def target_app(length=1.0, width=1.0, height=1.0):
    return Appearance(length, width, height, 0.5, "dark")


class TestRayPrism:
    def test_simple_forward_hit(self):
        poly = Footprint.from_box(2.0, 2.0).transformed(Pose2(5, 0, 0))
        dirs = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        t = ray_prism_entries(np.array([0.0, 0.0, 0.5]), dirs, poly, 0.0, 1.0)
        assert t[0] == pytest.approx(4.0)
        assert math.isinf(t[1]) and math.isinf(t[2])

    def test_above_prism_misses_horizontally(self):
        poly = Footprint.from_box(2.0, 2.0).transformed(Pose2(5, 0, 0))
        dirs = np.array([[1.0, 0.0, 0.0]])
        t = ray_prism_entries(np.array([0.0, 0.0, 2.0]), dirs, poly, 0.0, 1.0)
        assert math.isinf(t[0])

    def test_downward_ray_hits_top(self):
        poly = Footprint.from_box(2.0, 2.0).transformed(Pose2(2, 0, 0))
        d = np.array([[1.0, 0.0, -0.5]])
        d = d / np.linalg.norm(d)
        t = ray_prism_entries(np.array([0.0, 0.0, 2.0]), d, poly, 0.0, 1.0)
        # z reaches 1.0 after dropping 1.0: t = 1.0 / (0.5/norm) = norm * 2
        assert np.isfinite(t[0])
        p = np.array([0.0, 0.0, 2.0]) + t[0] * d[0]
        assert p[2] == pytest.approx(1.0)

    @given(
        st.floats(-3, 3),
        st.floats(-3, 3),
        st.floats(0.3, 3.0),
        st.floats(-1.0, 1.0),
        st.floats(-1.0, 1.0),
        st.floats(-0.6, 0.6),
    )
    def test_fast_matches_reference(self, px, py, h, dx, dy, dz):
        # the vectorized interval clipper and the face-enumeration oracle agree
        norm = math.sqrt(dx * dx + dy * dy + dz * dz)
        if norm < 1e-3:
            return
        poly = Footprint.from_box(1.6, 1.0).transformed(Pose2(px, py, 0.4))
        origin = np.array([0.0, 0.0, 1.5])
        d = np.array([dx, dy, dz]) / norm
        fast = ray_prism_entries(origin, d[None, :], poly, 0.0, h)[0]
        ref = intersect_ray_prism_reference(origin, d, poly, 0.0, h)
        if math.isinf(fast) or math.isinf(ref):
            assert math.isinf(fast) == math.isinf(ref)
        else:
            assert fast == pytest.approx(ref, abs=1e-7)


class TestCastRays:
    def test_unobstructed_target_fully_visible(self):
        body = flat_roof_body()
        mpp = MountedPerceptionPipeline(make_pipeline(), body, "roof", 0.0, 0.0)
        # far enough that no roof shadow interferes, close enough for rays
        vis = cast_rays(mpp, body, target_app().footprint(), Pose2(15, 0, 0), 2.0)
        assert vis.in_fov
        assert vis.hit_count > 0
        assert vis.visible_fraction == pytest.approx(1.0)

    def test_total_occlusion_behind_tall_wall(self):
        fp = Footprint.from_box(2.4, 1.6)
        wall = Footprint.from_box(0.4, 3.0)
        body = RobotBody(
            id="walled",
            footprint=fp,
            height_profile=((wall, 5.0),),  # wall taller than the mount
            limits=DynamicsLimits(10, 2, 4, 4),
            mount_points=(("rear", (-1.0, 0.0, 1.2)),),
            payload_max=100,
            aux_power=500,
            driving_range=1e5,
            fixed_cost=1e4,
            op_cost=0.1,
        )
        pipeline = make_pipeline(fov_h=1.2, fov_v=0.8, n_az=24, n_el=12)
        mpp = MountedPerceptionPipeline(pipeline, body, "rear", 0.0, 0.0)
        vis = cast_rays(mpp, body, target_app().footprint(), Pose2(8, 0, 0), 1.5)
        assert vis.hit_count == 0
        assert vis.visible_fraction == 0.0
        assert vis.in_fov  # it would be visible with the body removed

    def test_out_of_range_not_in_fov(self):
        body = flat_roof_body()
        mpp = MountedPerceptionPipeline(make_pipeline(range_max=10.0), body, "roof", 0.0, 0.0)
        vis = cast_rays(mpp, body, target_app().footprint(), Pose2(25, 0, 0), 2.0)
        assert not vis.in_fov and vis.hit_count == 0

    def test_roof_blind_ring_radius(self):
        # similar triangles over the roof edge: targets of height h_t become
        # visible beyond half_len * (h - h_t) / (h - h_roof)
        half_len, roof_h, mount_h, h_t = 1.2, 1.4, 1.8, 1.0
        body = flat_roof_body(half_len=half_len, roof_h=roof_h)
        pipeline = make_pipeline(fov_v=1.4, n_az=256, n_el=96)
        mpp = MountedPerceptionPipeline(pipeline, body, "roof", 0.0, 0.0)
        blind = half_len * (mount_h - h_t) / (mount_h - roof_h)
        # radially thin but wide target so azimuth rays cannot straddle it
        thin = Footprint.from_box(0.05, 1.2)
        near = cast_rays(mpp, body, thin, Pose2(blind * 0.8, 0, 0), h_t)
        far = cast_rays(mpp, body, thin, Pose2(blind * 1.6, 0, 0), h_t)
        assert near.hit_count == 0
        assert far.hit_count > 0


class TestPpp:
    def test_no_hits_forces_undetectable(self):
        out = ppp(Pose2(5, 0, 0), target_app(), make_pipeline(), DAY, VisibilityReport(0, 0.0, True))
        assert out == ((1.0, 1.0), (0.0, 0.0))
        out = ppp(Pose2(5, 0, 0), target_app(), make_pipeline(), DAY, VisibilityReport(0, 0.0, False))
        assert out == ((1.0, 1.0), (0.0, 0.0))

    def test_logistic_identity_at_zero_bias(self):
        calib = PerfCalib(zero_coeffs(bias=0.0), zero_coeffs(bias=-2.0), math.inf)
        pipeline = make_pipeline(calib=calib)
        (fnr_lo, fnr_hi), _ = ppp(
            Pose2(5, 0, 0), target_app(), pipeline, DAY, VisibilityReport(10, 1.0, True)
        )
        assert fnr_lo == pytest.approx(0.5)
        assert fnr_hi == pytest.approx(0.5)

    def test_distance_coefficient_monotone(self):
        calib = PerfCalib(zero_coeffs(bias=-3.0, dist=0.1), zero_coeffs(bias=-3.0), 200.0)
        pipeline = make_pipeline(calib=calib)
        vis = VisibilityReport(10, 1.0, True)
        (_, hi_near), _ = ppp(Pose2(5, 0, 0), target_app(), pipeline, DAY, vis)
        (_, hi_far), _ = ppp(Pose2(50, 0, 0), target_app(), pipeline, DAY, vis)
        assert hi_far > hi_near

    @given(
        st.floats(0.1, 80.0),
        st.floats(-math.pi, math.pi - 1e-9),
        st.floats(0.0, 1.0),
        st.integers(0, 500),
        st.sampled_from(["day", "night"]),
        st.sampled_from(["dry", "rain"]),
    )
    def test_intervals_well_formed(self, r, az, vis_frac, hits, light, weather):
        calib = PerfCalib(
            LogisticCoeffs(-1.5, 0.05, 0.3, -1.2, -0.01, 0.8, 0.5, -0.2),
            LogisticCoeffs(-2.5, 0.02, 0.1, -0.5, -0.005, 0.6, 0.4, -0.1),
            150.0,
        )
        pipeline = make_pipeline(calib=calib)
        env = EnvCondition(light, weather)
        vis = VisibilityReport(hits, vis_frac, True)
        q = Pose2(r * math.cos(az), r * math.sin(az), 0.3)
        (fnr_lo, fnr_hi), (fpr_lo, fpr_hi) = ppp(q, target_app(), pipeline, env, vis)
        assert 0.0 <= fnr_lo <= fnr_hi <= 1.0
        assert 0.0 <= fpr_lo <= fpr_hi <= 1.0

    def test_wilson_interval_known_value(self):
        # p=0.5, n=100 at 95%: standard Wilson bounds
        lo, hi = wilson_interval(0.5, 100.0)
        assert lo == pytest.approx(0.40383, abs=2e-4)
        assert hi == pytest.approx(0.59617, abs=2e-4)


GRID = PolarGridSpec(r_min=1.5, r_max=25.0, n_radial=5, n_angular=8, n_theta=8)


def disk_body(n=24, radius=1.0, height=1.0, mount_h=1.8):
    fp = Footprint.regular(n, radius)
    return RobotBody(
        id="cyl",
        footprint=fp,
        height_profile=((fp, height),),
        limits=DynamicsLimits(10, 2, 4, 4),
        mount_points=(("top", (0.0, 0.0, mount_h)),),
        payload_max=100,
        aux_power=500,
        driving_range=1e5,
        fixed_cost=1e4,
        op_cost=0.1,
    )


def small_class(class_id="obj"):
    return ObjectClass.build(
        class_id, DynamicsLimits(8, 2, 4, 5), [(Appearance(0.9, 0.7, 1.2, 0.5, "dark"), 1.0)]
    )


class TestMppcc:
    def test_epsilon_zero_empty(self):
        body = flat_roof_body()
        mpp = MountedPerceptionPipeline(make_pipeline(), body, "roof", 0.0, 0.0)
        cls = small_class()
        out = mppcc(cls, cls.appearance(0), mpp, DAY, 0.0, GRID)
        assert len(out) == 0

    def test_perfect_calibration_covers_visible_cells(self):
        # with zero rates everywhere the threshold is vacuous: covered cells are
        # exactly those whose representatives all get returns, cross-checked
        # with the face-enumeration ray oracle on a reduced grid
        body = disk_body()
        small_grid = PolarGridSpec(r_min=1.5, r_max=8.0, n_radial=3, n_angular=8, n_theta=2)
        pipeline = make_pipeline(fov_v=1.0, range_max=18.0, n_az=40, n_el=10)
        mpp = MountedPerceptionPipeline(pipeline, body, "top", 0.0, 0.0)
        cls = small_class()
        fast = mppcc(cls, cls.appearance(0), mpp, DAY, 0.5, small_grid)
        ref = mppcc(cls, cls.appearance(0), mpp, DAY, 0.5, small_grid, intersector="reference")
        assert fast.cells == ref.cells
        assert len(fast) > 0

    def test_monotone_in_epsilon(self):
        body = flat_roof_body()
        calib = PerfCalib(
            LogisticCoeffs(-2.0, 0.08, 0.2, -1.0, -0.002, 0.8, 0.5, -0.2),
            LogisticCoeffs(-3.0, 0.03, 0.1, -0.4, -0.001, 0.6, 0.4, -0.1),
            150.0,
        )
        pipeline = make_pipeline(calib=calib, fov_v=1.0, n_az=32, n_el=8)
        mpp = MountedPerceptionPipeline(pipeline, body, "roof", 0.0, 0.0)
        cls = small_class()
        prev = None
        for eps in (0.1, 0.3, 0.6, 0.9):
            cur = mppcc(cls, cls.appearance(0), mpp, DAY, eps, GRID)
            if prev is not None:
                assert prev.cells <= cur.cells
            prev = cur

    def test_dominating_calibration_covers_more(self):
        body = flat_roof_body()
        base = LogisticCoeffs(-1.0, 0.08, 0.2, -1.0, -0.002, 0.8, 0.5, -0.2)
        better = LogisticCoeffs(-2.5, 0.08, 0.2, -1.0, -0.002, 0.8, 0.5, -0.2)
        worse_pipe = make_pipeline(calib=PerfCalib(base, base, 150.0), fov_v=1.0, n_az=32, n_el=8)
        better_pipe = make_pipeline(calib=PerfCalib(better, better, 150.0), fov_v=1.0, n_az=32, n_el=8)
        cls = small_class()
        for eps in (0.2, 0.5, 0.8):
            cov_worse = mppcc(
                cls, cls.appearance(0),
                MountedPerceptionPipeline(worse_pipe, body, "roof", 0.0, 0.0), DAY, eps, GRID,
            )
            cov_better = mppcc(
                cls, cls.appearance(0),
                MountedPerceptionPipeline(better_pipe, body, "roof", 0.0, 0.0), DAY, eps, GRID,
            )
            assert cov_worse.cells <= cov_better.cells

    def test_night_penalty_shrinks_coverage(self):
        body = flat_roof_body()
        calib = PerfCalib(
            LogisticCoeffs(-2.0, 0.06, 0.2, -1.0, -0.002, 2.5, 0.5, -0.2),
            LogisticCoeffs(-3.0, 0.02, 0.1, -0.4, -0.001, 1.5, 0.4, -0.1),
            150.0,
        )
        pipeline = make_pipeline(calib=calib, fov_v=1.0, n_az=32, n_el=8)
        mpp = MountedPerceptionPipeline(pipeline, body, "roof", 0.0, 0.0)
        cls = small_class()
        day_cov = mppcc(cls, cls.appearance(0), mpp, DAY, 0.4, GRID)
        night_cov = mppcc(cls, cls.appearance(0), mpp, NIGHT, 0.4, GRID)
        assert night_cov.cells <= day_cov.cells

    def test_yaw_rotation_equivariance(self):
        # rotationally symmetric body, yaw shifted by exactly one angular bin:
        # the covered pattern shifts by one azimuth bin and one theta bin
        body = disk_body(n=24)
        pipeline = make_pipeline(fov_h=1.9, fov_v=1.0, range_max=18.0, n_az=24, n_el=8)
        cls = small_class()
        delta = 2 * math.pi / GRID.n_angular
        cov0 = mppcc(cls, cls.appearance(0), MountedPerceptionPipeline(pipeline, body, "top", 0.0, 0.0), DAY, 0.5, GRID)
        cov1 = mppcc(cls, cls.appearance(0), MountedPerceptionPipeline(pipeline, body, "top", delta, 0.0), DAY, 0.5, GRID)
        shifted = {
            (ri, (ai + 1) % GRID.n_angular, (ti + 1) % GRID.n_theta) for ri, ai, ti in cov0.cells
        }
        assert shifted == cov1.cells

    def test_class_coverage_intersects_appearances(self):
        body = disk_body()
        pipeline = make_pipeline(fov_v=1.0, range_max=18.0, n_az=40, n_el=10)
        mpp = MountedPerceptionPipeline(pipeline, body, "top", 0.0, 0.0)
        big = Appearance(1.2, 1.0, 1.6, 0.5, "dark")
        small = Appearance(0.5, 0.4, 0.6, 0.5, "light")
        cls = ObjectClass.build("mix", DynamicsLimits(8, 2, 4, 5), [(big, 1.0), (small, 1.0)])
        combined = class_coverage(cls, mpp, DAY, 0.5, GRID)
        cov_big = mppcc(cls, big, mpp, DAY, 0.5, GRID)
        cov_small = mppcc(cls, small, mpp, DAY, 0.5, GRID)
        assert combined.cells == (cov_big.cells & cov_small.cells)

    def test_coverage_set_roundtrip(self):
        body = disk_body()
        pipeline = make_pipeline(fov_v=1.0, range_max=18.0, n_az=24, n_el=6)
        mpp = MountedPerceptionPipeline(pipeline, body, "top", 0.0, 0.0)
        cov = build_coverage_set(mpp, {"obj": small_class()}, [DAY], 0.5, GRID)
        d = coverage_set_to_dict(cov)
        again = coverage_set_from_dict(d)
        assert coverage_set_to_dict(again) == d
