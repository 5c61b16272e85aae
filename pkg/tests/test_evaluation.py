import math
from dataclasses import replace

import numpy as np
import pytest

from legslam.evaluation import (
    DIVERGENCE_CAVEAT,
    CellResult,
    ComparisonReport,
    LoopClosureReport,
    compare_variants,
    elevation_profile,
    loop_closure_discrepancy,
    merge_reports,
    run_cell,
    trajectory_error,
)
from legslam.geometry import Pose3, exp, rot_z, trans
from legslam.lanes import LaneConfig, OdometrySample
from legslam.sim import ScenarioSpec, SensorNoiseSpec, preset, simulate
from legslam.solver import SolverSettings, SolveStats
from tests.helpers import random_pose


def traj_from(points):
    return [(float(i), trans(*p)) for i, p in enumerate(points)]


def small_spec(n=30, relief=2.0):
    return ScenarioSpec(loop="circle", path_length=2.0 * n, relief_amplitude=relief, keyframe_spacing=2.0)


class TestLoopClosureReport:
    def test_invariants(self):
        with pytest.raises(ValueError):
            LoopClosureReport(-1.0, 0.0)
        with pytest.raises(ValueError):
            LoopClosureReport(None, 1.0)
        with pytest.raises(ValueError):
            LoopClosureReport(1.0, 1.0, diverged=True)
        d = LoopClosureReport.divergence()
        assert d.diverged and d.delta_z is None and d.delta_xy is None


class TestLoopClosure:
    def test_closed(self):
        r = loop_closure_discrepancy(traj_from([(1, 2, 3), (5, 5, 5), (1, 2, 3)]))
        assert (r.delta_z, r.delta_xy, r.diverged) == (0.0, 0.0, False)

    def test_345(self):
        r = loop_closure_discrepancy(traj_from([(0, 0, 0), (3, 4, 5)]))
        assert r.delta_xy == 5.0 and r.delta_z == 5.0

    def test_needs_two(self):
        with pytest.raises(ValueError):
            loop_closure_discrepancy(traj_from([(0, 0, 0)]))

    def test_accepts_odometry_samples(self):
        r = loop_closure_discrepancy([OdometrySample(0.0, trans(0, 0, 0)), OdometrySample(1.0, trans(0, 0, -2))])
        assert r.delta_z == 2.0

    def test_rigid_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            traj = [(float(i), random_pose(rng)) for i in range(5)]
            base = loop_closure_discrepancy(traj)
            yaw = rng.uniform(-math.pi, math.pi)
            shift = rot_z(yaw, (rng.uniform(-50, 50), rng.uniform(-50, 50), 0.0))
            moved = loop_closure_discrepancy([(t, shift @ p) for t, p in traj])
            assert moved.delta_z == pytest.approx(base.delta_z, abs=1e-9)
            assert moved.delta_xy == pytest.approx(base.delta_xy, abs=1e-9)

    def test_bias_times_count(self):
        spec, _ = preset("factory")
        noise = SensorNoiseSpec(lidar_z_bias_per_keyframe=0.1)
        run = simulate(spec, noise, 0)
        cell = run_cell(run, LaneConfig(variant="baseline"))
        assert len(run.ground_truth) - 1 == 350
        assert cell.loop.delta_z == pytest.approx(35.0, abs=1e-6)
        assert cell.loop.delta_xy == pytest.approx(0.0, abs=1e-6)


class TestTrajectoryError:
    def test_identical(self):
        rng = np.random.default_rng(1)
        gt = [(float(i), random_pose(rng)) for i in range(10)]
        e = trajectory_error(gt, gt)
        assert e.rmse_xyz == 0.0 and e.rmse_z == 0.0 and e.max_abs_z == 0.0

    def test_constant_z_offset(self):
        gt = traj_from([(i, 2 * i, 0) for i in range(7)])
        est = [(t, trans(0, 0, 1) @ p) for t, p in gt]
        e = trajectory_error(est, gt)
        assert e.rmse_z == pytest.approx(1.0, abs=1e-15)
        assert e.max_abs_z == pytest.approx(1.0, abs=1e-15)

    def test_direct_recompute(self):
        rng = np.random.default_rng(2)
        gt = [(float(i), random_pose(rng)) for i in range(40)]
        est = [(t, p @ exp(0.05 * rng.standard_normal(6))) for t, p in gt]
        e = trajectory_error(est, gt)
        errs = [[a.matrix()[i, 3] - b.matrix()[i, 3] for i in range(3)] for (_, a), (_, b) in zip(est, gt)]
        sq = [ex * ex + ey * ey + ez * ez for ex, ey, ez in errs]
        assert e.rmse_xyz == pytest.approx(math.sqrt(sum(sq) / len(sq)), rel=1e-12)
        assert e.rmse_z == pytest.approx(math.sqrt(sum(ez * ez for _, _, ez in errs) / len(errs)), rel=1e-12)
        assert e.max_abs_z == pytest.approx(max(abs(ez) for _, _, ez in errs), rel=1e-12)
        assert e.rmse_z <= e.rmse_xyz

    def test_mismatches(self):
        gt = traj_from([(0, 0, 0), (1, 0, 0)])
        with pytest.raises(ValueError):
            trajectory_error(gt[:1], gt)
        with pytest.raises(ValueError):
            trajectory_error([(0.0, gt[0][1]), (1.5, gt[1][1])], gt)


class TestElevationProfile:
    def test_identical_columns(self):
        gt = traj_from([(i, 0, math.sin(i)) for i in range(10)])
        rows = elevation_profile(gt, gt)
        assert len(rows) == 10
        assert all(ze == zt for _, ze, zt in rows)
        assert all(b[0] > a[0] for a, b in zip(rows, rows[1:]))

    def test_baseline_error_grows_monotonically(self):
        spec, _ = preset("factory")
        run = simulate(spec, SensorNoiseSpec(lidar_z_bias_per_keyframe=0.1), 0)
        cell = run_cell(run, LaneConfig(variant="baseline"))
        err = [ze - zt for _, ze, zt in cell.profile]
        assert len(err) == len(run.ground_truth)
        assert all(b > a for a, b in zip(err, err[1:]))

    def test_mismatch(self):
        gt = traj_from([(0, 0, 0), (1, 0, 0)])
        with pytest.raises(ValueError):
            elevation_profile(gt, gt[:1])


class TestCompare:
    def test_noiseless_baseline_zero(self):
        rep = compare_variants(small_spec(), SensorNoiseSpec(), [LaneConfig(variant="baseline")], [0])
        (c,) = rep.cells
        assert c.loop.delta_z == pytest.approx(0.0, abs=1e-9)
        assert c.loop.delta_xy == pytest.approx(0.0, abs=1e-9)
        assert rep.caveats == [DIVERGENCE_CAVEAT]

    def test_every_cell_present_and_ordered(self):
        _, noise = preset("factory")
        cfgs = [LaneConfig(variant=v) for v in ("baseline", "serial", "parallel")]
        rep = compare_variants(small_spec(), noise, cfgs, [3, 1], scenario="s")
        assert [(c.seed, c.variant) for c in rep.cells] == [
            (3, "baseline"), (3, "serial"), (3, "parallel"), (1, "baseline"), (1, "serial"), (1, "parallel")
        ]
        assert rep.variants("s") == ["baseline", "serial", "parallel"]

    def test_self_consistency_with_manual_pipeline(self):
        _, noise = preset("cocopark")
        cfg = LaneConfig()
        rep = compare_variants(small_spec(), noise, [cfg], [4])
        manual = run_cell(simulate(small_spec(), noise, 4), cfg, None, "scenario", 4)
        (c,) = rep.cells
        assert c.loop == manual.loop
        assert c.error.rmse_xyz == manual.error.rmse_xyz
        assert c.profile == manual.profile

    def test_rerun_bit_identical(self):
        _, noise = preset("factory")
        cfgs = [LaneConfig(variant="baseline"), LaneConfig()]
        a = compare_variants(small_spec(), noise, cfgs, [0, 1])
        b = compare_variants(small_spec(), noise, cfgs, [0, 1])
        for x, y in zip(a.cells, b.cells):
            assert x.loop == y.loop and x.profile == y.profile
            assert x.stats.final_cost == y.stats.final_cost and x.stats.iterations == y.stats.iterations

    def test_non_convergence_recorded_not_fatal(self):
        _, noise = preset("factory")
        cfgs = [LaneConfig(variant="baseline"), LaneConfig()]
        rep = compare_variants(small_spec(), noise, cfgs, [0], SolverSettings(max_iterations=1))
        assert any(c.diverged for c in rep.cells)
        for c in rep.cells:
            if c.diverged:
                assert c.loop.delta_z is None and c.message

    def test_empty_inputs(self):
        with pytest.raises(ValueError):
            compare_variants(small_spec(), SensorNoiseSpec(), [], [0])
        with pytest.raises(ValueError):
            compare_variants(small_spec(), SensorNoiseSpec(), [LaneConfig()], [])


def fake_cell(seed, dz, diverged=False):
    if diverged:
        return CellResult("s", "parallel", seed, LoopClosureReport.divergence(), None, None)
    stats = SolveStats(iterations=3, initial_cost=10.0, final_cost=1.0, converged=True, wall_time=0.5)
    return CellResult("s", "parallel", seed, LoopClosureReport(dz, 2 * dz), None, stats)


class TestAggregate:
    def test_mean_std(self):
        rep = ComparisonReport([fake_cell(0, 1.0), fake_cell(1, 3.0)])
        assert rep.aggregate("s", "parallel", "delta_z_m") == (2.0, 1.0)
        assert rep.aggregate("s", "parallel", "delta_xy_m") == (4.0, 2.0)

    def test_diverged_cells_excluded(self):
        clean = ComparisonReport([fake_cell(0, 1.0), fake_cell(1, 3.0)])
        mixed = ComparisonReport([fake_cell(0, 1.0), fake_cell(2, 0, diverged=True), fake_cell(1, 3.0)])
        for m in ("delta_z_m", "delta_xy_m", "iterations", "final_cost"):
            assert mixed.aggregate("s", "parallel", m) == clean.aggregate("s", "parallel", m)

    def test_all_diverged_is_nan(self):
        rep = ComparisonReport([fake_cell(0, 0, diverged=True)])
        assert all(math.isnan(x) for x in rep.aggregate("s", "parallel", "delta_z_m"))

    def test_lookup_and_merge(self):
        a = ComparisonReport([fake_cell(0, 1.0)], ["c1"])
        b = ComparisonReport([replace(fake_cell(0, 2.0), scenario="t")], ["c1", "c2"])
        m = merge_reports([a, b])
        assert m.scenarios() == ["s", "t"] and m.caveats == ["c1", "c2"]
        assert m.cell("t", "parallel", 0).loop.delta_z == 2.0
        with pytest.raises(KeyError):
            m.cell("t", "serial", 0)
