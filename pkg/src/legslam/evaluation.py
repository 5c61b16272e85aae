"""Loop-closure discrepancy, trajectory error and variant sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Pose3
from .lanes import LaneConfig, OdometrySample, build_graph, extract_output_trajectory
from .sim import ScenarioSpec, SensorNoiseSpec, SimulatedRun, simulate
from .solver import IllConditionedError, SolverSettings, SolveStats, optimize

Trajectory = Sequence[tuple[float, Pose3]]

DIVERGENCE_CAVEAT = (
    "front-end divergence (ICP search radius exceeded) is not simulated; a baseline "
    "cell reports back-end drift, and 'diverged' marks only solver non-convergence"
)


@dataclass(frozen=True)
class LoopClosureReport:
    delta_z: float | None
    delta_xy: float | None
    diverged: bool = False

    def __post_init__(self):
        if self.diverged:
            if self.delta_z is not None or self.delta_xy is not None:
                raise ValueError("a diverged report carries no deltas")
        elif self.delta_z is None or self.delta_xy is None or self.delta_z < 0 or self.delta_xy < 0:
            raise ValueError("deltas must be non-negative numbers")

    @classmethod
    def divergence(cls) -> LoopClosureReport:
        return cls(None, None, True)


@dataclass(frozen=True)
class TrajectoryError:
    rmse_xyz: float
    rmse_z: float
    max_abs_z: float
    z_errors: np.ndarray


def _as_trajectory(traj) -> list[tuple[float, Pose3]]:
    out = []
    for item in traj:
        if isinstance(item, OdometrySample):
            out.append((item.t, item.pose))
        else:
            t, p = item
            out.append((t, p))
    return out


def loop_closure_discrepancy(traj) -> LoopClosureReport:
    """Start-to-finish position gap of a trajectory whose true ends coincide."""
    traj = _as_trajectory(traj)
    if len(traj) < 2:
        raise ValueError("loop closure discrepancy needs at least 2 poses")
    first = traj[0][1].translation
    last = traj[-1][1].translation
    return LoopClosureReport(
        delta_z=abs(float(last[2] - first[2])),
        delta_xy=math.hypot(float(last[0] - first[0]), float(last[1] - first[1])),
    )


def _matched(traj, gt) -> tuple[list, list]:
    traj, gt = _as_trajectory(traj), _as_trajectory(gt)
    if len(traj) != len(gt):
        raise ValueError(f"length mismatch: {len(traj)} estimated vs {len(gt)} reference poses")
    for i, ((ta, _), (tb, _)) in enumerate(zip(traj, gt)):
        if abs(ta - tb) > 1e-9:
            raise ValueError(f"timestamp mismatch at keyframe {i}: {ta} vs {tb}")
    return traj, gt


def trajectory_error(traj, gt) -> TrajectoryError:
    """Unaligned translation errors; both trajectories share the anchored origin."""
    traj, gt = _matched(traj, gt)
    err = np.array([p.translation - q.translation for (_, p), (_, q) in zip(traj, gt)])
    z = err[:, 2].copy()
    z.flags.writeable = False
    return TrajectoryError(
        rmse_xyz=float(np.sqrt(np.mean(np.sum(err**2, axis=1)))),
        rmse_z=float(np.sqrt(np.mean(z**2))),
        max_abs_z=float(np.max(np.abs(z))),
        z_errors=z,
    )


def elevation_profile(traj, gt) -> list[tuple[float, float, float]]:
    """Rows of ``(arc_length, z_est, z_true)`` with arc length along the reference."""
    traj, gt = _matched(traj, gt)
    rows = []
    s = 0.0
    prev = None
    for (_, p), (_, q) in zip(traj, gt):
        if prev is not None:
            s += float(np.linalg.norm(q.translation - prev))
        prev = q.translation
        rows.append((s, float(p.translation[2]), float(q.translation[2])))
    return rows


@dataclass
class CellResult:
    scenario: str
    variant: str
    seed: int
    loop: LoopClosureReport
    error: TrajectoryError | None
    stats: SolveStats | None
    profile: list[tuple[float, float, float]] = field(default_factory=list)
    message: str = ""
    trajectory: list[tuple[float, Pose3]] = field(default_factory=list, repr=False)

    @property
    def diverged(self) -> bool:
        return self.loop.diverged


@dataclass
class ComparisonReport:
    cells: list[CellResult]
    caveats: list[str] = field(default_factory=list)

    def cell(self, scenario: str, variant: str, seed: int) -> CellResult:
        for c in self.cells:
            if (c.scenario, c.variant, c.seed) == (scenario, variant, seed):
                return c
        raise KeyError((scenario, variant, seed))

    def variants(self, scenario: str | None = None) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if (scenario is None or c.scenario == scenario) and c.variant not in seen:
                seen.append(c.variant)
        return seen

    def scenarios(self) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if c.scenario not in seen:
                seen.append(c.scenario)
        return seen

    def aggregate(self, scenario: str, variant: str, metric: str) -> tuple[float, float]:
        """Mean and population std of a metric over converged seeds (NaN if none)."""
        vals = [
            _metric(c, metric)
            for c in self.cells
            if c.scenario == scenario and c.variant == variant and not c.diverged
        ]
        if not vals:
            return math.nan, math.nan
        a = np.array(vals, dtype=float)
        return float(a.mean()), float(a.std())


METRICS = ("delta_z_m", "delta_xy_m", "rmse_z_m", "rmse_xyz_m", "iterations", "final_cost", "wall_time_s")


def _metric(c: CellResult, name: str) -> float:
    if name == "delta_z_m":
        return c.loop.delta_z
    if name == "delta_xy_m":
        return c.loop.delta_xy
    if name == "rmse_z_m":
        return c.error.rmse_z
    if name == "rmse_xyz_m":
        return c.error.rmse_xyz
    if name == "iterations":
        return c.stats.iterations
    if name == "final_cost":
        return c.stats.final_cost
    if name == "wall_time_s":
        return c.stats.wall_time
    raise KeyError(name)


def run_cell(
    run: SimulatedRun,
    cfg: LaneConfig,
    settings: SolverSettings | None = None,
    scenario: str = "",
    seed: int = 0,
) -> CellResult:
    """Build, optimize and score one variant on one simulated run."""
    h = build_graph(run.lidar_odom, run.fk_odom, cfg)
    try:
        values, stats = optimize(h.graph, h.values, settings)
    except IllConditionedError as exc:
        return CellResult(scenario, cfg.variant, seed, LoopClosureReport.divergence(), None, None, message=str(exc))
    out = extract_output_trajectory(h, values)
    error = trajectory_error(out, run.ground_truth)
    profile = elevation_profile(out, run.ground_truth)
    if not stats.converged:
        return CellResult(
            scenario, cfg.variant, seed, LoopClosureReport.divergence(), error, stats, profile,
            message="max iterations reached before convergence", trajectory=out,
        )
    return CellResult(scenario, cfg.variant, seed, loop_closure_discrepancy(out), error, stats, profile, trajectory=out)


def compare_variants(
    spec: ScenarioSpec,
    noise: SensorNoiseSpec,
    configs: Sequence[LaneConfig],
    seeds: Sequence[int],
    settings: SolverSettings | None = None,
    scenario: str = "scenario",
) -> ComparisonReport:
    if not configs or not seeds:
        raise ValueError("compare_variants needs at least one config and one seed")
    cells = []
    for seed in seeds:
        run = simulate(spec, noise, seed)
        for cfg in configs:
            try:
                cells.append(run_cell(run, cfg, settings, scenario, seed))
            except Exception as exc:  # recorded, never fatal to the sweep
                cells.append(
                    CellResult(scenario, cfg.variant, seed, LoopClosureReport.divergence(), None, None,
                               message=f"{type(exc).__name__}: {exc}")
                )
    return ComparisonReport(cells, caveats=[DIVERGENCE_CAVEAT])


def merge_reports(reports: Sequence[ComparisonReport]) -> ComparisonReport:
    cells = [c for r in reports for c in r.cells]
    caveats: list[str] = []
    for r in reports:
        caveats.extend(x for x in r.caveats if x not in caveats)
    return ComparisonReport(cells, caveats)
