"""Command-line entry point: ``legslam {simulate,solve,compare}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import tomli_w

from . import fileio
from .config import ConfigError, RunConfig, Scenario, dump_expanded, expanded, load_config, parse_config
from .evaluation import CellResult, compare_variants, merge_reports, run_cell
from .lanes import VARIANTS, LaneConfig
from .sim import RNG_ALGORITHM, SimulatedRun, simulate

log = logging.getLogger("legslam")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SIM_FILES = ("ground_truth.tum", "lidar_odometry.tum", "fk_odometry.tum")


def _run_dir(cfg: RunConfig, sc: Scenario, seed: int) -> Path:
    return cfg.output_dir / sc.name / f"seed_{seed}"


def _lane_for(cfg: RunConfig, variant: str) -> LaneConfig:
    for lane in cfg.lanes:
        if lane.variant == variant:
            return lane
    return LaneConfig(variant=variant)


def _write_simulation(d: Path, cfg: RunConfig, sc: Scenario, seed: int, run: SimulatedRun) -> None:
    d.mkdir(parents=True, exist_ok=True)
    streams = (run.ground_truth, run.lidar_odom, run.fk_odom)
    labels = ("ground truth", "lidar odometry", "fk odometry")
    for name, label, samples in zip(SIM_FILES, labels, streams):
        fileio.write_tum(d / name, samples, f"{label}; scenario {sc.name}; seed {seed}")
    meta = {
        "format_version": fileio.FORMAT_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "scenario": sc.name,
        "seed": seed,
        "counts": {"ground_truth": len(run.ground_truth), "lidar": len(run.lidar_odom), "fk": len(run.fk_odom)},
        "config": expanded(replace(cfg, scenarios=(sc,), seeds=(seed,))),
    }
    (d / "metadata.toml").write_text(tomli_w.dumps(meta), encoding="utf-8")


def _load_simulation(d: Path) -> SimulatedRun:
    missing = [n for n in SIM_FILES if not (d / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{d}: missing {', '.join(missing)}")
    return SimulatedRun(*(fileio.read_tum(d / n) for n in SIM_FILES))


def cmd_simulate(cfg: RunConfig) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    dump_expanded(cfg, cfg.output_dir / "config.toml")
    for sc in cfg.scenarios:
        for seed in cfg.seeds:
            run = simulate(sc.spec, sc.noise, seed)
            _write_simulation(_run_dir(cfg, sc, seed), cfg, sc, seed, run)
            log.info("simulated %s seed %d: %d keyframes", sc.name, seed, len(run.ground_truth))
    return EXIT_OK


def _report_dict(cell: CellResult) -> dict:
    d = {"scenario": cell.scenario, "variant": cell.variant, "seed": cell.seed, "diverged": cell.diverged}
    if not cell.diverged:
        d["delta_z_m"] = cell.loop.delta_z
        d["delta_xy_m"] = cell.loop.delta_xy
    if cell.error is not None:
        d.update(rmse_z_m=cell.error.rmse_z, rmse_xyz_m=cell.error.rmse_xyz, max_abs_z_m=cell.error.max_abs_z)
    if cell.stats is not None:
        d.update(
            iterations=cell.stats.iterations,
            initial_cost=cell.stats.initial_cost,
            final_cost=cell.stats.final_cost,
            converged=cell.stats.converged,
        )
    if cell.message:
        d["message"] = cell.message
    return d


def cmd_solve(cfg: RunConfig, variant: str, input_dir: Path | None = None, plots: bool = False) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    dump_expanded(cfg, cfg.output_dir / "config.toml", {"variant": variant})
    lane = _lane_for(cfg, variant)
    status = EXIT_OK
    for sc in cfg.scenarios:
        for seed in cfg.seeds:
            d = _run_dir(cfg, sc, seed)
            if input_dir is not None:
                run = _load_simulation(input_dir / sc.name / f"seed_{seed}")
            else:
                run = simulate(sc.spec, sc.noise, seed)
            cell = run_cell(run, lane, cfg.solver, sc.name, seed)
            d.mkdir(parents=True, exist_ok=True)
            if cell.error is not None:
                fileio.write_elevation_csv(d / f"elevation_{variant}.csv", cell.profile)
            if cell.trajectory:
                fileio.write_tum(d / f"trajectory_{variant}.tum", cell.trajectory, f"{variant} estimate; lidar lane")
            (d / f"report_{variant}.toml").write_text(tomli_w.dumps(_report_dict(cell)), encoding="utf-8")
            if plots and cell.profile:
                fileio.write_profile_svg(d / f"elevation_{variant}.svg", cell.profile, f"{sc.name} {variant} seed {seed}")
            if cell.diverged:
                log.error("%s seed %d: %s diverged: %s", sc.name, seed, variant, cell.message)
                status = EXIT_RUNTIME
            else:
                log.info("%s seed %d %s: dz=%.3f dxy=%.3f", sc.name, seed, variant, cell.loop.delta_z, cell.loop.delta_xy)
    return status


def cmd_compare(cfg: RunConfig, plots: bool = False) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    dump_expanded(cfg, cfg.output_dir / "config.toml")
    reports = [
        compare_variants(sc.spec, sc.noise, cfg.lanes, cfg.seeds, cfg.solver, scenario=sc.name)
        for sc in cfg.scenarios
    ]
    report = merge_reports(reports)
    fileio.write_comparison_csv(cfg.output_dir / "comparison.csv", report)
    fileio.write_timings_csv(cfg.output_dir / "timings.csv", report)
    notes = ["caveats:"] + [f"- {c}" for c in report.caveats]
    failed = [c for c in report.cells if c.message]
    if failed:
        notes.append("cell messages:")
        notes += [f"- {c.scenario} {c.variant} seed {c.seed}: {c.message}" for c in failed]
    (cfg.output_dir / "notes.txt").write_text("\n".join(notes) + "\n", encoding="utf-8")
    if plots:
        for scenario in report.scenarios():
            for variant in report.variants(scenario):
                cells = [c for c in report.cells if c.scenario == scenario and c.variant == variant and c.profile]
                if cells:
                    path = cfg.output_dir / f"elevation_{scenario}_{variant}.svg"
                    fileio.write_profile_svg(path, cells[0].profile, f"{scenario} {variant} seed {cells[0].seed}")
    for scenario in report.scenarios():
        for variant in report.variants(scenario):
            dz, sd = report.aggregate(scenario, variant, "delta_z_m")
            log.info("%s %s: delta_z %.3f +/- %.3f m", scenario, variant, dz, sd)
    if all(c.diverged for c in report.cells):
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="legslam", description="Dual-lane LiDAR / leg-odometry pose graph experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="TOML run configuration (defaults: factory preset, seed 0)")
        sp.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="single seed (overrides seeds)")
        sp.add_argument("--plots", action="store_true", help="also write SVG elevation profiles")

    common(sub.add_parser("simulate", help="write ground truth and odometry streams"))
    solve = sub.add_parser("solve", help="optimize one variant and write its trajectory")
    common(solve)
    solve.add_argument("--variant", choices=VARIANTS, default="parallel")
    solve.add_argument("--input", type=Path, help="load streams from a previous simulate output directory")
    common(sub.add_parser("compare", help="sweep every configured variant over scenarios and seeds"))
    return p


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be non-negative")
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"legslam: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.variant, args.input, args.plots)
        return cmd_compare(cfg, args.plots)
    except Exception as exc:  # anything past config parsing is a runtime failure
        print(f"legslam: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
