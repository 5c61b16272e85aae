"""TUM trajectories, CSV tables and bare-bones SVG line charts."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from .evaluation import METRICS, CellResult, ComparisonReport
from .geometry import Pose3
from .lanes import OdometrySample

FORMAT_VERSION = 1
TUM_COLUMNS = "timestamp tx ty tz qx qy qz qw"
COMPARISON_COLUMNS = (
    "scenario",
    "variant",
    "seed",
    "delta_z_m",
    "delta_xy_m",
    "rmse_z_m",
    "rmse_xyz_m",
    "iterations",
    "final_cost",
    "wall_time_s",
    "diverged",
)


def _g9(x: float) -> str:
    return f"{float(x) + 0.0:.9g}"


def write_tum(path: Path, samples: Iterable, comment: str = "") -> None:
    lines = [f"# {comment}" if comment else "# trajectory", f"# {TUM_COLUMNS}"]
    for item in samples:
        t, p = (item.t, item.pose) if isinstance(item, OdometrySample) else item
        q = p.rotation
        vals = (t, *p.translation, q[1], q[2], q[3], q[0])
        lines.append(" ".join(_g9(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tum(path: Path) -> list[OdometrySample]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{n}: expected 8 fields, got {len(parts)}")
        t, x, y, z, qx, qy, qz, qw = map(float, parts)
        out.append(OdometrySample(t, Pose3((qw, qx, qy, qz), (x, y, z))))
    return out


def write_elevation_csv(path: Path, profile: Sequence[tuple[float, float, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "arc_length_m", "z_est_m", "z_true_m", "z_error_m"])
        for i, (s, ze, zt) in enumerate(profile):
            w.writerow([i, repr(s), repr(ze), repr(zt), repr(ze - zt)])


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _cell_row(c: CellResult, with_timing: bool) -> list[str]:
    vals = {
        "delta_z_m": c.loop.delta_z,
        "delta_xy_m": c.loop.delta_xy,
        "rmse_z_m": c.error.rmse_z if c.error else None,
        "rmse_xyz_m": c.error.rmse_xyz if c.error else None,
        "iterations": c.stats.iterations if c.stats else None,
        "final_cost": c.stats.final_cost if c.stats else None,
        "wall_time_s": c.stats.wall_time if (c.stats and with_timing) else None,
    }
    return [c.scenario, c.variant, str(c.seed)] + [_fmt(vals[m]) for m in METRICS] + [_fmt(c.diverged)]


def comparison_rows(report: ComparisonReport, with_timing: bool = False) -> list[list[str]]:
    """Per-seed rows, then a mean and a std row per (scenario, variant)."""
    rows = [_cell_row(c, with_timing) for c in report.cells]
    for scenario in report.scenarios():
        for variant in report.variants(scenario):
            stats = {m: report.aggregate(scenario, variant, m) for m in METRICS}
            cells = [c for c in report.cells if c.scenario == scenario and c.variant == variant]
            all_diverged = all(c.diverged for c in cells)
            for which, label in ((0, "mean"), (1, "std")):
                vals = [
                    "" if (m == "wall_time_s" and not with_timing) else _fmt(stats[m][which])
                    for m in METRICS
                ]
                rows.append([scenario, variant, label] + vals + [_fmt(all_diverged)])
    return rows


def write_comparison_csv(path: Path, report: ComparisonReport, with_timing: bool = False) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        w.writerows(comparison_rows(report, with_timing))


def read_comparison_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_timings_csv(path: Path, report: ComparisonReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "variant", "seed", "wall_time_s"])
        for c in report.cells:
            w.writerow([c.scenario, c.variant, c.seed, _fmt(c.stats.wall_time if c.stats else None)])


def write_profile_svg(path: Path, profile: Sequence[tuple[float, float, float]], title: str) -> None:
    """Estimated (red) and true (black) elevation against arc length."""
    width, height, pad = 720, 360, 48
    s = [r[0] for r in profile]
    zs = [r[1] for r in profile] + [r[2] for r in profile]
    s_lo, s_hi = min(s), max(s) or 1.0
    z_lo, z_hi = min(zs), max(zs)
    if z_hi - z_lo < 1e-9:
        z_lo, z_hi = z_lo - 1.0, z_hi + 1.0

    def xy(si, zi):
        px = pad + (si - s_lo) / (s_hi - s_lo) * (width - 2 * pad)
        py = height - pad - (zi - z_lo) / (z_hi - z_lo) * (height - 2 * pad)
        return f"{px:.2f},{py:.2f}"

    est = " ".join(xy(a, b) for a, b, _ in profile)
    true = " ".join(xy(a, c) for a, _, c in profile)
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="gray"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="gray"/>',
        f'<text x="{pad}" y="{height - 12}" font-family="sans-serif" font-size="11">'
        f"arc length {s_lo:.0f}..{s_hi:.0f} m; z {z_lo:.2f}..{z_hi:.2f} m</text>",
        f'<polyline fill="none" stroke="black" stroke-width="1.5" points="{true}"/>',
        f'<polyline fill="none" stroke="red" stroke-width="1.5" points="{est}"/>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(svg) + "\n", encoding="utf-8")
