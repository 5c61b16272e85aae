"""Graph construction for the baseline, serial and parallel (dual-lane) variants."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .factors import (
    BetweenFactor,
    CouplingSigmas,
    DiagonalNoise,
    ElevationPriorFactor,
    PriorFactor,
    make_coupling_factor,
)
from .geometry import Pose3, between, interpolate
from .solver import Graph, MissingNodeError, Values

VARIANTS = ("baseline", "serial", "parallel")


@dataclass(frozen=True)
class OdometrySample:
    t: float
    pose: Pose3


class OutOfRangeError(ValueError):
    def __init__(self, index: int, t: float, lo: float, hi: float):
        super().__init__(f"keyframe {index} at t={t!r} outside FK coverage [{lo!r}, {hi!r}]")
        self.index = index


def _check_increasing(times: Sequence[float], what: str) -> None:
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"{what} timestamps must be strictly increasing")


def _vec6(values, name: str) -> np.ndarray:
    v = np.array(values, dtype=float).reshape(-1)
    if v.size != 6 or np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be 6 finite positive sigmas")
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class LaneConfig:
    variant: str = "parallel"
    # Scan matching is weak along z, so its z sigma is an order looser.
    lidar_between_sigmas: np.ndarray = field(
        default_factory=lambda: np.array([0.01, 0.01, 0.1, 0.001, 0.001, 0.001])
    )
    fk_between_sigmas: np.ndarray = field(
        default_factory=lambda: np.array([0.05, 0.05, 0.03, 0.01, 0.01, 0.01])
    )
    coupling: CouplingSigmas = field(default_factory=CouplingSigmas)
    elevation_sigma: float = 0.05
    anchor_sigmas: np.ndarray = field(default_factory=lambda: np.full(6, 1e-3))
    couple_every: int = 1
    # Serial only: FK elevation priors directly on x nodes, next to the FK betweens.
    serial_elevation_priors: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("lidar_between_sigmas", "fk_between_sigmas", "anchor_sigmas"):
            object.__setattr__(self, name, _vec6(getattr(self, name), name))
        if not isinstance(self.coupling, CouplingSigmas):
            object.__setattr__(self, "coupling", CouplingSigmas(self.coupling))
        if not (np.isfinite(self.elevation_sigma) and self.elevation_sigma > 0):
            raise ValueError("elevation_sigma must be positive")
        if int(self.couple_every) != self.couple_every or self.couple_every < 1:
            raise ValueError("couple_every must be an integer >= 1")


@dataclass
class HybridGraph:
    graph: Graph
    values: Values
    x_ids: list[int]
    y_ids: list[int]
    times: list[float]

    @property
    def num_keyframes(self) -> int:
        return len(self.x_ids)


def align_fk_to_keyframes(fk: Sequence[OdometrySample], keyframe_times: Sequence[float]) -> list[Pose3]:
    """Interpolate the FK stream at each keyframe time (lerp + slerp)."""
    if not fk:
        raise ValueError("FK stream is empty")
    ts = [s.t for s in fk]
    _check_increasing(ts, "FK")
    out = []
    for i, t in enumerate(keyframe_times):
        if t < ts[0] or t > ts[-1]:
            raise OutOfRangeError(i, t, ts[0], ts[-1])
        j = bisect.bisect_left(ts, t)
        if ts[j] == t:
            out.append(fk[j].pose)
            continue
        t0, t1 = ts[j - 1], ts[j]
        out.append(interpolate(fk[j - 1].pose, fk[j].pose, (t - t0) / (t1 - t0)))
    return out


def build_graph(
    keyframes: Sequence[OdometrySample],
    fk: Sequence[OdometrySample] | None,
    cfg: LaneConfig,
) -> HybridGraph:
    n = len(keyframes)
    if n < 2:
        raise ValueError(f"need at least 2 keyframes, got {n}")
    times = [s.t for s in keyframes]
    _check_increasing(times, "keyframe")
    lidar = [s.pose for s in keyframes]

    graph = Graph()
    x_ids = list(range(n))
    values: Values = dict(zip(x_ids, lidar))
    lidar_noise = DiagonalNoise(cfg.lidar_between_sigmas)
    graph.add(PriorFactor(x_ids[0], lidar[0], DiagonalNoise(cfg.anchor_sigmas)))
    for k in range(1, n):
        graph.add(BetweenFactor(x_ids[k - 1], x_ids[k], between(lidar[k - 1], lidar[k]), lidar_noise))

    y_ids: list[int] = []
    if cfg.variant == "baseline":
        return HybridGraph(graph, values, x_ids, y_ids, times)

    if fk is None:
        raise ValueError(f"variant {cfg.variant!r} needs an FK stream")
    aligned = align_fk_to_keyframes(fk, times)
    fk_noise = DiagonalNoise(cfg.fk_between_sigmas)
    elev_noise = DiagonalNoise([cfg.elevation_sigma])

    if cfg.variant == "serial":
        for k in range(1, n):
            graph.add(BetweenFactor(x_ids[k - 1], x_ids[k], between(aligned[k - 1], aligned[k]), fk_noise))
        if cfg.serial_elevation_priors:
            for k in range(n):
                graph.add(ElevationPriorFactor(x_ids[k], aligned[k].z, elev_noise))
        return HybridGraph(graph, values, x_ids, y_ids, times)

    y_ids = list(range(n, 2 * n))
    values.update(zip(y_ids, aligned))
    for k in range(1, n):
        graph.add(BetweenFactor(y_ids[k - 1], y_ids[k], between(aligned[k - 1], aligned[k]), fk_noise))
    for k in range(n):
        graph.add(ElevationPriorFactor(y_ids[k], aligned[k].z, elev_noise))
    for k in range(0, n, cfg.couple_every):
        graph.add(make_coupling_factor(x_ids[k], y_ids[k], cfg.coupling))
    return HybridGraph(graph, values, x_ids, y_ids, times)


def expected_factor_count(variant: str, n: int, couple_every: int = 1, serial_elevation_priors: bool = True) -> int:
    if variant == "baseline":
        return n
    if variant == "serial":
        return 1 + 2 * (n - 1) + (n if serial_elevation_priors else 0)
    return 1 + 2 * (n - 1) + n + len(range(0, n, couple_every))


def strip_kinematic_lane(h: HybridGraph) -> HybridGraph:
    """Drop every y-lane node and every factor touching one."""
    ys = set(h.y_ids)
    graph = Graph(f for f in h.graph.factors if not ys.intersection(f.keys))
    values = {k: v for k, v in h.values.items() if k not in ys}
    return HybridGraph(graph, values, list(h.x_ids), [], list(h.times))


def extract_output_trajectory(h: HybridGraph, v: Values) -> list[tuple[float, Pose3]]:
    """Published trajectory: LiDAR-lane nodes only, in keyframe order."""
    out = []
    for t, k in zip(h.times, h.x_ids):
        if k not in v:
            raise MissingNodeError(k)
        out.append((t, v[k]))
    return out
