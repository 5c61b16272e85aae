"""Closed-loop ground truth and corrupted LiDAR / leg-odometry streams.

LiDAR odometry drifts in z through a constant per-keyframe bias; leg odometry
drifts horizontally but its height is re-anchored to the true terrain at every
sample, the way foot contact bounds body height.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry import Pose3, between, exp, interpolate, rot_z
from .lanes import OdometrySample

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"
LOOPS = ("circle", "rounded-rectangle")
_LIDAR_STREAM = 1
_FK_STREAM = 2


def _as_vec6(v, name: str) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if a.size != 6 or np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be 6 non-negative finite values")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ScenarioSpec:
    loop: str = "circle"
    path_length: float = 600.0
    relief_amplitude: float = 0.0
    keyframe_spacing: float = 2.0
    fk_rate: float = 10.0
    speed: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.loop not in LOOPS:
            raise ValueError(f"loop must be one of {LOOPS}, got {self.loop!r}")
        if not self.path_length > 0:
            raise ValueError("path_length must be positive")
        if not self.keyframe_spacing > 0:
            raise ValueError("keyframe_spacing must be positive")
        if self.keyframe_spacing >= self.path_length:
            raise ValueError("keyframe_spacing must be shorter than path_length")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        if self.relief_amplitude < 0:
            raise ValueError("relief_amplitude must be non-negative")
        if self.fk_rate < self.speed / self.keyframe_spacing:
            raise ValueError("fk_rate must be at least the keyframe rate")

    @property
    def num_intervals(self) -> int:
        return max(1, int(round(self.path_length / self.keyframe_spacing)))

    @property
    def duration(self) -> float:
        return self.path_length / self.speed


@dataclass(frozen=True)
class SensorNoiseSpec:
    lidar_z_bias_per_keyframe: float = 0.0
    lidar_white_sigmas: np.ndarray = field(default_factory=lambda: np.zeros(6))
    fk_white_sigmas: np.ndarray = field(default_factory=lambda: np.zeros(6))
    fk_z_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lidar_white_sigmas", _as_vec6(self.lidar_white_sigmas, "lidar_white_sigmas"))
        object.__setattr__(self, "fk_white_sigmas", _as_vec6(self.fk_white_sigmas, "fk_white_sigmas"))
        if self.lidar_z_bias_per_keyframe < 0 or self.fk_z_sigma < 0:
            raise ValueError("bias and fk_z_sigma must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lidar_white_sigmas"] = [float(x) for x in self.lidar_white_sigmas]
        d["fk_white_sigmas"] = [float(x) for x in self.fk_white_sigmas]
        return d


@dataclass(frozen=True)
class SimulatedRun:
    ground_truth: list[OdometrySample]
    lidar_odom: list[OdometrySample]
    fk_odom: list[OdometrySample]


# Default LiDAR white noise gives a few meters of horizontal loop discrepancy on
# a 700 m loop; FK noise is per 10 Hz sample.
DEFAULT_LIDAR_WHITE = (0.01, 0.01, 0.01, 2e-4, 2e-4, 1e-3)
DEFAULT_FK_WHITE = (0.005, 0.005, 0.005, 1e-4, 1e-4, 3e-4)
DEFAULT_FK_Z_SIGMA = 0.02

PRESETS: dict[str, tuple[ScenarioSpec, SensorNoiseSpec]] = {
    "factory": (
        ScenarioSpec(loop="rounded-rectangle", path_length=700.0, relief_amplitude=4.0, keyframe_spacing=2.0),
        SensorNoiseSpec(0.1, DEFAULT_LIDAR_WHITE, DEFAULT_FK_WHITE, DEFAULT_FK_Z_SIGMA),
    ),
    "cocopark": (
        ScenarioSpec(loop="circle", path_length=600.0, relief_amplitude=15.0, keyframe_spacing=2.0),
        SensorNoiseSpec(0.12, DEFAULT_LIDAR_WHITE, DEFAULT_FK_WHITE, DEFAULT_FK_Z_SIGMA),
    ),
}


def preset(name: str, seed: int | None = None) -> tuple[ScenarioSpec, SensorNoiseSpec]:
    try:
        spec, noise = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec, noise


def _rounded_rectangle(L: float):
    r = L / 40.0
    short = (L - 2.0 * math.pi * r) / 6.0
    sides = (2.0 * short, short, 2.0 * short, short)
    quarter = 0.5 * math.pi * r
    return r, sides, quarter


def planar_point(loop: str, L: float, s: float) -> tuple[float, float, float]:
    """Position ``(x, y)`` and heading at arc length ``s`` in ``[0, L)``.

    Both loops start at the origin heading along +x and turn left.
    """
    if loop == "circle":
        R = L / (2.0 * math.pi)
        a = s / R
        return R * math.sin(a), R * (1.0 - math.cos(a)), a
    r, sides, quarter = _rounded_rectangle(L)
    x = y = 0.0
    heading = 0.0
    for side in sides:
        c, sn = math.cos(heading), math.sin(heading)
        if s <= side:
            return x + s * c, y + s * sn, heading
        x, y, s = x + side * c, y + side * sn, s - side
        # Left-turn arc of radius r.
        cx, cy = x - r * sn, y + r * c
        if s <= quarter:
            a = s / r
            h = heading + a
            return cx + r * math.sin(h), cy - r * math.cos(h), h
        heading += 0.5 * math.pi
        x, y = cx + r * math.sin(heading), cy - r * math.cos(heading)
        s -= quarter
    return x, y, heading


def elevation(spec: ScenarioSpec, s: float) -> float:
    return 0.5 * spec.relief_amplitude * math.sin(2.0 * math.pi * s / spec.path_length)


def generate_ground_truth(spec: ScenarioSpec) -> list[OdometrySample]:
    """Keyframes every ``path_length / num_intervals`` meters; last equals first."""
    n = spec.num_intervals
    L = spec.path_length
    out = []
    for k in range(n + 1):
        s = 0.0 if k == n else L * k / n
        x, y, heading = planar_point(spec.loop, L, s)
        pose = rot_z(heading, (x, y, elevation(spec, s)))
        out.append(OdometrySample(L * k / n / spec.speed, pose))
    return out


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream])))


def simulate_lidar_odometry(gt: list[OdometrySample], noise: SensorNoiseSpec, seed: int) -> list[OdometrySample]:
    rng = _rng(seed, _LIDAR_STREAM)
    bias = np.array([0.0, 0.0, noise.lidar_z_bias_per_keyframe, 0.0, 0.0, 0.0])
    pose = gt[0].pose
    out = [OdometrySample(gt[0].t, pose)]
    for prev, cur in zip(gt, gt[1:]):
        corruption = bias + rng.standard_normal(6) * noise.lidar_white_sigmas
        pose = pose @ between(prev.pose, cur.pose) @ exp(corruption)
        out.append(OdometrySample(cur.t, pose))
    return out


def fk_sample_times(spec_duration: float, fk_rate: float) -> np.ndarray:
    m = int(math.ceil(spec_duration * fk_rate - 1e-9))
    t = np.arange(m + 1) / fk_rate
    t[-1] = spec_duration
    return t


def interpolate_ground_truth(gt: list[OdometrySample], times) -> list[Pose3]:
    kt = [s.t for s in gt]
    idx = np.searchsorted(kt, times, side="left")
    out = []
    for t, j in zip(times, idx):
        if j < len(kt) and kt[j] == t:
            out.append(gt[j].pose)
            continue
        if j == 0 or j >= len(kt):
            raise ValueError(f"time {t} outside ground-truth span")
        out.append(interpolate(gt[j - 1].pose, gt[j].pose, (t - kt[j - 1]) / (kt[j] - kt[j - 1])))
    return out


def simulate_fk_odometry(
    gt: list[OdometrySample], noise: SensorNoiseSpec, seed: int, fk_rate: float = 10.0
) -> list[OdometrySample]:
    """Dense leg odometry: integrated noisy steps, height re-anchored per sample."""
    rng = _rng(seed, _FK_STREAM)
    times = fk_sample_times(gt[-1].t - gt[0].t, fk_rate) + gt[0].t
    truth = interpolate_ground_truth(gt, times)
    pose = truth[0]
    out = [OdometrySample(float(times[0]), pose)]
    for j in range(1, len(truth)):
        step = between(truth[j - 1], truth[j]) @ exp(rng.standard_normal(6) * noise.fk_white_sigmas)
        pose = pose @ step
        t = pose.translation.copy()
        t[2] = truth[j].translation[2] + noise.fk_z_sigma * rng.standard_normal()
        pose = Pose3(pose.rotation, t)
        out.append(OdometrySample(float(times[j]), pose))
    return out


def simulate(spec: ScenarioSpec, noise: SensorNoiseSpec, seed: int | None = None) -> SimulatedRun:
    seed = spec.seed if seed is None else seed
    gt = generate_ground_truth(spec)
    return SimulatedRun(
        ground_truth=gt,
        lidar_odom=simulate_lidar_odometry(gt, noise, seed),
        fk_odom=simulate_fk_odometry(gt, noise, seed, spec.fk_rate),
    )
