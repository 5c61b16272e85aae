"""Factor kinds used by the dual-lane pose graph and their noise models.

Every residual follows ``log(measured^-1 * predicted)`` and every Jacobian is
taken against a right perturbation ``x <- x * exp(d)`` of each node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .geometry import Pose3, adjoint, between, exp, inverse, log, right_jacobian_inverse

FD_STEP = 1e-6


@dataclass(frozen=True)
class DiagonalNoise:
    """Independent Gaussian noise with one standard deviation per residual entry."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigmas, dtype=float).reshape(-1)
        if s.size == 0 or not np.all(np.isfinite(s)) or np.any(s <= 0.0):
            raise ValueError(f"sigmas must be finite and strictly positive, got {s}")
        s.flags.writeable = False
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def isotropic(cls, dim: int, sigma: float) -> DiagonalNoise:
        return cls(np.full(dim, float(sigma)))

    @property
    def dim(self) -> int:
        return self.sigmas.size

    def whiten(self, r) -> np.ndarray:
        return np.asarray(r, dtype=float) / self.sigmas

    def scaled(self, c: float) -> DiagonalNoise:
        return DiagonalNoise(self.sigmas * c)


@dataclass(frozen=True)
class CouplingSigmas:
    """DoF-selective sigmas for the identity coupling: tight on z, loose elsewhere."""

    sigmas: np.ndarray = field(
        default_factory=lambda: np.array([10.0, 10.0, 0.02, 10.0, 10.0, 10.0])
    )

    def __post_init__(self):
        s = np.array(self.sigmas, dtype=float).reshape(-1)
        if s.size != 6:
            raise ValueError("coupling sigmas need 6 entries")
        if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
            raise ValueError(f"coupling sigmas must be finite and positive, got {s}")
        if not np.all(s[2] < np.delete(s, 2)):
            raise ValueError("coupling sigma on z must be strictly the smallest")
        s.flags.writeable = False
        object.__setattr__(self, "sigmas", s)

    @property
    def z(self) -> float:
        return float(self.sigmas[2])

    def noise(self) -> DiagonalNoise:
        return DiagonalNoise(self.sigmas)


def _check_noise(noise: DiagonalNoise, dim: int) -> None:
    if noise.dim != dim:
        raise ValueError(f"expected a {dim}-dim noise model, got {noise.dim}")


@dataclass(frozen=True)
class PriorFactor:
    node: int
    measured: Pose3
    noise: DiagonalNoise

    def __post_init__(self):
        _check_noise(self.noise, 6)

    @property
    def keys(self) -> tuple[int, ...]:
        return (self.node,)

    @property
    def dim(self) -> int:
        return 6

    def scaled(self, c: float) -> PriorFactor:
        return PriorFactor(self.node, self.measured, self.noise.scaled(c))


@dataclass(frozen=True)
class BetweenFactor:
    node_a: int
    node_b: int
    measured: Pose3
    noise: DiagonalNoise

    def __post_init__(self):
        if self.node_a == self.node_b:
            raise ValueError(f"between factor needs two distinct nodes, got {self.node_a} twice")
        _check_noise(self.noise, 6)

    @property
    def keys(self) -> tuple[int, ...]:
        return (self.node_a, self.node_b)

    @property
    def dim(self) -> int:
        return 6

    def scaled(self, c: float) -> BetweenFactor:
        return BetweenFactor(self.node_a, self.node_b, self.measured, self.noise.scaled(c))


@dataclass(frozen=True)
class ElevationPriorFactor:
    """Unary constraint on the z translation of a single node."""

    node: int
    measured_z: float
    noise: DiagonalNoise

    def __post_init__(self):
        _check_noise(self.noise, 1)

    @property
    def keys(self) -> tuple[int, ...]:
        return (self.node,)

    @property
    def dim(self) -> int:
        return 1

    def scaled(self, c: float) -> ElevationPriorFactor:
        return ElevationPriorFactor(self.node, self.measured_z, self.noise.scaled(c))


Factor = Union[PriorFactor, BetweenFactor, ElevationPriorFactor]


def residual_prior(f: PriorFactor, x: Pose3) -> np.ndarray:
    return log(between(f.measured, x))


def residual_between(f: BetweenFactor, x_a: Pose3, x_b: Pose3) -> np.ndarray:
    return log(between(f.measured, between(x_a, x_b)))


def residual_elevation(f: ElevationPriorFactor, x: Pose3) -> float:
    return float(x.translation[2] - f.measured_z)


def make_coupling_factor(x_id: int, y_id: int, s: CouplingSigmas | None = None) -> BetweenFactor:
    """Identity between factor tying a LiDAR-lane node to its kinematic-lane twin."""
    if x_id == y_id:
        raise ValueError(f"coupling needs distinct node ids, got {x_id} twice")
    s = CouplingSigmas() if s is None else s
    return BetweenFactor(x_id, y_id, Pose3.identity(), s.noise())


def residual(f: Factor, poses: Sequence[Pose3]) -> np.ndarray:
    """Unwhitened residual as a 1-D array, poses ordered like ``f.keys``."""
    if isinstance(f, BetweenFactor):
        return residual_between(f, poses[0], poses[1])
    if isinstance(f, PriorFactor):
        return residual_prior(f, poses[0])
    if isinstance(f, ElevationPriorFactor):
        return np.array([residual_elevation(f, poses[0])])
    raise TypeError(f"unknown factor type {type(f).__name__}")


def whitened_residual(f: Factor, poses: Sequence[Pose3]) -> np.ndarray:
    return f.noise.whiten(residual(f, poses))


def cost(f: Factor, poses: Sequence[Pose3]) -> float:
    e = whitened_residual(f, poses)
    return float(e @ e)


def numeric_jacobians(f: Factor, poses: Sequence[Pose3], step: float = FD_STEP) -> list[np.ndarray]:
    """Central finite differences of the whitened residual, one block per node."""
    poses = list(poses)
    blocks = []
    for i, p in enumerate(poses):
        J = np.zeros((f.dim, 6))
        for j in range(6):
            d = np.zeros(6)
            d[j] = step
            plus = poses.copy()
            minus = poses.copy()
            plus[i] = p @ exp(d)
            minus[i] = p @ exp(-d)
            J[:, j] = (whitened_residual(f, plus) - whitened_residual(f, minus)) / (2.0 * step)
        blocks.append(J)
    return blocks


def linearize_factor(f: Factor, poses: Sequence[Pose3]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Whitened residual and analytic whitened Jacobians in one pass."""
    inv_sigma = 1.0 / f.noise.sigmas
    if isinstance(f, BetweenFactor):
        a, b = poses
        rel = between(a, b)
        r = log(between(f.measured, rel))
        Jr_inv = right_jacobian_inverse(r)
        J_b = Jr_inv
        J_a = -Jr_inv @ adjoint(inverse(rel))
        return r * inv_sigma, [J_a * inv_sigma[:, None], J_b * inv_sigma[:, None]]
    if isinstance(f, PriorFactor):
        r = residual_prior(f, poses[0])
        return r * inv_sigma, [right_jacobian_inverse(r) * inv_sigma[:, None]]
    if isinstance(f, ElevationPriorFactor):
        x = poses[0]
        J = np.zeros((1, 6))
        # d(t + R v)/dv, z row only; rotation columns vanish to first order.
        J[0, :3] = x.rotation_matrix[2, :]
        r = np.array([residual_elevation(f, x)])
        return r * inv_sigma, [J * inv_sigma[0]]
    raise TypeError(f"unknown factor type {type(f).__name__}")


def jacobians(f: Factor, poses: Sequence[Pose3], method: str = "analytic") -> list[np.ndarray]:
    """Whitened Jacobians per node; ``method`` is ``"analytic"`` or ``"numeric"``."""
    if method == "numeric":
        return numeric_jacobians(f, poses)
    if method == "analytic":
        return linearize_factor(f, poses)[1]
    raise ValueError(f"unknown Jacobian method {method!r}")
