"""Shared random generators for tests."""

import math

import numpy as np

from legslam.geometry import exp


def random_twist(rng, max_angle=math.pi - 1e-3, max_trans=5.0):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return np.concatenate([rng.uniform(-max_trans, max_trans, 3), axis * angle])


def random_pose(rng):
    return exp(random_twist(rng))
