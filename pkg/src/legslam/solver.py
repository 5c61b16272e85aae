"""Factor-graph container and Levenberg-Marquardt on the SE(3) manifold."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .factors import Factor, cost, linearize_factor
from .geometry import Pose3, exp

Values = Dict[int, Pose3]

LAMBDA_CAP = 1e12
DIAG_FLOOR = 1e-12


class MissingNodeError(KeyError):
    def __init__(self, node: int):
        super().__init__(f"no value for node {node}")
        self.node = node


class IllConditionedError(RuntimeError):
    pass


class Graph:
    """Ordered list of factors over integer node ids."""

    def __init__(self, factors: Iterable[Factor] = ()):
        self.factors: list[Factor] = list(factors)

    def add(self, factor: Factor) -> None:
        self.factors.append(factor)

    def extend(self, factors: Iterable[Factor]) -> None:
        self.factors.extend(factors)

    def keys(self) -> set[int]:
        return {k for f in self.factors for k in f.keys}

    def __len__(self) -> int:
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 100
    initial_lambda: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    relative_cost_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-10

    def __post_init__(self):
        for name in (
            "max_iterations",
            "initial_lambda",
            "lambda_up",
            "lambda_down",
            "relative_cost_tolerance",
            "gradient_tolerance",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver setting {name} must be positive")


@dataclass
class SolveStats:
    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    converged: bool = False
    wall_time: float = 0.0
    cost_history: list[float] = field(default_factory=list)


@dataclass
class LinearSystem:
    """Damping-free normal equations ``H d = -g`` over a fixed node ordering."""

    H: sp.csc_matrix
    g: np.ndarray
    cost: float
    order: list[int]

    def dense(self) -> np.ndarray:
        return self.H.toarray()


def _poses_for(f: Factor, values: Mapping[int, Pose3]) -> list[Pose3]:
    try:
        return [values[k] for k in f.keys]
    except KeyError as exc:
        raise MissingNodeError(exc.args[0]) from None


def total_cost(graph: Graph, values: Mapping[int, Pose3]) -> float:
    """Sum of squared whitened residuals over all factors."""
    return float(sum(cost(f, _poses_for(f, values)) for f in graph.factors))


def _ordering(graph: Graph, values: Mapping[int, Pose3]) -> list[int]:
    for k in graph.keys():
        if k not in values:
            raise MissingNodeError(k)
    return sorted(values)


def linearize(graph: Graph, values: Mapping[int, Pose3], order: list[int] | None = None) -> LinearSystem:
    order = _ordering(graph, values) if order is None else order
    index = {k: i for i, k in enumerate(order)}
    n = 6 * len(order)
    g = np.zeros(n)
    rows, cols, data = [], [], []
    total = 0.0
    offsets = np.repeat(np.arange(6), 6), np.tile(np.arange(6), 6)
    for f in graph.factors:
        e, blocks = linearize_factor(f, _poses_for(f, values))
        total += float(e @ e)
        slots = [6 * index[k] for k in f.keys]
        for i, (si, Ji) in enumerate(zip(slots, blocks)):
            g[si : si + 6] += Ji.T @ e
            for sj, Jj in zip(slots[i:], blocks[i:]):
                block = Ji.T @ Jj
                rows.append(offsets[0] + si)
                cols.append(offsets[1] + sj)
                data.append(block.ravel())
                if sj != si:
                    rows.append(offsets[0] + sj)
                    cols.append(offsets[1] + si)
                    data.append(block.T.ravel())
    if rows:
        H = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsc()
        # Duplicate summation order is not stable; average to make H exactly symmetric.
        H = ((H + H.T) * 0.5).tocsc()
    else:
        H = sp.csc_matrix((n, n))
    return LinearSystem(H, g, total, order)


def _retract(values: Mapping[int, Pose3], order: list[int], delta: np.ndarray) -> Values:
    out = dict(values)
    for i, k in enumerate(order):
        d = delta[6 * i : 6 * i + 6]
        if np.any(d):
            out[k] = values[k] @ exp(d)
    return out


def _solve_damped(system: LinearSystem, lam: float) -> np.ndarray | None:
    diag = np.maximum(system.H.diagonal(), DIAG_FLOOR)
    A = (system.H + sp.diags(lam * diag, format="csc")).tocsc()
    try:
        delta = spla.splu(A).solve(-system.g)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(delta)):
        return None
    return delta


def optimize(
    graph: Graph, init: Mapping[int, Pose3], settings: SolverSettings | None = None
) -> tuple[Values, SolveStats]:
    """Levenberg-Marquardt with multiplicative-diagonal damping and right retraction.

    Raises ``IllConditionedError`` when no damped system up to the lambda cap
    can be factorized.
    """
    s = settings or SolverSettings()
    if len(graph) == 0:
        raise ValueError("cannot optimize an empty graph")
    start = time.perf_counter()
    values: Values = dict(init)
    order = _ordering(graph, values)
    system = linearize(graph, values, order)
    stats = SolveStats(initial_cost=system.cost, final_cost=system.cost, cost_history=[system.cost])
    lam = s.initial_lambda

    while stats.iterations < s.max_iterations:
        if np.max(np.abs(system.g), initial=0.0) < s.gradient_tolerance:
            stats.converged = True
            break
        stats.iterations += 1
        accepted = False
        factorized = False
        while lam <= LAMBDA_CAP:
            delta = _solve_damped(system, lam)
            if delta is None:
                lam *= s.lambda_up
                continue
            factorized = True
            candidate = _retract(values, order, delta)
            new_cost = total_cost(graph, candidate)
            if new_cost < system.cost:
                accepted = True
                break
            if new_cost - system.cost <= s.relative_cost_tolerance * system.cost:
                # Already at the numerical floor of the cost.
                break
            lam *= s.lambda_up
        if not accepted:
            if not factorized:
                stats.wall_time = time.perf_counter() - start
                raise IllConditionedError(f"damped system singular up to lambda {LAMBDA_CAP:g}")
            stats.converged = True
            break
        old_cost = system.cost
        values = candidate
        lam = max(lam / s.lambda_down, 1e-20)
        system = linearize(graph, values, order)
        stats.cost_history.append(system.cost)
        if old_cost - system.cost <= s.relative_cost_tolerance * old_cost:
            stats.converged = True
            break

    stats.final_cost = system.cost
    stats.wall_time = time.perf_counter() - start
    return values, stats


def incremental_update(
    graph: Graph,
    new_factors: Iterable[Factor],
    new_values: Mapping[int, Pose3],
    prev: Mapping[int, Pose3],
    settings: SolverSettings | None = None,
) -> tuple[Values, SolveStats]:
    """Append to ``graph`` in place and re-optimize warm-started from ``prev``."""
    new_factors = list(new_factors)
    dup = sorted(set(new_values) & set(prev))
    if dup:
        raise ValueError(f"node ids already present: {dup}")
    if not new_factors and not new_values:
        c = total_cost(graph, prev) if len(graph) else 0.0
        return dict(prev), SolveStats(initial_cost=c, final_cost=c, converged=True, cost_history=[c])
    graph.extend(new_factors)
    init = dict(prev)
    init.update(new_values)
    return optimize(graph, init, settings)
