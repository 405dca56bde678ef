"""
🧮 Type Grid — heterodyn

This module discretizes the persistent type distribution of a heterogeneous
population into quadrature nodes and positive weights, and provides the two
measurements every other module builds on: the aggregate strategy
distribution and the variational norm of grid-supported signed densities.

### Features:
- **Quadrature**: midpoint rule for bounded uniform pieces, Gauss–Hermite for
  Gaussians, exact atoms for discrete distributions, tensor products for
  multi-dimensional types.
- **States**: a conditional state is a ``K×S`` array whose row ``k`` is the
  strategy mixture of type node ``k``; a delta state is a ``K×S`` array whose
  rows sum to zero.
- **Norms**: ``‖M‖ = Σₖ wₖ Σₛ |mₖₛ|``.

Grids are immutable once built; their arrays are flagged read-only.
"""

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.special import roots_hermite

from heterodyn.exceptions import DimensionMismatchError, GridSpecError, InfeasibleError

WEIGHT_TOL = 1e-12
SIMPLEX_TOL = 1e-9


# ---------------------------------------------------------------------------
# Distribution descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformSpec:
    """Uniform distribution over one or more disjoint intervals (mass ∝ length)."""
    intervals: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    stdev: float
    rule: Literal['gauss-hermite', 'midpoint'] = 'gauss-hermite'


@dataclass(frozen=True)
class DiscreteSpec:
    """Point masses; ``points`` are scalars or equal-length vectors."""
    points: tuple
    masses: tuple[float, ...]


@dataclass(frozen=True)
class ProductSpec:
    """Independent marginals, one per type coordinate."""
    marginals: tuple


@dataclass(frozen=True, eq=False)
class TypeGrid:
    """
    Quadrature image of the type distribution.

    Attributes:
        nodes (np.ndarray): ``K×d`` array of type points.
        weights (np.ndarray): ``K`` positive weights summing to one.
    """
    nodes: np.ndarray
    weights: np.ndarray
    label: str = field(default='')

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.array(self.weights, dtype=float).reshape(-1)

        if nodes.ndim != 2 or nodes.shape[0] != weights.shape[0] or nodes.shape[0] == 0:
            raise DimensionMismatchError(
                f"❌ Grid needs K nodes and K weights, got {nodes.shape} and {weights.shape}."
            )
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise GridSpecError("❌ Grid nodes and weights must be finite.")
        if np.any(weights <= 0.0):
            raise GridSpecError("❌ Grid weights must be strictly positive.")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise GridSpecError(f"❌ Grid weights sum to {weights.sum()!r}, expected 1.")
        if np.unique(nodes, axis=0).shape[0] != nodes.shape[0]:
            raise GridSpecError("❌ Grid nodes must be pairwise distinct.")

        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'weights', weights)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]


# ---------------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------------

def _allocate(lengths: np.ndarray, n_nodes: int) -> np.ndarray:
    # largest-remainder split of n_nodes proportional to interval length, at least one each
    extra = n_nodes - len(lengths)
    quota = extra * lengths / lengths.sum()
    counts = np.floor(quota).astype(int)
    remainder = extra - counts.sum()
    order = np.argsort(-(quota - counts), kind='stable')
    counts[order[:remainder]] += 1
    return counts + 1


def _uniform_rule(spec: UniformSpec, n_nodes: int):
    intervals = np.array(spec.intervals, dtype=float).reshape(-1, 2)
    if intervals.shape[0] == 0:
        raise GridSpecError("❌ Uniform distribution needs at least one interval.")
    if not np.all(np.isfinite(intervals)):
        raise GridSpecError("❌ Midpoint rule requested on an unbounded support.")
    lengths = intervals[:, 1] - intervals[:, 0]
    if np.any(lengths <= 0.0):
        raise GridSpecError("❌ Uniform intervals must have positive length.")
    if n_nodes < intervals.shape[0]:
        raise GridSpecError(
            f"❌ {intervals.shape[0]} intervals need at least as many nodes, got {n_nodes}."
        )

    nodes, weights = [], []
    for (lo, hi), length, count in zip(intervals, lengths, _allocate(lengths, n_nodes)):
        step = length / count
        nodes.append(lo + step * (np.arange(count) + 0.5))
        weights.append(np.full(count, (length / lengths.sum()) / count))
    return np.concatenate(nodes), np.concatenate(weights)


def _gaussian_rule(spec: GaussianSpec, n_nodes: int):
    if spec.rule == 'midpoint':
        raise GridSpecError("❌ Midpoint rule requested on an unbounded (Gaussian) support.")
    if not spec.stdev > 0.0:
        raise GridSpecError("❌ Gaussian standard deviation must be positive.")
    # physicists' Hermite roots, rescaled to N(mean, stdev²)
    points, weights = roots_hermite(n_nodes)
    return spec.mean + np.sqrt(2.0) * spec.stdev * points, weights / np.sqrt(np.pi)


def _discrete_rule(spec: DiscreteSpec):
    points = np.array(spec.points, dtype=float)
    masses = np.array(spec.masses, dtype=float)
    if points.shape[0] != masses.shape[0] or masses.shape[0] == 0:
        raise GridSpecError("❌ Discrete distribution needs one mass per point.")
    if np.any(masses <= 0.0):
        raise GridSpecError("❌ Discrete masses must be strictly positive.")
    return points, masses


def _marginal_rule(spec, n_nodes: int):
    if isinstance(spec, UniformSpec):
        return _uniform_rule(spec, n_nodes)
    if isinstance(spec, GaussianSpec):
        return _gaussian_rule(spec, n_nodes)
    if isinstance(spec, DiscreteSpec):
        return _discrete_rule(spec)
    raise GridSpecError(f"❌ Unsupported distribution description: {spec!r}")


def build_grid(dist_spec, n_nodes: int) -> TypeGrid:
    """
    Discretize a type distribution into a ``TypeGrid``.

    Args:
        dist_spec: ``UniformSpec``, ``GaussianSpec``, ``DiscreteSpec`` or
            ``ProductSpec`` (for ``d > 1``, ``n_nodes`` nodes per marginal).
        n_nodes (int): Number of quadrature nodes (ignored for discrete atoms).

    Returns:
        TypeGrid: Nodes and weights normalized to sum to one.

    Raises:
        GridSpecError: non-positive masses, ``n_nodes < 1``, or a midpoint rule
            requested on an unbounded support.
    """
    if n_nodes < 1:
        raise GridSpecError(f"❌ n_nodes must be at least 1, got {n_nodes}.")

    if isinstance(dist_spec, ProductSpec):
        if not dist_spec.marginals:
            raise GridSpecError("❌ Product distribution needs at least one marginal.")
        rules = [_marginal_rule(m, n_nodes) for m in dist_spec.marginals]
        for points, _ in rules:
            if points.ndim != 1:
                raise GridSpecError("❌ Product marginals must be one-dimensional.")
        mesh = np.meshgrid(*[p for p, _ in rules], indexing='ij')
        nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
        weights = np.ones(nodes.shape[0])
        for axis_weights in np.meshgrid(*[w for _, w in rules], indexing='ij'):
            weights = weights * axis_weights.reshape(-1)
    else:
        nodes, weights = _marginal_rule(dist_spec, n_nodes)

    weights = np.asarray(weights, dtype=float)
    return TypeGrid(nodes=nodes, weights=weights / weights.sum())


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

def check_state(state, grid: TypeGrid | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``state`` as a float ``K×S`` array after checking every row is on the simplex."""
    x = np.asarray(state, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatchError(f"❌ A conditional state is K×S, got shape {x.shape}.")
    if grid is not None and x.shape[0] != grid.size:
        raise DimensionMismatchError(
            f"❌ State has {x.shape[0]} rows but the grid has {grid.size} nodes."
        )
    if not np.all(np.isfinite(x)):
        raise DimensionMismatchError("❌ State entries must be finite.")
    if np.any(x < -tol) or np.any(np.abs(x.sum(axis=1) - 1.0) > tol):
        raise InfeasibleError("❌ Every state row must lie in the strategy simplex.")
    return x


def check_delta(delta, grid: TypeGrid | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``delta`` as a ``K×S`` array after checking every row sums to zero."""
    d = np.asarray(delta, dtype=float)
    if d.ndim != 2 or (grid is not None and d.shape[0] != grid.size):
        raise DimensionMismatchError(f"❌ Delta state shape {d.shape} does not match the grid.")
    if np.any(np.abs(d.sum(axis=1)) > tol):
        raise InfeasibleError("❌ Every delta-state row must sum to zero.")
    return d


def uniform_state(grid: TypeGrid, n_strategies: int) -> np.ndarray:
    return np.full((grid.size, n_strategies), 1.0 / n_strategies)


def pure_state(grid: TypeGrid, n_strategies: int, strategy: int) -> np.ndarray:
    x = np.zeros((grid.size, n_strategies))
    x[:, strategy] = 1.0
    return x


def random_state(grid: TypeGrid, n_strategies: int, rng: np.random.Generator) -> np.ndarray:
    """Independent flat-Dirichlet row per node."""
    return rng.dirichlet(np.ones(n_strategies), size=grid.size)


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def aggregate(state, grid: TypeGrid) -> np.ndarray:
    """Aggregate strategy distribution ``x̄ₛ = Σₖ wₖ xₖₛ``."""
    x = np.asarray(state, dtype=float)
    if x.ndim != 2 or x.shape[0] != grid.size:
        raise DimensionMismatchError(
            f"❌ State shape {x.shape} does not match a grid of {grid.size} nodes."
        )
    return grid.weights @ x


def variational_norm(delta, grid: TypeGrid) -> float:
    """Variational norm ``Σₖ wₖ Σₛ |Δₖₛ|`` of a grid-supported signed density."""
    d = np.asarray(delta, dtype=float)
    if d.ndim != 2 or d.shape[0] != grid.size:
        raise DimensionMismatchError(
            f"❌ Delta shape {d.shape} does not match a grid of {grid.size} nodes."
        )
    return float(grid.weights @ np.abs(d).sum(axis=1))


def disaggregations(grid: TypeGrid, target: Sequence[float], orders: Sequence[np.ndarray]) -> list:
    """
    Conditional states with aggregate exactly ``target``.

    Each node order yields a "water-filling" state: nodes are visited in order
    and handed strategy 0 until its target mass is used up, then strategy 1,
    and so on. Nodes are pure except where a strategy's mass runs out mid-node.
    """
    xbar = np.asarray(target, dtype=float)
    states = []
    for order in orders:
        x = np.zeros((grid.size, xbar.shape[0]))
        remaining = xbar.copy()
        strategy = 0
        for k in order:
            room = grid.weights[k]
            while room > 0.0 and strategy < xbar.shape[0]:
                take = min(room, remaining[strategy])
                x[k, strategy] += take / grid.weights[k]
                room -= take
                remaining[strategy] -= take
                if remaining[strategy] <= 0.0:
                    strategy += 1
            # rounding leftovers go to the last strategy handed out
            if room > 0.0:
                x[k, min(strategy, xbar.shape[0] - 1)] += room / grid.weights[k]
        states.append(x / x.sum(axis=1, keepdims=True))
    return states
