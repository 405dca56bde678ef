"""
🧪 Unit Tests — Type Grids

Covers discretization of type distributions (midpoint, Gauss–Hermite, atoms,
products), state validation, the aggregate map, the variational norm and
equal-aggregate disaggregations.
"""

import numpy as np
import pytest

from heterodyn.exceptions import DimensionMismatchError, GridSpecError, InfeasibleError
from heterodyn.typegrid import (
    DiscreteSpec,
    GaussianSpec,
    ProductSpec,
    TypeGrid,
    UniformSpec,
    aggregate,
    build_grid,
    check_state,
    disaggregations,
    pure_state,
    random_state,
    uniform_state,
    variational_norm,
)


def test_midpoint_rule_on_unit_interval():
    """
    ✅ Four midpoint nodes on [0, 1] with equal weights.
    """
    grid = build_grid(UniformSpec(((0.0, 1.0),)), 4)

    assert grid.size == 4 and grid.dim == 1
    np.testing.assert_allclose(grid.nodes[:, 0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(grid.weights, 0.25)


def test_uniform_pieces_get_nodes_by_length():
    """
    ✅ Disjoint intervals share nodes in proportion to their length, each at least one.
    """
    grid = build_grid(UniformSpec(((0.0, 1.0), (2.0, 4.0))), 3)

    np.testing.assert_allclose(grid.nodes[:, 0], [0.5, 2.5, 3.5])
    np.testing.assert_allclose(grid.weights, [1 / 3, 1 / 3, 1 / 3])


def test_gauss_hermite_matches_first_two_moments():
    """
    ✅ Gauss–Hermite nodes reproduce the mean and variance of N(μ, σ²) exactly.
    """
    grid = build_grid(GaussianSpec(mean=1.5, stdev=0.4), 10)
    theta = grid.nodes[:, 0]

    assert grid.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert grid.weights @ theta == pytest.approx(1.5, abs=1e-12)
    assert grid.weights @ (theta - 1.5) ** 2 == pytest.approx(0.16, abs=1e-12)


def test_discrete_masses_are_normalized():
    grid = build_grid(DiscreteSpec(points=(0.0, 1.0), masses=(1.0, 3.0)), 1)

    np.testing.assert_allclose(grid.weights, [0.25, 0.75])


def test_product_grid_is_tensor_product():
    """
    ✅ Product of a 2-node uniform and a 2-atom discrete marginal gives 4 nodes in d=2.
    """
    spec = ProductSpec((UniformSpec(((0.0, 1.0),)), DiscreteSpec(points=(-1.0, 1.0), masses=(0.2, 0.8))))
    grid = build_grid(spec, 2)

    assert grid.size == 4 and grid.dim == 2
    np.testing.assert_allclose(grid.weights, [0.1, 0.4, 0.1, 0.4])
    np.testing.assert_allclose(grid.nodes[1], [0.25, 1.0])


@pytest.mark.parametrize("spec, n_nodes", [
    (UniformSpec(((0.0, 1.0),)), 0),
    (DiscreteSpec(points=(0.0, 1.0), masses=(1.0, -1.0)), 1),
    (GaussianSpec(mean=0.0, stdev=1.0, rule='midpoint'), 5),
    (UniformSpec(((0.0, np.inf),)), 5),
])
def test_bad_distributions_are_rejected(spec, n_nodes):
    """
    ❌ Non-positive masses, n_nodes < 1 and midpoint rules on unbounded supports fail.
    """
    with pytest.raises(GridSpecError):
        build_grid(spec, n_nodes)


def test_grid_rejects_duplicate_nodes_and_is_read_only():
    with pytest.raises(GridSpecError):
        TypeGrid(nodes=[0.0, 0.0], weights=[0.5, 0.5])

    grid = TypeGrid(nodes=[0.0, 1.0], weights=[0.5, 0.5])
    with pytest.raises(ValueError):
        grid.weights[0] = 1.0


def test_aggregate_and_variational_norm(unit_grid):
    """
    ✅ x̄ is the weighted row average and ‖M‖ the weighted row L1 norm.
    """
    grid = unit_grid(4)
    x = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [0.25, 0.75]])

    np.testing.assert_allclose(aggregate(x, grid), [0.4375, 0.5625])
    delta = np.array([[1.0, -1.0], [0.0, 0.0], [-0.5, 0.5], [0.0, 0.0]])
    assert variational_norm(delta, grid) == pytest.approx(0.25 * 2.0 + 0.25 * 1.0)


def test_variational_norm_is_a_norm_that_bounds_aggregates(unit_grid, rng):
    """
    ✅ ‖cΔ‖ = |c|·‖Δ‖, the triangle inequality holds, and aggregation never enlarges a
    signed density: ‖Σₖ wₖ Δₖ‖₁ ≤ ‖Δ‖.
    """
    grid = unit_grid(7)
    for _ in range(50):
        a, b = rng.normal(size=(2, 7, 3))
        c = rng.normal()

        assert variational_norm(c * a, grid) == pytest.approx(abs(c) * variational_norm(a, grid))
        assert variational_norm(a + b, grid) <= variational_norm(a, grid) + variational_norm(b, grid) + 1e-12
        assert np.abs(aggregate(a, grid)).sum() <= variational_norm(a, grid) + 1e-12

        x, y = random_state(grid, 3, rng), random_state(grid, 3, rng)
        assert np.abs(aggregate(x, grid) - aggregate(y, grid)).sum() <= variational_norm(x - y, grid) + 1e-12


def test_state_constructors_live_on_the_simplex(unit_grid, rng):
    grid = unit_grid(5)
    for x in (uniform_state(grid, 3), pure_state(grid, 3, 2), random_state(grid, 3, rng)):
        checked = check_state(x, grid)
        np.testing.assert_allclose(checked.sum(axis=1), 1.0)
        assert np.all(checked >= 0.0)


def test_check_state_errors(unit_grid):
    """
    ❌ Wrong row count is a dimension error; rows off the simplex are infeasible.
    """
    grid = unit_grid(3)
    with pytest.raises(DimensionMismatchError):
        check_state(np.full((2, 2), 0.5), grid)
    with pytest.raises(InfeasibleError):
        check_state(np.array([[0.6, 0.6], [0.5, 0.5], [0.5, 0.5]]), grid)
    with pytest.raises(InfeasibleError):
        check_state(np.array([[1.2, -0.2], [0.5, 0.5], [0.5, 0.5]]), grid)


@pytest.mark.parametrize("n_nodes", [1, 2, 7, 30])
def test_disaggregations_hit_the_target_aggregate(unit_grid, n_nodes):
    """
    ✅ Every water-filled state is feasible and aggregates exactly to the target.
    """
    grid = unit_grid(n_nodes)
    target = np.array([0.3, 0.5, 0.2])
    orders = [np.arange(n_nodes), np.arange(n_nodes)[::-1], np.random.default_rng(1).permutation(n_nodes)]

    for x in disaggregations(grid, target, orders):
        check_state(x, grid)
        np.testing.assert_allclose(aggregate(x, grid), target, atol=1e-12)


def test_opposite_orders_sort_types_differently(unit_grid):
    grid = unit_grid(2)
    forward, backward = disaggregations(grid, [0.5, 0.5], [np.arange(2), np.arange(2)[::-1]])

    np.testing.assert_allclose(forward, [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(backward, [[0.0, 1.0], [1.0, 0.0]])
