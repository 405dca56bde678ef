"""
🧪 Unit Tests — Heterogeneous Population Games

Payoff profiles of the three game classes against direct formulas, best-response
sets with ties, symmetry preconditions and dynamic Pigouvian prices.
"""

import numpy as np
import pytest

from heterodyn.exceptions import DimensionMismatchError, GameSpecError, NonFiniteError, PotentialSymmetryError
from heterodyn.games import (
    ASAG,
    BilinearMatching,
    ConstantKernel,
    EntryExitPayoff,
    ExponentialProfile,
    GaussianKernel,
    IdiosyncraticMap,
    LinearPayoff,
    PolynomialProfile,
    ProductKernel,
    RandomMatching,
    SeparablePayoff,
    Structured,
    TwoPopulationPayoff,
    apply_pricing,
    best_response_sets,
    finite_difference_jacobian,
    pigou_prices,
    pure_best_response,
)
from heterodyn.typegrid import DiscreteSpec, aggregate, build_grid


@pytest.fixture
def matching():
    """Coordination stakes scale with the product of the matched types."""
    return BilinearMatching(
        base=[[2.0, 0.0], [0.0, 1.0]],
        own=[[0.1, 0.0], [0.3, 0.0]],
        opponent=[[0.0, 0.2], [0.0, 0.1]],
        cross=[[0.5, 0.0], [0.0, -0.5]],
    )


def test_linear_asag_adds_types_to_common_payoff():
    """
    ✅ With the identity map, πₖ = A x̄ + b + θₖ.
    """
    grid = build_grid(DiscreteSpec(points=((0.0, 1.0), (2.0, -1.0)), masses=(0.5, 0.5)), 1)
    A = np.array([[-1.0, 0.5], [0.5, -2.0]])
    b = np.array([0.1, 0.0])
    game = ASAG(LinearPayoff(A, b), IdiosyncraticMap.identity(2))
    x = np.array([[1.0, 0.0], [0.25, 0.75]])

    xbar = aggregate(x, grid)
    expected = A @ xbar + b + grid.nodes
    np.testing.assert_allclose(game.payoff_profile(x, grid), expected)


def test_entry_payoffs(entry_game, unit_grid):
    """
    ✅ Entering pays 1 − x̄_I − θ, staying out pays zero.
    """
    grid = unit_grid(4)
    x = np.tile([0.5, 0.5], (4, 1))

    pi = entry_game.payoff_profile(x, grid)
    np.testing.assert_allclose(pi[:, 0], 0.5 - grid.nodes[:, 0])
    np.testing.assert_allclose(pi[:, 1], 0.0)


def test_profiles_and_antiderivatives():
    """
    ✅ Gauss–Legendre antiderivative matches the closed form of the exponential profile.
    """
    poly = PolynomialProfile((1.0, -1.0))
    assert poly.antiderivative(0.5) == pytest.approx(0.375)
    assert poly.derivative(0.3) == pytest.approx(-1.0)

    expo = ExponentialProfile(scale=2.0, rate=3.0, shift=-0.5)
    y = 0.7
    closed = 2.0 / 3.0 * (1.0 - np.exp(-3.0 * y)) - 0.5 * y
    assert expo.antiderivative(y) == pytest.approx(closed, abs=1e-12)


def test_separable_jacobian_matches_finite_differences():
    common = SeparablePayoff(((0.0, -1.0, 0.5), (1.0, -2.0), (0.0, 0.0, 0.0, -3.0)))
    xbar = np.array([0.2, 0.5, 0.3])

    np.testing.assert_allclose(
        common.jacobian(xbar), finite_difference_jacobian(common, xbar, 1e-6), atol=1e-7,
    )


def test_best_response_sets_respect_tie_tolerance():
    """
    ✅ Strategies within tie_tol of the maximum are tied; the pure best response is the lowest index.
    """
    payoffs = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0 - 1e-12], [3.0, 0.0, 2.9]])

    assert best_response_sets(payoffs, 1e-9) == [frozenset({0, 1}), frozenset({1, 2}), frozenset({0})]
    np.testing.assert_array_equal(pure_best_response(payoffs, 1e-9), [0, 1, 0])
    assert best_response_sets(payoffs, 0.2)[2] == frozenset({0, 2})


def test_random_matching_matches_direct_sum(matching, unit_grid, rng):
    """
    ✅ πₖ = Σₗ wₗ U(θₖ, θₗ) xₗ, with and without the cached payoff tensor.
    """
    grid = unit_grid(6)
    x = rng.dirichlet(np.ones(2), size=6)
    thetas = grid.nodes[:, 0]

    direct = np.array([
        sum(grid.weights[l] * matching.rows(thetas[k], thetas)[l] @ x[l] for l in range(6))
        for k in range(6)
    ])
    cached = RandomMatching(matching)
    uncached = RandomMatching(matching, cache_max_entries=0)

    np.testing.assert_allclose(cached.payoff_profile(x, grid), direct, atol=1e-14)
    np.testing.assert_allclose(uncached.payoff_profile(x, grid), direct, atol=1e-14)
    assert uncached.payoff_tensor(grid) is None
    assert cached.payoff_tensor(grid) is cached.payoff_tensor(grid)


def test_payoff_cache_holds_one_tensor_per_kernel(matching, unit_grid, rng):
    """
    ✅ Evaluating on a stream of fresh grids keeps a single cached tensor, always for the latest grid.
    """
    game = RandomMatching(matching)

    for size in (3, 4, 5, 4, 3):
        grid = unit_grid(size)
        x = rng.dirichlet(np.ones(2), size=size)
        np.testing.assert_allclose(
            game.payoff_profile(x, grid), RandomMatching(matching).payoff_profile(x, grid), atol=1e-14,
        )
        assert len(game._cache) == 1
        assert game.payoff_tensor(grid).shape == (size, size, 2, 2)


def test_random_matching_potential_preconditions(unit_grid):
    """
    ❌ A missing or asymmetric U⁰, or a remainder with unequal rows, has no potential.
    """
    grid = unit_grid(3)
    symmetric = BilinearMatching(base=[[2.0, 0.0], [0.0, 1.0]], cross=[[0.5, 0.1], [0.1, -0.5]])
    RandomMatching(symmetric, symmetric).check_potential(grid)

    # U − U⁰ = [[1, 2], [1, 2]]: the same payoff whatever one plays
    shifted = BilinearMatching(base=[[3.0, 2.0], [1.0, 3.0]], cross=[[0.5, 0.1], [0.1, -0.5]])
    RandomMatching(shifted, symmetric).check_potential(grid)

    with pytest.raises(PotentialSymmetryError):
        RandomMatching(symmetric).check_potential(grid)
    lopsided = BilinearMatching(base=[[2.0, 1.0], [0.0, 1.0]])
    with pytest.raises(PotentialSymmetryError):
        RandomMatching(lopsided, lopsided).check_potential(grid)
    own_only = BilinearMatching(base=[[2.0, 0.0], [0.0, 1.0]], own=[[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(PotentialSymmetryError):
        RandomMatching(own_only, own_only).check_potential(grid)
    with pytest.raises(PotentialSymmetryError):
        RandomMatching(BilinearMatching(base=[[3.0, 2.0], [0.0, 3.0]]), symmetric).check_potential(grid)


def test_structured_matches_direct_sum(unit_grid, rng):
    """
    ✅ πₖ = Σₗ wₗ g(θₖ, θₗ) F⁰(xₖ, xₗ) for a two-population payoff with a cubic own term.
    """
    grid = unit_grid(5)
    base = TwoPopulationPayoff(
        own=[[1.0, 0.0], [0.0, 0.5]], opponent=[[1.0, 0.2], [0.2, 1.0]], offset=[0.0, 0.1], cubic=[0.2, 0.4],
    )
    kernel = GaussianKernel(bandwidth=0.3)
    game = Structured(base, kernel)
    x = rng.dirichlet(np.ones(2), size=5)
    g = kernel.matrix(grid)

    def f0(a, b):
        return base.own @ a + base.opponent @ b + base.offset + base.cubic * a ** 2

    direct = np.array([sum(grid.weights[l] * g[k, l] * f0(x[k], x[l]) for l in range(5)) for k in range(5)])
    np.testing.assert_allclose(game.payoff_profile(x, grid), direct, atol=1e-14)
    game.check_potential(grid)


def test_structured_potential_needs_symmetric_matrices(unit_grid):
    grid = unit_grid(3)
    skew = TwoPopulationPayoff(own=np.eye(2), opponent=[[1.0, 0.5], [0.0, 1.0]], offset=[0.0, 0.0])

    with pytest.raises(PotentialSymmetryError):
        Structured(skew, ConstantKernel()).check_potential(grid)
    assert ProductKernel(scale=-1.0, shift=0.5).matrix(grid)[0, 2] == pytest.approx(-5.0 / 36.0 + 0.5)


def test_linear_potential_needs_symmetric_matrix():
    with pytest.raises(PotentialSymmetryError):
        LinearPayoff([[0.0, 1.0], [0.0, 0.0]], [0.0, 0.0]).check_potential()


def test_shape_and_finiteness_errors(entry_game, unit_grid):
    grid = unit_grid(3)
    with pytest.raises(DimensionMismatchError):
        entry_game.payoff_profile(np.full((2, 2), 0.5), grid)
    with pytest.raises(DimensionMismatchError):
        IdiosyncraticMap.identity(2)(grid)
    with pytest.raises(GameSpecError):
        ASAG(LinearPayoff(np.zeros((3, 3)), np.zeros(3)), IdiosyncraticMap([[1.0], [0.0]], [0.0, 0.0]))

    exploding = ASAG(LinearPayoff(np.zeros((2, 2)), [np.inf, 0.0]), IdiosyncraticMap([[1.0], [0.0]], [0.0, 0.0]))
    with pytest.raises(NonFiniteError):
        exploding.payoff_profile(np.full((3, 2), 0.5), grid)


def test_congestion_prices_charge_the_marginal_delay():
    """
    ✅ For F⁰ₛ = −cₛ x̄ₛ the Pigouvian price is Tₛ = cₛ x̄ₛ, analytic or finite-difference.
    """
    common = SeparablePayoff(((0.0, -1.0), (0.0, -2.0), (0.0, -3.0)))
    xbar = np.array([0.5, 0.3, 0.2])

    np.testing.assert_allclose(pigou_prices(common, xbar), [0.5, 0.6, 0.6])
    np.testing.assert_allclose(pigou_prices(common, xbar, 1e-6, analytic=False), [0.5, 0.6, 0.6], atol=1e-8)
    with pytest.raises(GameSpecError):
        pigou_prices(common, xbar, fd_step=0.0)


def test_pricing_turns_payoffs_into_welfare_gradient(unit_grid):
    """
    ✅ Priced payoffs are F⁰ + Jᵀx̄ + θ̃; pricing a non-ASAG is rejected.
    """
    grid = unit_grid(4)
    A = np.array([[-1.0, 0.3], [-0.2, -0.5]])
    game = ASAG(LinearPayoff(A, [0.0, 0.2]), IdiosyncraticMap([[1.0], [0.0]], [0.0, 0.0]))
    priced = apply_pricing(game)
    x = np.array([[1.0, 0.0], [0.5, 0.5], [0.2, 0.8], [0.0, 1.0]])
    xbar = aggregate(x, grid)

    np.testing.assert_allclose(
        priced.payoff_profile(x, grid) - game.payoff_profile(x, grid), np.tile(A.T @ xbar, (4, 1)),
    )
    assert not apply_pricing(priced, pricing=False).pricing
    with pytest.raises(GameSpecError):
        apply_pricing(Structured(TwoPopulationPayoff(np.eye(2), np.eye(2), [0.0, 0.0]), ConstantKernel()))


def test_entry_exit_jacobian():
    common = EntryExitPayoff(PolynomialProfile((1.0, -1.0, 0.5)))
    np.testing.assert_allclose(common.jacobian(np.array([0.4, 0.6])), [[-0.6, 0.0], [0.0, 0.0]])
