"""
🧪 Unit Tests — Mean Dynamic & Integration

Covers the assembled field, the fixed-step integrator (sampling, simplex
preservation, renormalization budget, convergence order), the aggregability
probe and the free-entry convergence of the admissible protocols.
"""

import numpy as np
import pytest

from heterodyn.dynamics import IntegratorConfig, aggregability_probe, field, integrate, pc_values
from heterodyn.exceptions import InfeasibleError, StepSizeError
from heterodyn.games import ASAG, IdiosyncraticMap, LinearPayoff
from heterodyn.protocols import (
    BNN,
    CappedLinear,
    Logit,
    PairwiseComparison,
    Smith,
    TemperedBRD,
    ThresholdRule,
    assign_protocols,
)
from heterodyn.typegrid import (
    DiscreteSpec,
    aggregate,
    build_grid,
    pure_state,
    random_state,
    uniform_state,
    variational_norm,
)


@pytest.fixture
def two_node():
    """Two equally likely types with opposite tastes for strategy 1; F⁰ = (0, ½)."""
    grid = build_grid(DiscreteSpec(points=(-1.0, 1.0), masses=(0.5, 0.5)), 1)
    game = ASAG(LinearPayoff(np.zeros((2, 2)), [0.0, 0.5]), IdiosyncraticMap([[0.0], [1.0]], [0.0, 0.0]))
    return grid, game


@pytest.fixture
def logit_scenario(unit_grid):
    """Smooth three-strategy field: linear ASAG under logit choice."""
    grid = unit_grid(8)
    A = np.array([[-1.0, 0.5, 0.0], [0.5, -1.0, 0.3], [0.0, 0.3, -0.5]])
    game = ASAG(LinearPayoff(A, [0.0, 0.2, 0.1]), IdiosyncraticMap([[1.0], [0.0], [-1.0]], [0.0, 0.0, 0.0]))
    return grid, game, assign_protocols(grid, [Logit(0.5)])


def test_mixed_field_is_assembled_per_protocol_group(unit_grid, entry_game, rng):
    """
    ✅ Each node moves under its own protocol; rows conserve mass and PC totals are weighted sums.
    """
    grid = unit_grid(10)
    x = random_state(grid, 2, rng)
    mixed = assign_protocols(grid, [Smith(), BNN()], ThresholdRule(threshold=0.5, below=0, above=1))

    evaluation = field(entry_game, mixed, x, grid)
    smith = field(entry_game, assign_protocols(grid, [Smith()]), x, grid).velocity
    bnn = field(entry_game, assign_protocols(grid, [BNN()]), x, grid).velocity
    np.testing.assert_allclose(evaluation.velocity[:5], smith[:5])
    np.testing.assert_allclose(evaluation.velocity[5:], bnn[5:])
    np.testing.assert_allclose(evaluation.velocity.sum(axis=1), 0.0, atol=1e-14)

    per_node, total = pc_values(evaluation, grid)
    assert total == pytest.approx(grid.weights @ per_node)
    assert np.all(per_node >= -1e-12)


def test_sampling_schedule(unit_grid, entry_game):
    """
    ✅ Samples at step 0, every sample_every steps and the final step.
    """
    grid = unit_grid(5)
    assignment = assign_protocols(grid, [Smith()])
    cfg = IntegratorConfig(method='rk4', dt=0.1, t_end=1.0, sample_every=3)

    trajectory = integrate(entry_game, assignment, uniform_state(grid, 2), grid, cfg)
    np.testing.assert_allclose(trajectory.times, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert trajectory.states.shape == (5, 5, 2)
    assert trajectory.velocities.shape == (5, 5, 2)


def test_uneven_horizon_ends_exactly_on_t_end(unit_grid, entry_game):
    """
    ✅ When dt does not divide t_end the last step is shortened so the final sample sits on t_end.
    """
    grid = unit_grid(5)
    assignment = assign_protocols(grid, [Smith()])
    cfg = IntegratorConfig(method='rk4', dt=0.3, t_end=1.0, sample_every=1)

    trajectory = integrate(entry_game, assignment, uniform_state(grid, 2), grid, cfg)
    np.testing.assert_allclose(trajectory.times, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert trajectory.times[-1] == 1.0
    np.testing.assert_allclose(trajectory.states.sum(axis=2), 1.0, atol=1e-12)


@pytest.mark.parametrize("options", [
    {'t_end': 0.0},
    {'t_end': -1.0},
    {'dt': 5.0, 't_end': 1.0},
    {'dt': 0.0},
    {'method': 'heun'},
])
def test_invalid_integrator_configs(options):
    with pytest.raises(ValueError):
        IntegratorConfig(**options)


def test_trajectory_stays_on_simplex(unit_grid, entry_game):
    grid = unit_grid(20)
    assignment = assign_protocols(grid, [Smith()])
    cfg = IntegratorConfig(dt=0.01, t_end=20.0, sample_every=100)

    trajectory = integrate(entry_game, assignment, pure_state(grid, 2, 1), grid, cfg)
    assert np.all(trajectory.states >= 0.0)
    np.testing.assert_allclose(trajectory.states.sum(axis=2), 1.0, atol=1e-12)
    assert trajectory.max_drift <= 1e-6
    assert trajectory.renorm_total <= 1e-3
    assert trajectory.pc.min() >= -1e-10


def test_renormalization_budget_raises(unit_grid):
    """
    ❌ A step so large that rows leave the simplex by far more than the budget raises StepSizeError.
    """
    grid = unit_grid(1)
    game = ASAG(LinearPayoff(np.zeros((2, 2)), [0.0, 100.0]), IdiosyncraticMap([[0.0], [0.0]], [0.0, 0.0]))
    assignment = assign_protocols(grid, [PairwiseComparison('square')])
    cfg = IntegratorConfig(method='euler', dt=1.0, t_end=2.0, sample_every=1)

    with pytest.raises(StepSizeError) as excinfo:
        integrate(game, assignment, uniform_state(grid, 2), grid, cfg)
    assert excinfo.value.time == pytest.approx(1.0)
    assert excinfo.value.renormalization > 1e-3


@pytest.mark.parametrize("method, dts, low, high", [
    ('rk4', (0.1, 0.05), 3.3, 4.7),
    ('euler', (0.02, 0.01), 0.8, 1.2),
])
def test_step_halving_convergence_order(logit_scenario, method, dts, low, high):
    """
    ✅ Halving dt shrinks the terminal error by 2⁴ for RK4 and by 2 for Euler.
    """
    grid, game, assignment = logit_scenario
    x0 = random_state(grid, 3, np.random.default_rng(4))

    def terminal(m, dt):
        cfg = IntegratorConfig(method=m, dt=dt, t_end=4.0, sample_every=10_000)
        return integrate(game, assignment, x0, grid, cfg).final_state

    reference = terminal('rk4', 0.00625)
    coarse, fine = (variational_norm(terminal(method, dt) - reference, grid) for dt in dts)
    order = np.log2(coarse / fine)
    assert low <= order <= high


def test_euler_step_reversal_error_is_second_order(logit_scenario):
    """
    ✅ An Euler step forward then backward misses the start by O(dt²): halving dt quarters the gap.
    """
    grid, game, assignment = logit_scenario
    x0 = random_state(grid, 3, np.random.default_rng(9))

    def round_trip_gap(dt):
        x1 = x0 + dt * field(game, assignment, x0, grid).velocity
        back = x1 - dt * field(game, assignment, x1, grid).velocity
        return variational_norm(back - x0, grid)

    order = np.log2(round_trip_gap(0.01) / round_trip_gap(0.005))
    assert 1.8 <= order <= 2.2

def test_probe_separates_opposite_sortings(two_node):
    """
    ✅ Same aggregate (½, ½), opposite sortings: aggregate velocities differ by 1 in L1.
    """
    grid, game = two_node
    assignment = assign_protocols(grid, [Smith()])

    report = aggregability_probe(game, assignment, grid, [0.5, 0.5], n_states=4)
    assert report.spread == pytest.approx(1.0, abs=1e-12)
    for state in report.states:
        np.testing.assert_allclose(aggregate(state, grid), [0.5, 0.5], atol=1e-12)


def test_probe_on_single_type_has_no_spread():
    grid = build_grid(DiscreteSpec(points=(0.0,), masses=(1.0,)), 1)
    game = ASAG(LinearPayoff(np.zeros((2, 2)), [0.0, 0.5]), IdiosyncraticMap([[0.0], [1.0]], [0.0, 0.0]))

    report = aggregability_probe(game, assign_protocols(grid, [Smith()]), grid, [0.3, 0.7], n_states=5)
    assert report.spread <= 1e-12


def test_probe_rejects_bad_targets(two_node):
    grid, game = two_node
    assignment = assign_protocols(grid, [Smith()])
    with pytest.raises(InfeasibleError):
        aggregability_probe(game, assignment, grid, [0.7, 0.7])
    with pytest.raises(ValueError):
        aggregability_probe(game, assignment, grid, [0.5, 0.5], n_states=1)


@pytest.mark.slow
@pytest.mark.parametrize("protocol", [Smith(), TemperedBRD(CappedLinear()), BNN()], ids=lambda p: p.name)
def test_free_entry_converges_to_threshold_equilibrium(protocol, unit_grid, entry_game):
    """
    ✅ From all-in, all-out, uniform and two random starts the entry mass settles at 0.5.
    """
    grid = unit_grid(100)
    assignment = assign_protocols(grid, [protocol])
    cfg = IntegratorConfig(method='euler', dt=0.5, t_end=10_000.0, sample_every=100_000)
    starts = [
        pure_state(grid, 2, 0),
        pure_state(grid, 2, 1),
        uniform_state(grid, 2),
        random_state(grid, 2, np.random.default_rng(1)),
        random_state(grid, 2, np.random.default_rng(2)),
    ]

    for x0 in starts:
        trajectory = integrate(entry_game, assignment, x0, grid, cfg)
        assert abs(aggregate(trajectory.final_state, grid)[0] - 0.5) <= 1e-3
