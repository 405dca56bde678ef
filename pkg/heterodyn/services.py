"""
🧪 Command Pipelines — heterodyn

This module turns a validated scenario into engine objects and runs the five
commands of the ``heterodyn`` management command. Each pipeline writes its
artifacts, evaluates the checks the scenario requests against the tolerances
in ``settings.HETERODYN``, and returns an ``Outcome``.

### Commands:
- **simulate**: integrate the mean dynamic; ``trajectory.csv``, ``diagnostics.csv``, ``summary.json``.
- **equilibrium**: damped best-response solve; ``equilibrium.json``.
- **potential-check**: finite-difference gradient check over random pairs; ``potential_check.json``.
- **aggregability-demo**: aggregate-velocity spread over equal-aggregate states; ``aggregability.json``.
- **assumptions**: empirical standing-assumption diagnostics; ``assumptions.json``.

Every command also writes ``summary.json`` with the machine-readable ``failures`` array.
A check that does not apply to the command being run is listed under ``skipped_checks``.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from heterodyn import exporters
from heterodyn.dynamics import aggregability_probe, integrate
from heterodyn.equilibrium import (
    assumption_diagnostics,
    cost_cdf,
    solve_binary_threshold,
    solve_damped_br,
)
from heterodyn.exceptions import NonFiniteError, PotentialSymmetryError, StepSizeError
from heterodyn.games import ASAG, EntryExitPayoff, Game
from heterodyn.potential import (
    gradient_check,
    gradient_order,
    local_max_check,
    lyapunov_series,
    maximize_welfare,
    potential_spec,
    random_feasible_pair,
    welfare,
)
from heterodyn.protocols import ProtocolAssignment, assign_protocols
from heterodyn.serializers import ScenarioConfig
from heterodyn.typegrid import TypeGrid, aggregate, check_state

logger = logging.getLogger(__name__)

COMMANDS = ('simulate', 'equilibrium', 'potential-check', 'aggregability-demo', 'assumptions')
COMMAND_CHECKS = {
    'simulate': ('simplex', 'renormalization', 'residual', 'pc', 'lyapunov', 'local_max', 'oracle', 'welfare'),
    'equilibrium': ('br_violation', 'residual', 'oracle'),
    'potential-check': ('gradient', 'gradient_order'),
    'aggregability-demo': ('nonaggregable', 'aggregable'),
    'assumptions': (),
}


def setting(name: str):
    return settings.HETERODYN[name]


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    grid: TypeGrid
    game: Game
    assignment: ProtocolAssignment
    state0: np.ndarray

    @property
    def tie_tol(self):
        return self.config.tolerances.tie_tol

    def rng(self, stream: int = 0):
        """Independent, reproducible PCG64 stream derived from the scenario seed."""
        return np.random.Generator(np.random.PCG64([self.config.seed, stream]))


def build_scenario(config: ScenarioConfig) -> Scenario:
    grid = config.grid.build()
    game = config.game.build(cache_max_entries=setting('MATCHING_CACHE_MAX_ENTRIES'))
    assignment = assign_protocols(grid, [p.build() for p in config.protocols], config.assignment.build())
    state0 = check_state(config.initial_state.build(grid, game.n_strategies), grid)
    return Scenario(config=config, grid=grid, game=game, assignment=assignment, state0=state0)


@dataclass
class Outcome:
    command: str
    payload: dict
    failures: list = field(default_factory=list)
    skipped_checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)

    @property
    def exit_status(self) -> int:
        return 0 if not self.failures else 2

    def summary(self) -> dict:
        return {
            'command': self.command,
            'status': 'pass' if not self.failures else 'fail',
            'failures': self.failures,
            'skipped_checks': self.skipped_checks,
            'artifacts': [p.name for p in self.artifacts],
            **self.payload,
        }


class Checks:
    """Evaluates the requested checks that apply to one command."""

    def __init__(self, requested, command):
        self.requested = set(requested)
        self.applicable = set(COMMAND_CHECKS[command])
        self.failures = []

    def wants(self, name):
        return name in self.requested and name in self.applicable

    def drop(self, names, reason):
        """Mark checks as not applicable to this scenario."""
        dropped = sorted(self.requested & self.applicable & set(names))
        if dropped:
            logger.info("Skipping checks %s: %s", ', '.join(dropped), reason)
        self.applicable -= set(names)

    def skipped(self):
        return sorted(self.requested - self.applicable)

    def expect(self, name, passed, value, limit, message):
        if not self.wants(name) or passed:
            return
        logger.warning("Check '%s' failed: %s (value=%r, tolerance=%r)", name, message, value, limit)
        self.failures.append({'check': name, 'message': message, 'value': value, 'tolerance': limit})


def entry_oracle(scenario: Scenario):
    """
    Free-entry threshold oracle for an unpriced entry-exit ASAG on scalar types.

    A type ``θ`` enters iff ``profile(x̄) + (L₀ − L₁)θ + (c₀ − c₁) > 0``; with
    ``a = L₁ − L₀ > 0`` this is ``θ < (profile(x̄) + c₀ − c₁)/a``. Returns ``None``
    when the scenario does not have that shape.
    """
    game, grid = scenario.game, scenario.grid
    if not (isinstance(game, ASAG) and isinstance(game.common, EntryExitPayoff)) or game.pricing or grid.dim != 1:
        return None
    slope = game.idiosyncratic.loadings[1, 0] - game.idiosyncratic.loadings[0, 0]
    shift = game.idiosyncratic.offset[0] - game.idiosyncratic.offset[1]
    if slope <= 0.0:
        return None
    try:
        cdf = cost_cdf(scenario.config.grid.distribution.build())
    except ValueError:
        return None
    return solve_binary_threshold(game.common.profile, lambda p: cdf((p + shift) / slope))


def _potential(scenario: Scenario):
    try:
        return potential_spec(scenario.game, scenario.grid)
    except PotentialSymmetryError as exc:
        logger.info("No heterogeneous potential for this scenario: %s", exc)
        return None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def simulate(scenario: Scenario, out_dir: Path) -> Outcome:
    config, grid, game = scenario.config, scenario.grid, scenario.game
    checks = Checks(config.checks, 'simulate')
    outcome = Outcome('simulate', {'scenario': config.name})
    cfg = config.integrator.build(renorm_budget=setting('RENORM_BUDGET'))
    inadmissible = sorted({p.name for p, _ in scenario.assignment.groups() if not p.admissible})
    if inadmissible:
        checks.drop(('pc', 'lyapunov', 'local_max'), f"protocols {', '.join(inadmissible)} are not admissible")

    try:
        trajectory = integrate(game, scenario.assignment, scenario.state0, grid, cfg, scenario.tie_tol)
    except (StepSizeError, NonFiniteError) as exc:
        name = 'renormalization' if isinstance(exc, StepSizeError) else 'non_finite'
        outcome.failures.append({'check': name, 'message': str(exc), 'value': exc.time, 'tolerance': None})
        return _finish(outcome, checks, scenario, out_dir)

    terminal = trajectory.final_state
    payload = outcome.payload
    payload.update({
        'terminal_time': float(trajectory.times[-1]),
        'terminal_residual': float(trajectory.residual[-1]),
        'terminal_aggregate': aggregate(terminal, grid).tolist(),
        'pc_min': float(trajectory.pc.min()),
        'renorm_total': trajectory.renorm_total,
        'max_simplex_drift': trajectory.max_drift,
    })
    checks.expect('simplex', trajectory.max_drift <= setting('SIMPLEX_TOL'), trajectory.max_drift,
                  setting('SIMPLEX_TOL'), "sampled rows left the simplex before renormalization")
    checks.expect('renormalization', trajectory.renorm_total <= setting('RENORM_BUDGET'),
                  trajectory.renorm_total, setting('RENORM_BUDGET'), "total renormalization over budget")
    checks.expect('residual', payload['terminal_residual'] <= setting('RESIDUAL_TOL'),
                  payload['terminal_residual'], setting('RESIDUAL_TOL'), "terminal state is not stationary")
    checks.expect('pc', payload['pc_min'] >= -setting('PC_SLACK'), payload['pc_min'],
                  setting('PC_SLACK'), "positive correlation violated along the trajectory")

    pspec = _potential(scenario)
    potential_values = welfare_values = None
    if pspec is None:
        checks.expect('lyapunov', False, None, setting('LYAPUNOV_SLACK'), "game has no heterogeneous potential")
        checks.expect('local_max', False, None, setting('LYAPUNOV_SLACK'), "game has no heterogeneous potential")
    else:
        report = lyapunov_series(pspec, trajectory, setting('LYAPUNOV_SLACK'))
        potential_values = report.values
        payload['potential'] = report.to_dict()
        checks.expect('lyapunov', report.monotone, report.max_decrease, setting('LYAPUNOV_SLACK'),
                      "potential decreased along the trajectory")
        slack = setting('LYAPUNOV_SLACK') + payload['terminal_residual']
        local = local_max_check(pspec, terminal, config.potential_check.n_directions, scenario.rng(3), slack)
        payload['local_max'] = local.to_dict()
        checks.expect('local_max', local.is_local_max, local.max_directional_derivative, slack,
                      "a feasible direction increases the potential at the endpoint")

    if isinstance(game, ASAG):
        welfare_values = np.array([welfare(game, x, grid) for x in trajectory.states])
        payload['terminal_welfare'] = float(welfare_values[-1])
        if checks.wants('welfare'):
            optimum = maximize_welfare(game, grid)
            drop = float(np.max(-np.diff(welfare_values), initial=0.0))
            gap = abs(optimum.value - welfare_values[-1])
            payload['welfare_optimum'] = optimum.to_dict()
            checks.expect('welfare', drop <= setting('LYAPUNOV_SLACK'), drop, setting('LYAPUNOV_SLACK'),
                          "welfare decreased along the priced trajectory")
            checks.expect('welfare', gap <= setting('ORACLE_TOL'), gap, setting('ORACLE_TOL'),
                          "terminal welfare is far from the social optimum")
    else:
        checks.expect('welfare', False, None, setting('ORACLE_TOL'), "welfare is defined for ASAG scenarios only")

    oracle = entry_oracle(scenario)
    if oracle is not None:
        gap = abs(payload['terminal_aggregate'][0] - oracle.aggregate)
        payload['oracle'] = {**oracle.to_dict(), 'aggregate_gap': gap}
        checks.expect('oracle', gap <= setting('ORACLE_TOL'), gap, setting('ORACLE_TOL'),
                      "terminal entry mass differs from the threshold oracle")
    else:
        checks.expect('oracle', False, None, setting('ORACLE_TOL'), "scenario has no threshold oracle")

    outputs = config.outputs
    if outputs.trajectory_csv:
        outcome.artifacts.append(exporters.write_csv(exporters.trajectory_frame(trajectory), out_dir / 'trajectory.csv'))
    if outputs.diagnostics_csv:
        frame = exporters.diagnostics_frame(trajectory, potential_values, welfare_values)
        outcome.artifacts.append(exporters.write_csv(frame, out_dir / 'diagnostics.csv'))
    return _finish(outcome, checks, scenario, out_dir)


def equilibrium(scenario: Scenario, out_dir: Path) -> Outcome:
    config, grid = scenario.config, scenario.grid
    checks = Checks(config.checks, 'equilibrium')
    params = config.equilibrium
    report = solve_damped_br(
        scenario.game, grid, params.damping, params.max_iters, params.tol, scenario.tie_tol,
        assignment=scenario.assignment,
    )
    payload = report.to_dict(grid)
    checks.expect('br_violation', report.br_violation <= config.tolerances.mass_tol, report.br_violation,
                  config.tolerances.mass_tol, "equilibrium conditions violated")
    checks.expect('residual', report.residual <= setting('RESIDUAL_TOL'), report.residual,
                  setting('RESIDUAL_TOL'), "equilibrium state is not stationary")
    oracle = entry_oracle(scenario)
    if oracle is not None:
        gap = abs(payload['aggregate'][0] - oracle.aggregate)
        payload['oracle'] = {**oracle.to_dict(), 'aggregate_gap': gap}
        checks.expect('oracle', gap <= setting('ORACLE_TOL'), gap, setting('ORACLE_TOL'),
                      "equilibrium entry mass differs from the threshold oracle")
    outcome = Outcome('equilibrium', {'scenario': config.name, 'converged': report.converged})
    outcome.artifacts.append(exporters.write_json(payload, out_dir / 'equilibrium.json'))
    return _finish(outcome, checks, scenario, out_dir)


def potential_check(scenario: Scenario, out_dir: Path) -> Outcome:
    config, grid, game = scenario.config, scenario.grid, scenario.game
    checks = Checks(config.checks, 'potential-check')
    params = config.potential_check
    outcome = Outcome('potential-check', {'scenario': config.name})
    try:
        pspec = potential_spec(game, grid)
    except PotentialSymmetryError as exc:
        checks.expect('gradient', False, None, setting('GRADIENT_TOL'), str(exc))
        outcome.payload['error'] = str(exc)
        return _finish(outcome, checks, scenario, out_dir)

    rng = scenario.rng(1)
    errors, orders = [], []
    for _ in range(params.n_pairs):
        x, d = random_feasible_pair(grid, game.n_strategies, rng)
        errors.append(gradient_check(pspec, game, x, d, params.h))
        order = gradient_order(pspec, game, x, d, params.order_h)
        if order is not None:
            orders.append(order)
    report = {
        'n_pairs': params.n_pairs,
        'h': params.h,
        'max_error': float(max(errors)),
        'orders_measured': len(orders),
        # None: every error sat at roundoff (quadratic potentials)
        'min_order': float(min(orders)) if orders else None,
    }
    checks.expect('gradient', report['max_error'] <= setting('GRADIENT_TOL'), report['max_error'],
                  setting('GRADIENT_TOL'), "potential derivative differs from the payoff profile")
    if orders:
        checks.expect('gradient_order', report['min_order'] >= setting('GRADIENT_MIN_ORDER'),
                      report['min_order'], setting('GRADIENT_MIN_ORDER'), "finite differences do not converge at O(h²)")
    outcome.payload.update(report)
    outcome.artifacts.append(exporters.write_json(report, out_dir / 'potential_check.json'))
    return _finish(outcome, checks, scenario, out_dir)


def aggregability_demo(scenario: Scenario, out_dir: Path) -> Outcome:
    config, grid = scenario.config, scenario.grid
    checks = Checks(config.checks, 'aggregability-demo')
    params = config.aggregability
    target = aggregate(scenario.state0, grid) if params.target is None else np.asarray(params.target)
    report = aggregability_probe(
        scenario.game, scenario.assignment, grid, target, params.n_states, scenario.rng(2), scenario.tie_tol,
    )
    payload = {**report.to_dict(), 'target': target.tolist()}
    checks.expect('nonaggregable', report.spread > setting('AGGREGABILITY_SPREAD'), report.spread,
                  setting('AGGREGABILITY_SPREAD'), "aggregate velocity barely depends on the joint distribution")
    checks.expect('aggregable', report.spread <= setting('AGGREGABLE_SPREAD'), report.spread,
                  setting('AGGREGABLE_SPREAD'), "aggregate velocity depends on more than the aggregate")
    outcome = Outcome('aggregability-demo', {'scenario': config.name, 'spread': report.spread})
    outcome.artifacts.append(exporters.write_json(payload, out_dir / 'aggregability.json'))
    return _finish(outcome, checks, scenario, out_dir)


def assumptions(scenario: Scenario, out_dir: Path) -> Outcome:
    config = scenario.config
    checks = Checks(config.checks, 'assumptions')
    params = config.diagnostics
    report = assumption_diagnostics(
        scenario.game, scenario.grid, params.n_samples, scenario.assignment, config.seed,
        params.min_distance, scenario.tie_tol,
    )
    outcome = Outcome('assumptions', {'scenario': config.name, **report.to_dict()})
    outcome.artifacts.append(exporters.write_json(report.to_dict(), out_dir / 'assumptions.json'))
    return _finish(outcome, checks, scenario, out_dir)


def _finish(outcome: Outcome, checks: Checks, scenario: Scenario, out_dir: Path) -> Outcome:
    outcome.failures.extend(checks.failures)
    outcome.payload.setdefault('protocols', scenario.assignment.describe())
    outcome.skipped_checks = checks.skipped()
    summary_path = out_dir / 'summary.json'
    outcome.artifacts.append(summary_path)
    exporters.write_json(outcome.summary(), summary_path)
    return outcome


PIPELINES = {
    'simulate': simulate,
    'equilibrium': equilibrium,
    'potential-check': potential_check,
    'aggregability-demo': aggregability_demo,
    'assumptions': assumptions,
}


def output_directory(config: ScenarioConfig, out_dir=None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if config.outputs.directory:
        return Path(config.outputs.directory)
    return Path(setting('OUTPUT_DIR')) / config.name


def run(command: str, config: ScenarioConfig, out_dir=None) -> Outcome:
    """
    Run one command on a validated scenario.

    Args:
        command (str): One of ``COMMANDS``.
        config (ScenarioConfig): Parsed scenario.
        out_dir: Artifact directory; defaults to the scenario's ``outputs.directory``
            or ``HETERODYN['OUTPUT_DIR']/<name>``.

    Returns:
        Outcome: payload, failures and written artifacts; ``exit_status`` is 0 iff
        every requested check passed.
    """
    if command not in PIPELINES:
        raise ValueError(f"❌ Unknown command '{command}'; expected one of {', '.join(COMMANDS)}.")
    directory = output_directory(config, out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    logger.info("Running '%s' on scenario '%s' into %s", command, config.name, directory)
    outcome = PIPELINES[command](build_scenario(config), directory)
    logger.info("'%s' finished with %d failed checks", command, len(outcome.failures))
    return outcome
