"""
🌊 Mean Dynamic & Integration — heterodyn

Assembles the per-node mean dynamic of a heterogeneous population (the
density of the joint strategy–type dynamic), integrates it with a fixed-step
Runge–Kutta scheme, and probes whether the aggregate velocity is determined by
the aggregate state alone.

### Features:
- **field**: one payoff snapshot per call, then each protocol group's rates, vectorized over its nodes.
- **integrate**: RK4 or Euler; entries clamped to ``[0, 1]`` and rows renormalized after every
  step, with the cumulative correction tracked against a budget.
- **Trajectory**: sampled states, velocities and the positive-correlation / residual diagnostics.
- **aggregability_probe**: equal-aggregate states with different joint distributions and the spread
  of their aggregate velocities.
"""

import logging
from dataclasses import dataclass

import numpy as np

from heterodyn.exceptions import DimensionMismatchError, InfeasibleError, NonFiniteError, StepSizeError
from heterodyn.games import DEFAULT_TIE_TOL, Game
from heterodyn.protocols import ProtocolAssignment, velocity
from heterodyn.typegrid import SIMPLEX_TOL, TypeGrid, check_state, disaggregations, variational_norm

logger = logging.getLogger(__name__)

DEFAULT_RENORM_BUDGET = 1e-3


@dataclass(frozen=True)
class FieldEval:
    velocity: np.ndarray
    payoffs: np.ndarray
    max_rate: float


def field(game: Game, assignment: ProtocolAssignment, state, grid: TypeGrid,
          tie_tol: float = DEFAULT_TIE_TOL) -> FieldEval:
    """
    Mean-dynamic density ``vₖ = V^{ρ(k)}(πₖ, xₖ)`` at a single state snapshot.

    Args:
        game (Game): Heterogeneous population game.
        assignment (ProtocolAssignment): Protocol per type node.
        state: ``K×S`` conditional state.
        grid (TypeGrid): Type grid.
        tie_tol (float): Best-response tie tolerance.

    Returns:
        FieldEval: velocity rows, the payoff profile they were computed from and the largest rate used.
    """
    x = np.asarray(state, dtype=float)
    if assignment.size != grid.size:
        raise DimensionMismatchError(
            f"❌ Protocol assignment covers {assignment.size} nodes, grid has {grid.size}."
        )
    pi = game.payoff_profile(x, grid)
    v = np.empty_like(x)
    max_rate = 0.0
    for protocol, nodes in assignment.groups():
        rho = protocol.rates(pi[nodes], x[nodes], tie_tol)
        v[nodes] = velocity(rho, x[nodes])
        max_rate = max(max_rate, float(rho.max(initial=0.0)))
    return FieldEval(velocity=v, payoffs=pi, max_rate=max_rate)


def pc_values(evaluation: FieldEval, grid: TypeGrid):
    """Per-node ``πₖ·vₖ`` and the weighted total ``Σₖ wₖ πₖ·vₖ``."""
    per_node = np.einsum('ks,ks->k', evaluation.payoffs, evaluation.velocity)
    return per_node, float(grid.weights @ per_node)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = 'rk4'
    dt: float = 0.01
    t_end: float = 10.0
    sample_every: int = 10
    clamp_tol: float = SIMPLEX_TOL
    renorm_budget: float = DEFAULT_RENORM_BUDGET

    def __post_init__(self):
        if self.method not in ('rk4', 'euler'):
            raise ValueError(f"❌ Unknown integration method '{self.method}'.")
        if not self.dt > 0.0 or not self.t_end > 0.0:
            raise ValueError("❌ Integrator needs dt > 0 and t_end > 0.")
        if self.dt > self.t_end:
            raise ValueError(f"❌ Step dt={self.dt:g} is longer than the horizon t_end={self.t_end:g}.")
        if self.sample_every < 1 or not self.clamp_tol > 0.0 or not self.renorm_budget > 0.0:
            raise ValueError("❌ sample_every, clamp_tol and renorm_budget must be positive.")

    @property
    def n_steps(self) -> int:
        ratio = self.t_end / self.dt
        return max(1, int(np.ceil(ratio - 1e-9 * ratio)))

    def step_times(self) -> np.ndarray:
        """End time of every step; the last step is shortened to land on ``t_end``."""
        times = np.arange(1, self.n_steps + 1) * self.dt
        times[-1] = self.t_end
        return times


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    pc: np.ndarray
    residual: np.ndarray
    renorm: np.ndarray
    # largest simplex violation seen before any correction
    max_drift: float

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def renorm_total(self) -> float:
        return float(self.renorm[-1])


def _correct(x: np.ndarray, grid: TypeGrid, clamp_tol: float):
    """Clamp to ``[0, 1]``, renormalize drifting rows; return state, correction size and raw drift."""
    sums = x.sum(axis=1)
    drift = max(float(np.max(np.abs(sums - 1.0))), float(np.max(-x, initial=0.0)))
    corrected = np.clip(x, 0.0, 1.0)
    sums = corrected.sum(axis=1)
    off = np.abs(sums - 1.0) > clamp_tol
    if np.any(off):
        corrected[off] /= sums[off, None]
    return corrected, variational_norm(corrected - x, grid), drift


def integrate(game: Game, assignment: ProtocolAssignment, state0, grid: TypeGrid,
              cfg: IntegratorConfig = IntegratorConfig(), tie_tol: float = DEFAULT_TIE_TOL) -> Trajectory:
    """
    Integrate the mean dynamic from ``state0`` over ``[0, cfg.t_end]``.

    Args:
        game (Game): Heterogeneous population game.
        assignment (ProtocolAssignment): Protocol per type node.
        state0: Initial conditional state (rows on the simplex).
        grid (TypeGrid): Type grid.
        cfg (IntegratorConfig): Scheme, step size, horizon, sampling and correction tolerances.
        tie_tol (float): Best-response tie tolerance.

    Returns:
        Trajectory: samples at step 0, every ``cfg.sample_every`` steps and the final step.

    Raises:
        NonFiniteError: a state entry became NaN or infinite (``time`` holds the step end).
        StepSizeError: cumulative renormalization exceeded ``cfg.renorm_budget``.
    """
    x = check_state(state0, grid).copy()

    def rhs(y):
        return field(game, assignment, y, grid, tie_tol).velocity

    times, states, velocities, pcs, residuals, renorms = [], [], [], [], [], []
    renorm_total = 0.0
    max_drift = 0.0

    def record(t):
        evaluation = field(game, assignment, x, grid, tie_tol)
        times.append(t)
        states.append(x.copy())
        velocities.append(evaluation.velocity)
        pcs.append(pc_values(evaluation, grid)[1])
        residuals.append(variational_norm(evaluation.velocity, grid))
        renorms.append(renorm_total)
        logger.debug("t=%.4f residual=%.3e pc=%.3e renorm=%.3e", t, residuals[-1], pcs[-1], renorm_total)

    n_steps = cfg.n_steps
    logger.info(
        "Integrating K=%d S=%d with %s, dt=%g over %d steps",
        grid.size, x.shape[1], cfg.method, cfg.dt, n_steps,
    )
    record(0.0)
    t_prev = 0.0
    for step, t in enumerate(cfg.step_times(), start=1):
        dt = t - t_prev
        t_prev = t
        if cfg.method == 'rk4':
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * dt * k1)
            k3 = rhs(x + 0.5 * dt * k2)
            k4 = rhs(x + dt * k3)
            x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x_next = x + dt * rhs(x)

        if not np.all(np.isfinite(x_next)):
            raise NonFiniteError(f"❌ Non-finite state at t={t:g}.", time=t)
        x, correction, drift = _correct(x_next, grid, cfg.clamp_tol)
        renorm_total += correction
        max_drift = max(max_drift, drift)
        if renorm_total > cfg.renorm_budget:
            logger.warning("Renormalization budget exceeded at t=%g (%.3e)", t, renorm_total)
            raise StepSizeError(
                f"❌ Cumulative renormalization {renorm_total:.3e} exceeds {cfg.renorm_budget:g} at t={t:g}; "
                f"reduce dt.",
                time=t, renormalization=renorm_total,
            )
        if step % cfg.sample_every == 0 or step == n_steps:
            record(t)

    if renorm_total > 0.0:
        logger.info("Total renormalization %.3e (max drift %.3e)", renorm_total, max_drift)
    return Trajectory(
        times=np.asarray(times),
        states=np.asarray(states),
        velocities=np.asarray(velocities),
        pc=np.asarray(pcs),
        residual=np.asarray(residuals),
        renorm=np.asarray(renorms),
        max_drift=max_drift,
    )


@dataclass(frozen=True)
class AggregabilityReport:
    spread: float
    aggregate_velocities: np.ndarray
    states: tuple

    def to_dict(self):
        return {
            'spread': self.spread,
            'n_states': len(self.states),
            'aggregate_velocities': self.aggregate_velocities.tolist(),
        }


def aggregability_probe(game: Game, assignment: ProtocolAssignment, grid: TypeGrid, xbar_target,
                        n_states: int = 4, rng=None, tie_tol: float = DEFAULT_TIE_TOL) -> AggregabilityReport:
    """
    Spread of aggregate velocities ``Σₖ wₖ vₖ`` across states sharing one aggregate.

    States are built by water-filling the target over the nodes in identity
    order, then reversed order, then with every node playing the target
    mixture, then in random node orders. A positive spread shows the aggregate
    dynamic is not a function of the aggregate state.

    Raises:
        InfeasibleError: if ``xbar_target`` is not a simplex vector.
    """
    target = np.asarray(xbar_target, dtype=float)
    if target.shape != (game.n_strategies,) or np.any(target < 0.0) or abs(target.sum() - 1.0) > SIMPLEX_TOL:
        raise InfeasibleError(f"❌ Aggregate target {target.tolist()} is not a distribution over S strategies.")
    if n_states < 2:
        raise ValueError("❌ The aggregability probe compares at least two states.")
    rng = np.random.default_rng(0) if rng is None else rng

    orders = [np.arange(grid.size), np.arange(grid.size)[::-1]]
    states = disaggregations(grid, target, orders)
    if n_states > 2:
        states.append(np.tile(target / target.sum(), (grid.size, 1)))
    if n_states > 3:
        random_orders = [rng.permutation(grid.size) for _ in range(n_states - 3)]
        states.extend(disaggregations(grid, target, random_orders))

    flows = np.array([grid.weights @ field(game, assignment, x, grid, tie_tol).velocity for x in states])
    spread = float(np.max(np.abs(flows[:, None, :] - flows[None, :, :]).sum(axis=-1)))
    logger.info("Aggregability probe over %d states: spread=%.3e", len(states), spread)
    return AggregabilityReport(spread=spread, aggregate_velocities=flows, states=tuple(states))
