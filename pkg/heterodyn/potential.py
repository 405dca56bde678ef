"""
⛰️ Heterogeneous Potentials & Welfare — heterodyn

Potential functions of the three example game classes, a finite-difference
check that their derivative is the payoff profile, Lyapunov series along
trajectories, and the total-payoff (welfare) objective that Pigouvian pricing
turns into a potential.

### Potentials:
- **ASAG**: ``f(x) = f⁰(x̄) + Σₖ wₖ θ̃ₖ·xₖ``; with pricing the potential is the welfare itself.
- **RandomMatching**: ``f(x) = ½ Σₖ Σₗ wₖwₗ xₖ·U⁰(θₖ,θₗ)xₗ``.
- **Structured**: ``f(x) = ½ Σₖ Σₗ wₖwₗ f⁰(xₖ,xₗ) g(θₖ,θₗ)``.

### Welfare oracle:
The social optimum of a concave ASAG welfare is found by a grid search over
per-strategy price offsets (each node picks its best strategy at the offset
payoffs), polished with SLSQP, and certified by a Frank–Wolfe duality gap.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from heterodyn.dynamics import Trajectory
from heterodyn.exceptions import GameSpecError, InfeasibleError, PotentialSymmetryError
from heterodyn.games import ASAG, Game, RandomMatching, Structured
from heterodyn.typegrid import TypeGrid, aggregate, check_delta, check_state

logger = logging.getLogger(__name__)

DEFAULT_LYAPUNOV_SLACK = 1e-8
# gradient errors below this are roundoff, too noisy to measure an order from
ORDER_NOISE_FLOOR = 1e-9
# total candidates evaluated by the welfare grid search
WELFARE_GRID_BUDGET = 40_000


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Potential paired with ``game``; build with ``potential_spec`` so symmetry is checked."""
    game: Game
    grid: TypeGrid

    def value(self, state) -> float:
        x = np.asarray(state, dtype=float)
        game, grid = self.game, self.grid
        if isinstance(game, ASAG):
            if game.pricing:
                return welfare(game, x, grid)
            common = game.common.potential(aggregate(x, grid))
            if common is None:
                raise PotentialSymmetryError(f"❌ {type(game.common).__name__} has no potential.")
            return float(common + grid.weights @ np.einsum('ks,ks->k', game.idiosyncratic(grid), x))
        if isinstance(game, RandomMatching):
            return float(0.5 * grid.weights @ np.einsum('ks,ks->k', x, game.symmetric_profile(x, grid)))
        if isinstance(game, Structured):
            base = game.base
            h = base.potential_terms(x)
            pair = h[:, None] + h[None, :] + x @ base.opponent @ x.T
            w = grid.weights
            return float(0.5 * np.sum(np.outer(w, w) * game.kernel.matrix(grid) * pair))
        raise GameSpecError(f"❌ No potential for {type(game).__name__}.")


def potential_spec(game: Game, grid: TypeGrid) -> PotentialSpec:
    """
    Pair ``game`` with its heterogeneous potential.

    Raises:
        PotentialSymmetryError: if the game's symmetry preconditions fail on ``grid``.
    """
    if isinstance(game, ASAG) and game.pricing:
        # the welfare is a potential of the priced game whatever F⁰ is
        return PotentialSpec(game, grid)
    game.check_potential(grid)
    return PotentialSpec(game, grid)


def potential_value(pspec: PotentialSpec, state, grid: TypeGrid | None = None) -> float:
    x = check_state(state, pspec.grid if grid is None else grid)
    return pspec.value(x)


def _directional(game: Game, state, direction, grid):
    pi = game.payoff_profile(state, grid)
    return float(grid.weights @ np.einsum('ks,ks->k', pi, direction))


def gradient_check(pspec: PotentialSpec, game: Game, state, direction, h: float = 1e-4) -> float:
    """
    Relative error between a central difference of ``f`` and ``Σₖ wₖ πₖ·Δₖ``.

    Args:
        pspec (PotentialSpec): Potential under test.
        game (Game): Game whose payoff profile should be the potential's derivative.
        state: Base state.
        direction: Delta state (rows sum to zero).
        h (float): Finite-difference step.

    Returns:
        float: ``|(f(x+hΔ) − f(x−hΔ))/2h − ⟨π, Δ⟩| / max(1, |⟨π, Δ⟩|)``.

    Raises:
        InfeasibleError: if ``x ± hΔ`` leaves ``[0, 1]`` entrywise or Δ rows do not sum to zero.
    """
    grid = pspec.grid
    x = check_state(state, grid)
    d = check_delta(direction, grid)
    if not h > 0.0:
        raise InfeasibleError("❌ Finite-difference step must be positive.")
    plus, minus = x + h * d, x - h * d
    if min(plus.min(), minus.min()) < 0.0 or max(plus.max(), minus.max()) > 1.0:
        raise InfeasibleError(f"❌ Perturbation with h={h:g} leaves the unit box.")
    numeric = (pspec.value(plus) - pspec.value(minus)) / (2.0 * h)
    analytic = _directional(game, x, d, grid)
    return abs(numeric - analytic) / max(1.0, abs(analytic))


def gradient_order(pspec: PotentialSpec, game: Game, state, direction, h: float = 1e-3):
    """Observed convergence order ``log₂(err(h)/err(h/2))``; ``None`` when both errors are at roundoff."""
    coarse = gradient_check(pspec, game, state, direction, h)
    fine = gradient_check(pspec, game, state, direction, h / 2.0)
    if coarse <= ORDER_NOISE_FLOOR or fine <= 0.0:
        return None
    return float(np.log2(coarse / fine))


def random_feasible_pair(grid: TypeGrid, n_strategies: int, rng: np.random.Generator, margin: float = 0.5):
    """Interior state (each entry ≥ ``margin/S``) and a zero-row-sum direction with entries in ``[−1, 1]``."""
    S = n_strategies
    x = (1.0 - margin) * rng.dirichlet(np.ones(S), size=grid.size) + margin / S
    d = rng.standard_normal((grid.size, S))
    d -= d.mean(axis=1, keepdims=True)
    d /= max(1.0, float(np.abs(d).max()))
    return x, d


@dataclass(frozen=True)
class LyapunovReport:
    values: np.ndarray
    monotone: bool
    max_decrease: float
    terminal_gap: float | None

    def to_dict(self):
        return {
            'monotone': self.monotone,
            'max_decrease': self.max_decrease,
            'terminal_gap': self.terminal_gap,
            'initial': float(self.values[0]),
            'terminal': float(self.values[-1]),
        }


def lyapunov_series(pspec: PotentialSpec, trajectory: Trajectory, slack: float = DEFAULT_LYAPUNOV_SLACK,
                    reference: float | None = None) -> LyapunovReport:
    """Potential at every sample, with a nondecreasing-within-``slack`` verdict."""
    values = np.array([pspec.value(x) for x in trajectory.states])
    drops = -np.diff(values) if values.shape[0] > 1 else np.zeros(0)
    max_decrease = float(drops.max(initial=0.0))
    monotone = bool(max_decrease <= slack)
    if not monotone:
        logger.warning("Potential decreased by %.3e between samples", max_decrease)
    gap = None if reference is None else float(reference - values[-1])
    return LyapunovReport(values=values, monotone=monotone, max_decrease=max_decrease, terminal_gap=gap)


@dataclass(frozen=True)
class LocalMaxReport:
    max_directional_derivative: float
    is_local_max: bool

    def to_dict(self):
        return {'max_directional_derivative': self.max_directional_derivative, 'is_local_max': self.is_local_max}


def local_max_check(pspec: PotentialSpec, state, n_directions: int = 50, rng=None,
                    slack: float = DEFAULT_LYAPUNOV_SLACK) -> LocalMaxReport:
    """
    First-order test that ``state`` is a local maximum of the potential.

    Directions point from ``state`` toward random feasible states (pure rows and
    flat-Dirichlet rows alternately); no direction may raise ``f`` at first order
    by more than ``slack``.
    """
    grid, game = pspec.grid, pspec.game
    x = check_state(state, grid)
    rng = np.random.default_rng(0) if rng is None else rng
    S = x.shape[1]
    worst = -np.inf
    for i in range(n_directions):
        if i % 2 == 0:
            y = np.eye(S)[rng.integers(S, size=grid.size)]
        else:
            y = rng.dirichlet(np.ones(S), size=grid.size)
        worst = max(worst, _directional(game, x, y - x, grid))
    return LocalMaxReport(max_directional_derivative=float(worst), is_local_max=bool(worst <= slack))


# ---------------------------------------------------------------------------
# Welfare
# ---------------------------------------------------------------------------

def welfare(game: Game, state, grid: TypeGrid) -> float:
    """Total unpriced payoff ``Σₖ wₖ (F⁰(x̄) + θ̃ₖ)·xₖ`` of an ASAG."""
    if not isinstance(game, ASAG):
        raise GameSpecError(f"❌ Welfare is defined for ASAGs only, got {type(game).__name__}.")
    x = np.asarray(state, dtype=float)
    xbar = aggregate(x, grid)
    private = grid.weights @ np.einsum('ks,ks->k', game.idiosyncratic(grid), x)
    return float(xbar @ game.common(xbar) + private)


def welfare_gradient(game: ASAG, state, grid: TypeGrid) -> np.ndarray:
    """Density of the welfare derivative: the priced payoff profile."""
    priced = game if game.pricing else ASAG(game.common, game.idiosyncratic, True, game.fd_step)
    return priced.payoff_profile(state, grid)


@dataclass(frozen=True)
class WelfareOptimum:
    value: float
    state: np.ndarray
    aggregate: np.ndarray
    gap: float

    def to_dict(self):
        return {'value': self.value, 'aggregate': self.aggregate.tolist(), 'frank_wolfe_gap': self.gap}


def frank_wolfe_gap(game: ASAG, state, grid: TypeGrid) -> float:
    """``max_y ⟨∇W(x), y − x⟩``; an upper bound on ``W* − W(x)`` when ``W`` is concave."""
    g = welfare_gradient(game, state, grid)
    return float(grid.weights @ (g.max(axis=1) - np.einsum('ks,ks->k', g, state)))


def maximize_welfare(game: ASAG, grid: TypeGrid, n_offsets: int | None = None, polish: bool = True) -> WelfareOptimum:
    """
    Social optimum of the ASAG welfare over conditional states.

    Candidates are threshold states: for price offsets ``λ`` (with ``λ₀ = 0``)
    every node plays ``argmaxₛ θ̃ₖₛ + λₛ``. The best candidate is polished by
    SLSQP over all node mixtures.
    """
    if not isinstance(game, ASAG):
        raise GameSpecError(f"❌ Welfare is defined for ASAGs only, got {type(game).__name__}.")
    theta = game.idiosyncratic(grid)
    K, S = theta.shape
    if n_offsets is None:
        n_offsets = max(2, int(WELFARE_GRID_BUDGET ** (1.0 / max(S - 1, 1))))
    spread = float(theta.max() - theta.min()) + 1.0
    offsets = np.linspace(-spread, spread, n_offsets)

    best_value, best_state = -np.inf, None
    for free in itertools.product(offsets, repeat=S - 1):
        choice = np.argmax(theta + np.concatenate([[0.0], free]), axis=1)
        x = np.eye(S)[choice]
        value = welfare(game, x, grid)
        if value > best_value:
            best_value, best_state = value, x

    if polish and S > 1:
        w = grid.weights

        def objective(flat):
            x = flat.reshape(K, S)
            return -welfare(game, x, grid), -(w[:, None] * welfare_gradient(game, x, grid)).ravel()

        rows = np.kron(np.eye(K), np.ones(S))
        result = optimize.minimize(
            objective, best_state.ravel(), jac=True, method='SLSQP',
            bounds=[(0.0, 1.0)] * (K * S),
            constraints=[{'type': 'eq', 'fun': lambda flat: rows @ flat - 1.0, 'jac': lambda flat: rows}],
            options={'maxiter': 500, 'ftol': 1e-14},
        )
        polished = np.clip(result.x.reshape(K, S), 0.0, 1.0)
        polished /= polished.sum(axis=1, keepdims=True)
        value = welfare(game, polished, grid)
        if value > best_value:
            best_value, best_state = value, polished
        logger.debug("SLSQP polish: %s (%d iterations)", result.message, result.nit)

    gap = frank_wolfe_gap(game, best_state, grid)
    logger.info("Welfare optimum %.8f (Frank-Wolfe gap %.2e)", best_value, gap)
    return WelfareOptimum(value=best_value, state=best_state, aggregate=aggregate(best_state, grid), gap=gap)
