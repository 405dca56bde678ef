"""
⚖️ Equilibrium Solvers & Diagnostics — heterodyn

Computes equilibrium strategy distributions on a type grid and certifies them
through the checkable best-response conditions: every node puts (almost) all of
its mass on its best-response set, and nodes with a unique best response play
it purely.

### Features:
- **check_equilibrium**: best-response violation mass plus the stationarity residual.
- **solve_damped_br**: damped pure best-response iteration; non-convergence is reported, not raised.
- **solve_binary_threshold**: bisection oracle for free-entry games with a closed-form cost CDF.
- **stationarity_residual / pc_inner_product**: the two quantities behind equilibrium
  stationarity and potential ascent.
- **residual_is_certificate**: whether a zero residual under imitative protocols really means equilibrium.
- **assumption_diagnostics**: empirical Lipschitz, bounded-rate and best-response-band ratios.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from heterodyn.dynamics import field, pc_values
from heterodyn.exceptions import InfeasibleError, NonFiniteError
from heterodyn.games import DEFAULT_TIE_TOL, Game, best_response_mask, pure_best_response
from heterodyn.protocols import ProtocolAssignment, Smith, assign_protocols
from heterodyn.typegrid import (
    DiscreteSpec,
    GaussianSpec,
    TypeGrid,
    UniformSpec,
    aggregate,
    check_state,
    uniform_state,
    variational_norm,
)

logger = logging.getLogger(__name__)

DEFAULT_MASS_TOL = 1e-8
BISECTION_XTOL = 1e-15


@dataclass(frozen=True)
class EquilibriumReport:
    state: np.ndarray
    residual: float
    br_violation: float
    iterations: int
    converged: bool
    # false when a zero residual proves nothing: an interior-only protocol on a boundary row
    residual_certifies: bool = True

    def to_dict(self, grid: TypeGrid | None = None):
        payload = {
            'residual': self.residual,
            'br_violation': self.br_violation,
            'iterations': self.iterations,
            'converged': self.converged,
            'residual_certifies': self.residual_certifies,
            'state': self.state.tolist(),
        }
        if grid is not None:
            payload['aggregate'] = aggregate(self.state, grid).tolist()
        return payload


def _default_assignment(grid, assignment):
    return assign_protocols(grid, [Smith()]) if assignment is None else assignment


def residual_is_certificate(assignment: ProtocolAssignment, state) -> bool:
    """Whether rest under ``assignment`` can only happen at an equilibrium of ``state``'s payoffs."""
    x = np.asarray(state, dtype=float)
    for protocol, nodes in assignment.groups():
        if protocol.interior_only and np.any(x[nodes] <= 0.0):
            return False
    return True


def br_violation(payoffs, state, grid: TypeGrid, tie_tol: float = DEFAULT_TIE_TOL) -> float:
    """Mass of types playing outside their best-response set, ignoring shortfalls within ``tie_tol``."""
    shortfall = 1.0 - np.sum(np.where(best_response_mask(payoffs, tie_tol), state, 0.0), axis=1)
    return float(grid.weights @ np.where(shortfall > tie_tol, shortfall, 0.0))


def stationarity_residual(game: Game, assignment: ProtocolAssignment, state, grid: TypeGrid,
                          tie_tol: float = DEFAULT_TIE_TOL) -> float:
    """Variational norm of the mean-dynamic density at ``state``."""
    return variational_norm(field(game, assignment, state, grid, tie_tol).velocity, grid)


def pc_inner_product(game: Game, assignment: ProtocolAssignment, state, grid: TypeGrid,
                     tie_tol: float = DEFAULT_TIE_TOL):
    """Per-node ``πₖ·vₖ`` and their weighted sum ``Σₖ wₖ πₖ·vₖ``."""
    return pc_values(field(game, assignment, state, grid, tie_tol), grid)


def check_equilibrium(game: Game, state, grid: TypeGrid, tie_tol: float = DEFAULT_TIE_TOL,
                      mass_tol: float = DEFAULT_MASS_TOL, assignment: ProtocolAssignment | None = None,
                      iterations: int = 0) -> EquilibriumReport:
    """
    Certify ``state`` against the equilibrium conditions.

    Nodes with tied best responses may mix freely over the tied set. The
    residual is measured under ``assignment`` (Smith everywhere by default).

    Returns:
        EquilibriumReport: ``converged`` is true iff the violation mass is at most ``mass_tol``.
    """
    x = check_state(state, grid)
    pi = game.payoff_profile(x, grid)
    violation = br_violation(pi, x, grid, tie_tol)
    assignment = _default_assignment(grid, assignment)
    residual = stationarity_residual(game, assignment, x, grid, tie_tol)
    return EquilibriumReport(
        state=x,
        residual=residual,
        br_violation=violation,
        iterations=iterations,
        converged=violation <= mass_tol,
        residual_certifies=residual_is_certificate(assignment, x),
    )


def solve_damped_br(game: Game, grid: TypeGrid, damping: float = 0.5, max_iters: int = 1000,
                    tol: float = 1e-10, tie_tol: float = DEFAULT_TIE_TOL, state0=None,
                    assignment: ProtocolAssignment | None = None) -> EquilibriumReport:
    """
    Damped best-response iteration ``x ← (1−λ)x + λ·BR(x)``.

    Args:
        game (Game): Heterogeneous population game.
        grid (TypeGrid): Type grid.
        damping (float): Step ``λ ∈ (0, 1]``.
        max_iters (int): Iteration cap.
        tol (float): Stop once the update's variational norm is at most ``tol·λ``.
        tie_tol (float): Best-response tie tolerance (lowest index wins ties).
        state0: Starting state, uniform mixtures by default.
        assignment: Protocols used for the reported residual (Smith by default).

    Returns:
        EquilibriumReport: ``converged`` requires the stopping rule to fire and the
        violation mass to be at most ``tol``.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"❌ Damping must lie in (0, 1], got {damping}.")
    S = game.n_strategies
    x = uniform_state(grid, S) if state0 is None else check_state(state0, grid).copy()
    stopped = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        best = pure_best_response(game.payoff_profile(x, grid), tie_tol)
        target = np.eye(S)[best]
        step = damping * (target - x)
        x = x + step
        if variational_norm(step, grid) <= tol * damping:
            stopped = True
            break

    report = check_equilibrium(game, x, grid, tie_tol, tol, assignment, iterations)
    converged = stopped and report.converged
    if converged:
        logger.info("Damped best response converged in %d iterations", iterations)
    else:
        logger.warning(
            "Damped best response stopped after %d iterations without converging (violation %.3e)",
            iterations, report.br_violation,
        )
    return EquilibriumReport(
        state=report.state,
        residual=report.residual,
        br_violation=report.br_violation,
        iterations=iterations,
        converged=converged,
        residual_certifies=report.residual_certifies,
    )


# ---------------------------------------------------------------------------
# Free-entry threshold oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdResult:
    aggregate: float
    threshold: float

    def to_dict(self):
        return {'aggregate': self.aggregate, 'threshold': self.threshold}


def cost_cdf(dist_spec):
    """Closed-form CDF of a scalar cost distribution (uniform pieces, Gaussian or discrete atoms)."""
    if isinstance(dist_spec, UniformSpec):
        pieces = [(float(lo), float(hi)) for lo, hi in dist_spec.intervals]
        lengths = np.array([hi - lo for lo, hi in pieces])
        shares = lengths / lengths.sum()
        laws = [stats.uniform(loc=lo, scale=hi - lo) for lo, hi in pieces]
        return lambda c: float(sum(share * law.cdf(c) for share, law in zip(shares, laws)))
    if isinstance(dist_spec, GaussianSpec):
        law = stats.norm(loc=dist_spec.mean, scale=dist_spec.stdev)
        return lambda c: float(law.cdf(c))
    if isinstance(dist_spec, DiscreteSpec):
        points = np.asarray(dist_spec.points, dtype=float).reshape(-1)
        masses = np.asarray(dist_spec.masses, dtype=float)
        masses = masses / masses.sum()
        # entry needs cost strictly below the threshold
        return lambda c: float(masses[points < c].sum())
    raise InfeasibleError(f"❌ No closed-form cost CDF for {type(dist_spec).__name__}.")


def solve_binary_threshold(profile, cdf, xtol: float = BISECTION_XTOL) -> ThresholdResult:
    """
    Free-entry equilibrium of a binary entry game with a continuum of cost types.

    Solves ``G(F⁰_I(x̄)) = x̄`` on ``[0, 1]`` by bisection, where ``F⁰_I`` is the
    (decreasing) gross profit of entrants and ``G`` the cost CDF. Agents enter
    iff their cost is below the returned threshold ``F⁰_I(x̄*)``.

    Args:
        profile: Callable gross profit ``F⁰_I``.
        cdf: Callable cost CDF ``G``.
        xtol (float): Bisection tolerance on ``x̄``.

    Returns:
        ThresholdResult: aggregate entry mass ``x̄*`` and cost threshold ``c*``.

    Raises:
        InfeasibleError: if ``h(x̄) = G(F⁰_I(x̄)) − x̄`` has no sign change on ``[0, 1]``.
    """
    def h(y):
        value = float(cdf(float(profile(y)))) - y
        if not np.isfinite(value):
            raise NonFiniteError(f"❌ Non-finite entry balance at x̄={y}.")
        return value

    low, high = h(0.0), h(1.0)
    if low < 0.0 or high > 0.0:
        raise InfeasibleError(
            f"❌ Entry balance has no sign change on [0, 1] (h(0)={low:.3g}, h(1)={high:.3g})."
        )
    if low == 0.0:
        root = 0.0
    elif high == 0.0:
        root = 1.0
    else:
        root = optimize.bisect(h, 0.0, 1.0, xtol=xtol, maxiter=200)
    return ThresholdResult(aggregate=float(root), threshold=float(profile(root)))


# ---------------------------------------------------------------------------
# Standing-assumption diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    lipschitz_ratio_max: float
    rate_bound: float
    br_band_ratio_max: float
    n_pairs: int

    def to_dict(self):
        return {
            'lipschitz_ratio_max': self.lipschitz_ratio_max,
            'rate_bound': self.rate_bound,
            'br_band_ratio_max': self.br_band_ratio_max,
            'n_pairs': self.n_pairs,
        }


def _state_pairs(grid: TypeGrid, S: int, n_samples: int, seed: int):
    """
    Alternate type-homogeneous pairs (one mixture shared by all nodes) with pairs of
    independent per-node mixtures. Each family draws from its own stream so the
    homogeneous mixtures do not depend on the grid size.
    """
    homogeneous, independent = [np.random.Generator(np.random.PCG64(s))
                                for s in np.random.SeedSequence(seed).spawn(2)]
    for i in range(n_samples):
        if i % 2 == 0:
            a, b = homogeneous.dirichlet(np.ones(S), size=2)
            yield np.tile(a, (grid.size, 1)), np.tile(b, (grid.size, 1))
        else:
            yield tuple(independent.dirichlet(np.ones(S), size=(2, grid.size)))


def assumption_diagnostics(game: Game, grid: TypeGrid, n_samples: int = 200,
                           assignment: ProtocolAssignment | None = None, seed: int = 0,
                           min_distance: float = 0.1, tie_tol: float = DEFAULT_TIE_TOL) -> AssumptionReport:
    """
    Empirical versions of the standing assumptions over random state pairs.

    - ``lipschitz_ratio_max``: ``maxₖ ‖πₖ − π′ₖ‖_∞ / ‖x − x′‖``.
    - ``rate_bound``: largest switching rate realized at any sampled state.
    - ``br_band_ratio_max``: mass of nodes whose best-response set changes, over ``‖x − x′‖``.

    Pairs closer than ``min_distance`` in variational norm are skipped.
    Values are reported, not asserted.
    """
    if n_samples < 2:
        raise ValueError("❌ Assumption diagnostics need at least two samples.")
    assignment = _default_assignment(grid, assignment)
    lipschitz = rate = band = 0.0
    used = 0
    for x, y in _state_pairs(grid, game.n_strategies, n_samples, seed):
        distance = variational_norm(x - y, grid)
        if distance < min_distance:
            continue
        used += 1
        fx = field(game, assignment, x, grid, tie_tol)
        fy = field(game, assignment, y, grid, tie_tol)
        change = np.max(np.abs(fx.payoffs - fy.payoffs))
        flipped = np.any(best_response_mask(fx.payoffs, tie_tol) != best_response_mask(fy.payoffs, tie_tol), axis=1)
        lipschitz = max(lipschitz, float(change) / distance)
        band = max(band, float(grid.weights @ flipped) / distance)
        rate = max(rate, fx.max_rate, fy.max_rate)
    logger.info(
        "Assumption diagnostics over %d pairs: lipschitz=%.4g rate=%.4g band=%.4g",
        used, lipschitz, rate, band,
    )
    return AssumptionReport(lipschitz_ratio_max=lipschitz, rate_bound=rate, br_band_ratio_max=band, n_pairs=used)
