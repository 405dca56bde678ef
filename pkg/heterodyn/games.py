"""
🎲 Heterogeneous Population Games — heterodyn

This module evaluates the payoff vector profile ``F[X](θₖ)`` of a
heterogeneous population game on a type grid, computes best-response sets,
and implements dynamic Pigouvian pricing for additively separable aggregate
games.

### Game classes:
1. **ASAG** (additively separable aggregate game):
   ``πₖ = F⁰(x̄) + θ̃ₖ`` where ``θ̃ₖ = Lθₖ + c`` is the idiosyncratic payoff vector.
2. **RandomMatching**: ``πₖ = Σₗ wₗ U(θₖ, θₗ) xₗ``.
3. **Structured** population game: ``πₖ = Σₗ wₗ g(θₖ, θₗ) F⁰(xₖ, xₗ)``.

### Common payoff families (closed form, fully describable from a scenario file):
- ``LinearPayoff``: ``F⁰(x̄) = A x̄ + b``.
- ``SeparablePayoff``: ``F⁰ₛ(x̄) = pₛ(x̄ₛ)`` with polynomial ``pₛ`` (congestion games).
- ``EntryExitPayoff``: binary ``(I, O)`` game with ``F⁰_I = profile(x̄_I)``, ``F⁰_O ≡ 0``.

All game objects are immutable; ``payoff_profile`` is a pure function of the
state snapshot it is given.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss

from heterodyn.exceptions import (
    DimensionMismatchError,
    GameSpecError,
    NonFiniteError,
    PotentialSymmetryError,
)
from heterodyn.typegrid import TypeGrid, aggregate

logger = logging.getLogger(__name__)

DEFAULT_TIE_TOL = 1e-9
DEFAULT_FD_STEP = 1e-6
SYMMETRY_TOL = 1e-12
# K·K·S·S float entries kept in memory for a random-matching payoff tensor
DEFAULT_CACHE_MAX_ENTRIES = 4_000_000

_LEGENDRE_NODES, _LEGENDRE_WEIGHTS = leggauss(64)


def _finite(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"❌ Non-finite {what}.")
    return values


# ---------------------------------------------------------------------------
# Scalar profiles for the entry-exit family
# ---------------------------------------------------------------------------

class ScalarProfile(ABC):
    """Gross profit of an active agent as a function of the active mass ``x̄_I``."""

    @abstractmethod
    def __call__(self, y):
        ...

    @abstractmethod
    def derivative(self, y):
        ...

    def antiderivative(self, y):
        """``∫₀^y profile``; 64-point Gauss–Legendre unless a closed form exists."""
        half = 0.5 * y
        return float(half * np.sum(_LEGENDRE_WEIGHTS * self(half * (_LEGENDRE_NODES + 1.0))))


@dataclass(frozen=True)
class PolynomialProfile(ScalarProfile):
    coefficients: tuple[float, ...]

    def __call__(self, y):
        return Polynomial(self.coefficients)(y)

    def derivative(self, y):
        return Polynomial(self.coefficients).deriv()(y)

    def antiderivative(self, y):
        return float(Polynomial(self.coefficients).integ(lbnd=0.0)(y))


@dataclass(frozen=True)
class ExponentialProfile(ScalarProfile):
    """``scale·exp(−rate·y) + shift``."""
    scale: float
    rate: float
    shift: float = 0.0

    def __call__(self, y):
        return self.scale * np.exp(-self.rate * np.asarray(y, dtype=float)) + self.shift

    def derivative(self, y):
        return -self.rate * self.scale * np.exp(-self.rate * np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# Common payoff functions F⁰: Δ^S → ℝ^S
# ---------------------------------------------------------------------------

class CommonPayoff(ABC):
    n_strategies: int

    @abstractmethod
    def __call__(self, xbar: np.ndarray) -> np.ndarray:
        ...

    def jacobian(self, xbar: np.ndarray):
        """Analytic ``∂F⁰ₛ/∂x̄ₛ′``, or ``None`` when only finite differences are available."""
        return None

    def potential(self, xbar: np.ndarray):
        """Homogeneous potential ``f⁰(x̄)`` with ``∇f⁰ = F⁰``, or ``None``."""
        return None

    def check_potential(self):
        """Raise ``PotentialSymmetryError`` unless ``F⁰`` is a gradient field."""


@dataclass(frozen=True, eq=False)
class LinearPayoff(CommonPayoff):
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        b = np.array(self.offset, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise GameSpecError(f"❌ Linear payoff needs S×S matrix and S offset, got {A.shape}, {b.shape}.")
        object.__setattr__(self, 'matrix', A)
        object.__setattr__(self, 'offset', b)

    @property
    def n_strategies(self):
        return self.offset.shape[0]

    def __call__(self, xbar):
        return self.matrix @ xbar + self.offset

    def jacobian(self, xbar):
        return self.matrix

    def potential(self, xbar):
        return float(0.5 * xbar @ self.matrix @ xbar + self.offset @ xbar)

    def check_potential(self):
        if not np.allclose(self.matrix, self.matrix.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise PotentialSymmetryError("❌ Linear common payoff needs a symmetric matrix for a potential.")


@dataclass(frozen=True)
class SeparablePayoff(CommonPayoff):
    """``F⁰ₛ(x̄) = Σⱼ cₛⱼ x̄ₛʲ``; always a potential game."""
    coefficients: tuple[tuple[float, ...], ...]

    @property
    def n_strategies(self):
        return len(self.coefficients)

    def _polys(self):
        return [Polynomial(c) for c in self.coefficients]

    def __call__(self, xbar):
        return np.array([p(v) for p, v in zip(self._polys(), xbar)])

    def jacobian(self, xbar):
        return np.diag([p.deriv()(v) for p, v in zip(self._polys(), xbar)])

    def potential(self, xbar):
        return float(sum(p.integ(lbnd=0.0)(v) for p, v in zip(self._polys(), xbar)))


@dataclass(frozen=True)
class EntryExitPayoff(CommonPayoff):
    """Strategy 0 is *enter* (profit ``profile(x̄_I)``), strategy 1 is *stay out* (zero)."""
    profile: ScalarProfile
    n_strategies: int = field(default=2, init=False)

    def __call__(self, xbar):
        return np.array([float(self.profile(xbar[0])), 0.0])

    def jacobian(self, xbar):
        return np.array([[float(self.profile.derivative(xbar[0])), 0.0], [0.0, 0.0]])

    def potential(self, xbar):
        return self.profile.antiderivative(float(xbar[0]))


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------

class Game(ABC):
    n_strategies: int

    @abstractmethod
    def payoff_profile(self, state, grid: TypeGrid) -> np.ndarray:
        ...

    @abstractmethod
    def check_potential(self, grid: TypeGrid):
        ...

    def _check(self, state, grid):
        x = np.asarray(state, dtype=float)
        if x.shape != (grid.size, self.n_strategies):
            raise DimensionMismatchError(
                f"❌ State shape {x.shape} does not match K={grid.size}, S={self.n_strategies}."
            )
        return x


@dataclass(frozen=True, eq=False)
class IdiosyncraticMap:
    """Affine map ``θ ↦ Lθ + c`` from type points to idiosyncratic payoff vectors."""
    loadings: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        L = np.array(self.loadings, dtype=float)
        c = np.array(self.offset, dtype=float)
        if L.ndim != 2 or c.shape != (L.shape[0],):
            raise GameSpecError(f"❌ Idiosyncratic map needs S×d loadings and S offset, got {L.shape}, {c.shape}.")
        object.__setattr__(self, 'loadings', L)
        object.__setattr__(self, 'offset', c)

    @classmethod
    def identity(cls, n_strategies):
        return cls(np.eye(n_strategies), np.zeros(n_strategies))

    def __call__(self, grid: TypeGrid) -> np.ndarray:
        if grid.dim != self.loadings.shape[1]:
            raise DimensionMismatchError(
                f"❌ Loadings expect {self.loadings.shape[1]}-dimensional types, grid has d={grid.dim}."
            )
        return _finite(grid.nodes @ self.loadings.T + self.offset, 'idiosyncratic payoffs')


@dataclass(frozen=True, eq=False)
class ASAG(Game):
    common: CommonPayoff
    idiosyncratic: IdiosyncraticMap
    pricing: bool = False
    fd_step: float = DEFAULT_FD_STEP

    def __post_init__(self):
        if self.idiosyncratic.loadings.shape[0] != self.common.n_strategies:
            raise GameSpecError("❌ Idiosyncratic map and common payoff disagree on S.")

    @property
    def n_strategies(self):
        return self.common.n_strategies

    def payoff_profile(self, state, grid):
        x = self._check(state, grid)
        xbar = aggregate(x, grid)
        common = _finite(self.common(xbar), 'common payoff')
        if self.pricing:
            common = common - pigou_prices(self.common, xbar, self.fd_step)
        return common + self.idiosyncratic(grid)

    def check_potential(self, grid):
        self.common.check_potential()


# --- random matching ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BilinearMatching:
    """``U(θ, θ′) = M₀ + θ M₁ + θ′ M₂ + θθ′ M₃`` on the first type coordinate."""
    base: np.ndarray
    own: np.ndarray | None = None
    opponent: np.ndarray | None = None
    cross: np.ndarray | None = None

    def __post_init__(self):
        base = np.array(self.base, dtype=float)
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise GameSpecError(f"❌ Matching payoff matrices must be S×S, got {base.shape}.")
        object.__setattr__(self, 'base', base)
        for name in ('own', 'opponent', 'cross'):
            value = getattr(self, name)
            value = np.zeros_like(base) if value is None else np.array(value, dtype=float)
            if value.shape != base.shape:
                raise GameSpecError(f"❌ Matching matrix '{name}' must be {base.shape}, got {value.shape}.")
            object.__setattr__(self, name, value)

    @property
    def n_strategies(self):
        return self.base.shape[0]

    def rows(self, theta_k: float, thetas: np.ndarray) -> np.ndarray:
        """``U(θₖ, θₗ)`` for every ``l`` as an ``L×S×S`` array."""
        t = thetas[:, None, None]
        return self.base + theta_k * self.own + t * self.opponent + theta_k * t * self.cross

    def tensor(self, thetas: np.ndarray) -> np.ndarray:
        t, u = thetas[:, None, None, None], thetas[None, :, None, None]
        return self.base + t * self.own + u * self.opponent + t * u * self.cross


@dataclass(frozen=True, eq=False)
class RandomMatching(Game):
    matching: BilinearMatching
    potential_part: BilinearMatching | None = None
    cache_max_entries: int = DEFAULT_CACHE_MAX_ENTRIES
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.potential_part is not None and self.potential_part.n_strategies != self.n_strategies:
            raise GameSpecError("❌ Symmetric part U⁰ must have the same shape as U.")

    @property
    def n_strategies(self):
        return self.matching.n_strategies

    def payoff_tensor(self, grid: TypeGrid, part: BilinearMatching | None = None):
        """``K×K×S×S`` tensor of ``U(θₖ, θₗ)`` for the latest grid, cached while under the memory cap."""
        kernel = self.matching if part is None else part
        if grid.size ** 2 * self.n_strategies ** 2 > self.cache_max_entries:
            return None
        # one slot per kernel; a new grid replaces the old tensor
        cached = self._cache.get(id(kernel))
        if cached is None or cached[0] is not grid:
            cached = (grid, _finite(kernel.tensor(grid.nodes[:, 0]), 'matching payoffs'))
            self._cache[id(kernel)] = cached
        return cached[1]

    def _expected(self, kernel, x, grid):
        tensor = self.payoff_tensor(grid, kernel)
        weighted = grid.weights[:, None] * x
        if tensor is not None:
            return np.einsum('klst,lt->ks', tensor, weighted)
        # over the cap: rebuild one type's row block at a time
        thetas = grid.nodes[:, 0]
        return np.stack([
            np.einsum('lst,lt->s', _finite(kernel.rows(thetas[k], thetas), 'matching payoffs'), weighted)
            for k in range(grid.size)
        ])

    def payoff_profile(self, state, grid):
        return self._expected(self.matching, self._check(state, grid), grid)

    def symmetric_profile(self, state, grid):
        """Expected payoff against the symmetric part ``U⁰`` only."""
        if self.potential_part is None:
            raise PotentialSymmetryError("❌ Random-matching potential needs a symmetric part U⁰.")
        return self._expected(self.potential_part, self._check(state, grid), grid)

    def check_potential(self, grid):
        if self.potential_part is None:
            raise PotentialSymmetryError("❌ Random-matching potential needs a symmetric part U⁰.")
        thetas = grid.nodes[:, 0]
        u0 = self.potential_part.tensor(thetas)
        if not np.allclose(u0, np.swapaxes(u0, 2, 3), rtol=0.0, atol=SYMMETRY_TOL):
            raise PotentialSymmetryError("❌ U⁰(θ, θ′) must be a symmetric matrix on every node pair.")
        if not np.allclose(u0, np.swapaxes(u0, 0, 1), rtol=0.0, atol=SYMMETRY_TOL):
            raise PotentialSymmetryError("❌ U⁰(θ, θ′) must equal U⁰(θ′, θ) on every node pair.")
        # U − U⁰ = 1·r: every row of the remainder must be the same vector r
        rest = self.matching.tensor(thetas) - u0
        if not np.allclose(rest, rest[:, :, :1, :], rtol=0.0, atol=SYMMETRY_TOL):
            raise PotentialSymmetryError("❌ U − U⁰ must have identical rows (a strategy-independent payoff).")


# --- structured population ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class TwoPopulationPayoff:
    """``F⁰(x, x′) = A x + B x′ + b + κ∘x²`` (own population first)."""
    own: np.ndarray
    opponent: np.ndarray
    offset: np.ndarray
    cubic: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.own, dtype=float)
        B = np.array(self.opponent, dtype=float)
        b = np.array(self.offset, dtype=float)
        kappa = np.zeros_like(b) if self.cubic is None else np.array(self.cubic, dtype=float)
        S = b.shape[0]
        if A.shape != (S, S) or B.shape != (S, S) or kappa.shape != (S,):
            raise GameSpecError("❌ Two-population payoff needs S×S own/opponent matrices and S vectors.")
        object.__setattr__(self, 'own', A)
        object.__setattr__(self, 'opponent', B)
        object.__setattr__(self, 'offset', b)
        object.__setattr__(self, 'cubic', kappa)

    @property
    def n_strategies(self):
        return self.offset.shape[0]

    def own_part(self, x):
        """The ``x``-only terms ``A x + b + κ∘x²``, row-wise."""
        return x @ self.own.T + self.offset + self.cubic * x ** 2

    def potential_terms(self, x):
        """Per-row ``½x·Ax + b·x + κ·x³/3``; ``f⁰(x,x′)`` is ``h(x) + h(x′) + x·Bx′``."""
        return 0.5 * np.einsum('ks,st,kt->k', x, self.own, x) + x @ self.offset + (x ** 3) @ self.cubic / 3.0


class WeightKernel(ABC):
    @abstractmethod
    def matrix(self, grid: TypeGrid) -> np.ndarray:
        ...


@dataclass(frozen=True)
class ConstantKernel(WeightKernel):
    value: float = 1.0

    def matrix(self, grid):
        return np.full((grid.size, grid.size), self.value)


@dataclass(frozen=True)
class GaussianKernel(WeightKernel):
    """``scale·exp(−|θ−θ′|²/(2·bandwidth²))``."""
    bandwidth: float
    scale: float = 1.0

    def matrix(self, grid):
        diff = grid.nodes[:, None, :] - grid.nodes[None, :, :]
        return self.scale * np.exp(-np.sum(diff ** 2, axis=-1) / (2.0 * self.bandwidth ** 2))


@dataclass(frozen=True)
class ProductKernel(WeightKernel):
    """``scale·(θ·θ′) + shift``; negative weights are allowed."""
    scale: float = 1.0
    shift: float = 0.0

    def matrix(self, grid):
        return self.scale * grid.nodes @ grid.nodes.T + self.shift


@dataclass(frozen=True, eq=False)
class Structured(Game):
    base: TwoPopulationPayoff
    kernel: WeightKernel

    @property
    def n_strategies(self):
        return self.base.n_strategies

    def payoff_profile(self, state, grid):
        x = self._check(state, grid)
        g = _finite(self.kernel.matrix(grid), 'kernel weights')
        gw = g * grid.weights[None, :]
        # Σₗ wₗ gₖₗ (A xₖ + b + κxₖ² + B xₗ)
        return gw.sum(axis=1)[:, None] * self.base.own_part(x) + gw @ (x @ self.base.opponent.T)

    def check_potential(self, grid):
        g = self.kernel.matrix(grid)
        if not np.allclose(g, g.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise PotentialSymmetryError("❌ Kernel g(θ, θ′) must be symmetric on every node pair.")
        for name in ('own', 'opponent'):
            M = getattr(self.base, name)
            if not np.allclose(M, M.T, rtol=0.0, atol=SYMMETRY_TOL):
                raise PotentialSymmetryError(f"❌ Two-population '{name}' matrix must be symmetric.")


# ---------------------------------------------------------------------------
# Best responses and pricing
# ---------------------------------------------------------------------------

def best_response_mask(payoffs, tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """Boolean ``K×S`` mask of strategies within ``tie_tol`` of each row's maximum."""
    pi = np.atleast_2d(np.asarray(payoffs, dtype=float))
    return pi >= pi.max(axis=1, keepdims=True) - tie_tol


def best_response_sets(payoffs, tie_tol: float = DEFAULT_TIE_TOL) -> list[frozenset]:
    """Per-node sets ``{s : πₖₛ ≥ max πₖ − tie_tol}``; never empty."""
    return [frozenset(np.flatnonzero(row).tolist()) for row in best_response_mask(payoffs, tie_tol)]


def pure_best_response(payoffs, tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """Lowest-index strategy of each node's best-response set."""
    return np.argmax(best_response_mask(payoffs, tie_tol), axis=1)


def finite_difference_jacobian(common: CommonPayoff, xbar, fd_step: float) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=float)
    columns = []
    for s in range(xbar.shape[0]):
        e = np.zeros_like(xbar)
        e[s] = fd_step
        columns.append((common(xbar + e) - common(xbar - e)) / (2.0 * fd_step))
    return np.stack(columns, axis=1)


def pigou_prices(common: CommonPayoff, xbar, fd_step: float = DEFAULT_FD_STEP, analytic: bool = True) -> np.ndarray:
    """
    Dynamic Pigouvian prices ``Tₛ = −Σₛ′ x̄ₛ′ ∂F⁰ₛ′/∂x̄ₛ``.

    Args:
        common: The common payoff function ``F⁰``.
        xbar: Aggregate strategy distribution.
        fd_step (float): Central-difference step when no analytic Jacobian is used.
        analytic (bool): Use the family's Jacobian when it has one.

    Returns:
        np.ndarray: Price vector ``T`` (the externality each strategy imposes).

    Raises:
        NonFiniteError: if the Jacobian has non-finite entries.
    """
    if not fd_step > 0.0:
        raise GameSpecError("❌ fd_step must be positive.")
    xbar = np.asarray(xbar, dtype=float)
    jacobian = common.jacobian(xbar) if analytic else None
    if jacobian is None:
        jacobian = finite_difference_jacobian(common, xbar, fd_step)
    jacobian = _finite(jacobian, 'payoff Jacobian')
    return -jacobian.T @ xbar


def apply_pricing(game: Game, pricing: bool = True) -> ASAG:
    """Return the ASAG whose payoffs subtract Pigouvian prices at every evaluation."""
    if not isinstance(game, ASAG):
        raise GameSpecError(f"❌ Pigouvian pricing applies to ASAGs only, got {type(game).__name__}.")
    return replace(game, pricing=pricing)
