"""
🔁 Revision Protocols — heterodyn

Switching-rate generators ``ρ(π, x_obs)`` for the supported revision protocols,
the per-node mean dynamic they induce, and the assignment of protocols to type
nodes.

### Protocol families:
- **Pairwise comparison**: ``Smith`` and ``PairwiseComparison`` (linear or square gain).
- **Perturbed optimization**: ``Logit`` with noise level ``μ > 0``.
- **Excess payoff**: ``BNN`` (Brown–von Neumann–Nash), observing the own type's mixture.
- **Imitation**: ``ReplicatorPairwise``, ``ReplicatorDissatisfaction``, ``ReplicatorSuccess``;
  each yields the replicator dynamic under within-type observation.
- **Exact optimization**: ``StandardBRD`` and ``TemperedBRD`` switch only to the best response.

Every protocol exposes a vectorized ``rates(pi, x_obs, tie_tol)`` that accepts
payoff rows of shape ``(..., S)`` and returns rate matrices of shape
``(..., S, S)`` with a zero diagonal. The scalar ``switch_rates`` and
``mean_dynamic`` functions are thin wrappers used by diagnostics and tests.

Exact-optimization protocols move agents toward a single target: the
lowest-index member of the best-response set (within ``tie_tol``). Agents
already playing any member of that set do not switch, so a mixture supported
on tied best responses is at rest.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, fields
from typing import ClassVar

import numpy as np
from scipy.special import softmax

from heterodyn.exceptions import DimensionMismatchError, NonFiniteError, ProtocolSpecError
from heterodyn.games import DEFAULT_TIE_TOL
from heterodyn.typegrid import TypeGrid

logger = logging.getLogger(__name__)

_TEMPERING_SAMPLES = np.array([1e-9, 1e-6, 1e-3, 0.1, 0.5, 1.0, 2.0, 10.0, 1e3])


def _zero_diagonal(rho: np.ndarray) -> np.ndarray:
    S = rho.shape[-1]
    rho[..., np.arange(S), np.arange(S)] = 0.0
    return rho


def _gaps(pi: np.ndarray) -> np.ndarray:
    """``gaps[..., s, s′] = π_s′ − π_s``."""
    return pi[..., None, :] - pi[..., :, None]


def _require_range(protocol, pi, x_obs, outside, where: str):
    """Imitation rules reduce to the replicator dynamic only while every payoff in play is in range."""
    bad = outside & (x_obs > 0.0)
    if np.any(bad):
        raise ProtocolSpecError(
            f"❌ '{protocol.name}' needs every played payoff in range; got {pi[bad].flat[0]:.6g}, {where}."
        )


def _broadcast_rows(row: np.ndarray) -> np.ndarray:
    """Rates that depend only on the destination strategy."""
    S = row.shape[-1]
    return np.repeat(row[..., None, :], S, axis=-2)


# ---------------------------------------------------------------------------
# Tempering functions for the tempered best-response dynamic
# ---------------------------------------------------------------------------

class Tempering(ABC):
    """Conditional switch rate ``Q: ℝ₊ → [0, 1]`` with ``Q(0) = 0`` and ``Q(q) > 0`` for ``q > 0``."""
    kind: ClassVar[str] = ''

    @abstractmethod
    def __call__(self, q):
        ...

    def validate(self):
        values = np.asarray(self(_TEMPERING_SAMPLES), dtype=float)
        zero = float(self(np.array(0.0)))
        if zero != 0.0 or np.any(values <= 0.0) or np.any(values > 1.0):
            raise ProtocolSpecError(
                f"❌ Tempering function {self!r} must satisfy Q(0)=0 and 0 < Q(q) ≤ 1 for q > 0."
            )


@dataclass(frozen=True)
class CappedLinear(Tempering):
    kind: ClassVar[str] = 'capped_linear'
    slope: float = 1.0

    def __call__(self, q):
        return np.minimum(self.slope * np.maximum(q, 0.0), 1.0)


@dataclass(frozen=True)
class ExponentialTempering(Tempering):
    kind: ClassVar[str] = 'exponential'
    rate: float = 1.0

    def __call__(self, q):
        return -np.expm1(-self.rate * np.maximum(q, 0.0))


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------

class Protocol(ABC):
    name: str = ''
    # satisfies both best-response stationarity and positive correlation
    admissible: bool = True
    # stationarity at best responses holds only for interior mixtures
    interior_only: bool = False
    # reads the own type's mixture, so callers must pass it
    observational: bool = False

    @abstractmethod
    def rates(self, pi: np.ndarray, x_obs: np.ndarray, tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
        ...

    def validate(self):
        """Raise ``ProtocolSpecError`` for out-of-range parameters."""


@dataclass(frozen=True)
class PairwiseComparison(Protocol):
    """``ρₛₛ′ = φ([πₛ′ − πₛ]₊)`` with ``φ(q) = q`` (linear) or ``φ(q) = q²`` (square)."""
    gain: str = 'linear'
    name: str = field(default='pairwise', init=False)

    def validate(self):
        if self.gain not in ('linear', 'square'):
            raise ProtocolSpecError(f"❌ Unknown pairwise gain '{self.gain}'.")

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        excess = np.maximum(_gaps(pi), 0.0)
        if self.gain == 'square':
            excess = excess ** 2
        return _zero_diagonal(excess)


@dataclass(frozen=True)
class Smith(PairwiseComparison):
    name: str = field(default='smith', init=False)


@dataclass(frozen=True)
class Logit(Protocol):
    noise: float = 0.1
    name: str = field(default='logit', init=False)
    admissible: bool = field(default=False, init=False)

    def validate(self):
        if not (np.isfinite(self.noise) and self.noise > 0.0):
            raise ProtocolSpecError(f"❌ Logit noise level must be positive, got {self.noise}.")

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        self.validate()
        return _zero_diagonal(_broadcast_rows(softmax(pi / self.noise, axis=-1)))


@dataclass(frozen=True)
class BNN(Protocol):
    name: str = field(default='bnn', init=False)
    observational: bool = field(default=True, init=False)

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        average = np.sum(pi * x_obs, axis=-1, keepdims=True)
        return _zero_diagonal(_broadcast_rows(np.maximum(pi - average, 0.0)))


@dataclass(frozen=True)
class ReplicatorPairwise(Protocol):
    """Imitate a randomly met same-type agent at rate ``[πₛ′ − πₛ]₊``."""
    name: str = field(default='replicator-pairwise', init=False)
    observational: bool = field(default=True, init=False)
    interior_only: bool = field(default=True, init=False)

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        return _zero_diagonal(x_obs[..., None, :] * np.maximum(_gaps(pi), 0.0))


@dataclass(frozen=True)
class ReplicatorDissatisfaction(Protocol):
    """
    Imitation driven by dissatisfaction: ``ρₛₛ′ = x_obsₛ′·[π̄ − πₛ]₊``.

    Gives the replicator dynamic while the aspiration level ``π̄`` is at least
    every payoff in play.
    """
    aspiration: float = 0.0
    name: str = field(default='replicator-dissatisfaction', init=False)
    observational: bool = field(default=True, init=False)
    interior_only: bool = field(default=True, init=False)

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        _require_range(self, pi, x_obs, pi > self.aspiration, f"above the aspiration level {self.aspiration:g}")
        push = np.maximum(self.aspiration - pi, 0.0)
        return _zero_diagonal(push[..., :, None] * x_obs[..., None, :])


@dataclass(frozen=True)
class ReplicatorSuccess(Protocol):
    """
    Imitation of success: ``ρₛₛ′ = x_obsₛ′·[πₛ′ − π_low]₊``.

    Gives the replicator dynamic while ``π_low`` is at most every payoff in play.
    """
    floor: float = 0.0
    name: str = field(default='replicator-success', init=False)
    observational: bool = field(default=True, init=False)
    interior_only: bool = field(default=True, init=False)

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        _require_range(self, pi, x_obs, pi < self.floor, f"below the floor {self.floor:g}")
        pull = x_obs * np.maximum(pi - self.floor, 0.0)
        return _zero_diagonal(_broadcast_rows(pull))


class ExactOptimization(Protocol):
    def conditional_rate(self, gain: np.ndarray) -> np.ndarray:
        return np.ones_like(gain)

    def rates(self, pi, x_obs, tie_tol=DEFAULT_TIE_TOL):
        best = pi >= pi.max(axis=-1, keepdims=True) - tie_tol
        target = np.argmax(best, axis=-1)
        pi_target = np.take_along_axis(pi, target[..., None], axis=-1)
        rho = np.zeros(pi.shape + (pi.shape[-1],))
        gain = np.where(best, 0.0, self.conditional_rate(np.maximum(pi_target - pi, 0.0)))
        np.put_along_axis(rho, np.broadcast_to(target[..., None, None], pi.shape + (1,)), gain[..., None], axis=-1)
        return _zero_diagonal(rho)


@dataclass(frozen=True)
class StandardBRD(ExactOptimization):
    name: str = field(default='standard-brd', init=False)


@dataclass(frozen=True)
class TemperedBRD(ExactOptimization):
    tempering: Tempering = field(default_factory=CappedLinear)
    name: str = field(default='tempered-brd', init=False)

    def validate(self):
        self.tempering.validate()

    def conditional_rate(self, gain):
        return self.tempering(gain)


# ---------------------------------------------------------------------------
# Rates and the mean dynamic
# ---------------------------------------------------------------------------

def velocity(rho: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Inflow minus outflow, ``vₛ = Σₛ′ xₛ′ρₛ′ₛ − xₛ Σₛ′ ρₛₛ′``, over any leading axes."""
    inflow = np.einsum('...s,...st->...t', x, rho)
    return inflow - x * rho.sum(axis=-1)


def switch_rates(protocol: Protocol, pi, x_obs=None, tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """
    Switching-rate matrix of ``protocol`` for one payoff vector.

    Args:
        protocol (Protocol): Revision protocol.
        pi: Payoff vector ``π ∈ ℝ^S``.
        x_obs: Observed mixture of the own type; required by observational protocols.
        tie_tol (float): Best-response tie tolerance for exact-optimization protocols.

    Returns:
        np.ndarray: ``S×S`` nonnegative matrix with zero diagonal.

    Raises:
        NonFiniteError: if ``pi`` has NaN or infinite entries.
        ProtocolSpecError: for invalid protocol parameters (e.g. logit noise ≤ 0).
            Also raised when an observational protocol gets no ``x_obs``.
    """
    pi = np.asarray(pi, dtype=float)
    if not np.all(np.isfinite(pi)):
        raise NonFiniteError("❌ Payoff vector must be finite.")
    if x_obs is None:
        if protocol.observational:
            raise ProtocolSpecError(f"❌ '{protocol.name}' reads the own type's mixture; pass x_obs.")
        x_obs = np.full(pi.shape, 1.0 / pi.shape[-1])
    x_obs = np.asarray(x_obs, dtype=float)
    if x_obs.shape != pi.shape:
        raise DimensionMismatchError(f"❌ Observed mixture {x_obs.shape} does not match payoffs {pi.shape}.")
    protocol.validate()
    return protocol.rates(pi, x_obs, tie_tol)


def mean_dynamic(protocol: Protocol, pi, x, tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """Velocity of one type's mixture ``x`` under ``protocol`` with within-type observation."""
    x = np.asarray(x, dtype=float)
    return velocity(switch_rates(protocol, pi, x, tie_tol), x)


# ---------------------------------------------------------------------------
# Heterogeneous protocol assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformRule:
    protocol: int = 0


@dataclass(frozen=True)
class ByNodeRule:
    protocols: tuple[int, ...]


@dataclass(frozen=True)
class ThresholdRule:
    """Nodes with ``θ[coordinate] < threshold`` use ``below``, the rest ``above``."""
    threshold: float
    below: int
    above: int
    coordinate: int = 0


@dataclass(frozen=True, eq=False)
class ProtocolAssignment:
    protocols: tuple[Protocol, ...]
    index: np.ndarray

    def __post_init__(self):
        index = np.array(self.index, dtype=int)
        if index.ndim != 1 or np.any(index < 0) or np.any(index >= len(self.protocols)):
            raise ProtocolSpecError("❌ Every node needs exactly one protocol from the list.")
        index.setflags(write=False)
        object.__setattr__(self, 'index', index)

    @property
    def size(self):
        return self.index.shape[0]

    def of(self, node: int) -> Protocol:
        return self.protocols[self.index[node]]

    def groups(self):
        """``(protocol, node indices)`` pairs for every protocol that is in use."""
        return [
            (protocol, np.flatnonzero(self.index == i))
            for i, protocol in enumerate(self.protocols)
            if np.any(self.index == i)
        ]

    def describe(self) -> list[dict]:
        """Name, parameters and node count of every protocol in use."""
        described = []
        for protocol, nodes in self.groups():
            parameters = {}
            for f in fields(protocol):
                if not f.init:
                    continue
                value = getattr(protocol, f.name)
                parameters[f.name] = {'kind': value.kind, **asdict(value)} if isinstance(value, Tempering) else value
            described.append({
                'name': protocol.name,
                'parameters': parameters,
                'nodes': int(nodes.size),
            })
        return described


def assign_protocols(grid: TypeGrid, protocols, rule=None) -> ProtocolAssignment:
    """
    Assign one protocol to every type node.

    Args:
        grid (TypeGrid): Type grid.
        protocols: Sequence of protocols the rule indexes into.
        rule: ``UniformRule``, ``ByNodeRule`` or ``ThresholdRule`` (default: uniform, first protocol).

    Returns:
        ProtocolAssignment: Deterministic, total assignment.

    Raises:
        ProtocolSpecError: if the rule references a missing node, coordinate or protocol.
    """
    protocols = tuple(protocols)
    if not protocols:
        raise ProtocolSpecError("❌ At least one protocol is required.")
    for protocol in protocols:
        protocol.validate()
    rule = UniformRule() if rule is None else rule

    if isinstance(rule, UniformRule):
        index = np.full(grid.size, rule.protocol)
    elif isinstance(rule, ByNodeRule):
        if len(rule.protocols) != grid.size:
            raise ProtocolSpecError(
                f"❌ By-node assignment lists {len(rule.protocols)} nodes, grid has {grid.size}."
            )
        index = np.asarray(rule.protocols)
    elif isinstance(rule, ThresholdRule):
        if not 0 <= rule.coordinate < grid.dim:
            raise ProtocolSpecError(f"❌ Type coordinate {rule.coordinate} is out of range for d={grid.dim}.")
        index = np.where(grid.nodes[:, rule.coordinate] < rule.threshold, rule.below, rule.above)
    else:
        raise ProtocolSpecError(f"❌ Unknown assignment rule {rule!r}.")
    return ProtocolAssignment(protocols, index)


def rate_bound(protocol: Protocol, low, high, n_samples: int = 1000, rng=None,
               tie_tol: float = DEFAULT_TIE_TOL) -> float:
    """
    Largest switching rate over the payoff box ``[low, high]^S``.

    The box corners are always evaluated, plus ``n_samples`` random payoff
    vectors paired with random observed mixtures.
    """
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    if low.shape != high.shape or low.ndim != 1 or np.any(high < low):
        raise ProtocolSpecError("❌ Payoff box needs matching bounds with low ≤ high.")
    rng = np.random.default_rng(0) if rng is None else rng
    S = low.shape[0]
    corners = np.array(np.meshgrid(*zip(low, high), indexing='ij')).reshape(S, -1).T
    pi = np.concatenate([corners, low + (high - low) * rng.random((n_samples, S))])
    x_obs = np.concatenate([np.full((corners.shape[0], S), 1.0 / S), rng.dirichlet(np.ones(S), size=n_samples)])
    protocol.validate()
    bound = float(protocol.rates(pi, x_obs, tie_tol).max())
    if not np.isfinite(bound):
        raise NonFiniteError(f"❌ Protocol '{protocol.name}' produced a non-finite rate on the payoff box.")
    return bound
