"""
🧾 Scenario Schema — heterodyn

Pydantic models for scenario JSON documents. A scenario fully describes one
experiment: the type distribution and its grid, the game, the revision
protocols and how they are assigned to types, the initial state, the
integrator and the diagnostics to run.

### Features:
- **Discriminated unions** on ``kind`` / ``name`` / ``rule`` for every variant field.
- **Complete error reports**: field errors and cross-field consistency errors are collected
  together and raised as one ``ScenarioError`` whose entries carry dotted field paths.
- **Builders**: every model turns itself into the matching engine object via ``build()``.
- **Round trip**: ``parse_scenario(serialize_scenario(config)) == config``.

### Example:
    {
      "name": "entry_exit",
      "grid": {"distribution": {"kind": "uniform", "intervals": [[0, 1]]}, "n_nodes": 100},
      "game": {"kind": "asag",
               "common": {"kind": "entry_exit", "profile": {"kind": "polynomial", "coefficients": [1, -1]}},
               "idiosyncratic": {"loadings": [[-1], [0]], "offset": [0, 0]}},
      "protocols": [{"name": "standard-brd"}],
      "initial_state": {"kind": "pure", "strategy": 1}
    }
"""

import json
from math import prod
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from heterodyn import games, protocols, typegrid
from heterodyn.dynamics import IntegratorConfig
from heterodyn.exceptions import ScenarioError

CHECK_NAMES = Literal[
    'simplex', 'renormalization', 'residual', 'pc', 'lyapunov', 'local_max', 'oracle', 'welfare',
    'br_violation', 'gradient', 'gradient_order', 'nonaggregable', 'aggregable',
]

Matrix = list[list[float]]


class Schema(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


# ---------------------------------------------------------------------------
# Type distributions
# ---------------------------------------------------------------------------

class UniformDistribution(Schema):
    kind: Literal['uniform']
    intervals: list[tuple[float, float]] = Field(min_length=1)

    def build(self):
        return typegrid.UniformSpec(intervals=tuple(self.intervals))

    def node_count(self, n_nodes):
        return n_nodes


class GaussianDistribution(Schema):
    kind: Literal['gaussian']
    mean: float = 0.0
    stdev: PositiveFloat = 1.0
    rule: Literal['gauss-hermite', 'midpoint'] = 'gauss-hermite'

    def build(self):
        return typegrid.GaussianSpec(mean=self.mean, stdev=self.stdev, rule=self.rule)

    def node_count(self, n_nodes):
        return n_nodes


class DiscreteDistribution(Schema):
    kind: Literal['discrete']
    points: list[Union[float, list[float]]] = Field(min_length=1)
    masses: list[float] = Field(min_length=1)

    def build(self):
        return typegrid.DiscreteSpec(points=np.asarray(self.points, dtype=float), masses=np.asarray(self.masses))

    def node_count(self, n_nodes):
        return len(self.points)

    def dim(self):
        return 1 if not isinstance(self.points[0], list) else len(self.points[0])


Marginal = Annotated[
    Union[UniformDistribution, GaussianDistribution, DiscreteDistribution],
    Field(discriminator='kind'),
]


class ProductDistribution(Schema):
    kind: Literal['product']
    marginals: list[Marginal] = Field(min_length=1)

    def build(self):
        return typegrid.ProductSpec(marginals=tuple(m.build() for m in self.marginals))

    def node_count(self, n_nodes):
        return prod(m.node_count(n_nodes) for m in self.marginals)

    def dim(self):
        return len(self.marginals)


Distribution = Annotated[
    Union[UniformDistribution, GaussianDistribution, DiscreteDistribution, ProductDistribution],
    Field(discriminator='kind'),
]


class GridConfig(Schema):
    distribution: Distribution
    n_nodes: PositiveInt = 1

    @property
    def size(self):
        return self.distribution.node_count(self.n_nodes)

    @property
    def dim(self):
        return getattr(self.distribution, 'dim', lambda: 1)()

    def build(self):
        return typegrid.build_grid(self.distribution.build(), self.n_nodes)


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------

class PolynomialProfileConfig(Schema):
    kind: Literal['polynomial']
    coefficients: list[float] = Field(min_length=1)

    def build(self):
        return games.PolynomialProfile(tuple(self.coefficients))


class ExponentialProfileConfig(Schema):
    kind: Literal['exponential']
    scale: float
    rate: float
    shift: float = 0.0

    def build(self):
        return games.ExponentialProfile(self.scale, self.rate, self.shift)


class LinearCommon(Schema):
    kind: Literal['linear']
    matrix: Matrix
    offset: list[float]

    @property
    def n_strategies(self):
        return len(self.offset)

    def build(self):
        return games.LinearPayoff(self.matrix, self.offset)


class SeparableCommon(Schema):
    kind: Literal['separable']
    coefficients: list[list[float]] = Field(min_length=1)

    @property
    def n_strategies(self):
        return len(self.coefficients)

    def build(self):
        return games.SeparablePayoff(tuple(tuple(c) for c in self.coefficients))


class EntryExitCommon(Schema):
    kind: Literal['entry_exit']
    profile: Annotated[Union[PolynomialProfileConfig, ExponentialProfileConfig], Field(discriminator='kind')]

    @property
    def n_strategies(self):
        return 2

    def build(self):
        return games.EntryExitPayoff(self.profile.build())


class IdiosyncraticConfig(Schema):
    loadings: Matrix
    offset: list[float] | None = None

    def build(self):
        offset = np.zeros(len(self.loadings)) if self.offset is None else self.offset
        return games.IdiosyncraticMap(self.loadings, offset)


class ASAGConfig(Schema):
    kind: Literal['asag']
    common: Annotated[Union[LinearCommon, SeparableCommon, EntryExitCommon], Field(discriminator='kind')]
    # identity map (θ is the idiosyncratic payoff vector) when omitted
    idiosyncratic: IdiosyncraticConfig | None = None
    pricing: bool = False
    fd_step: PositiveFloat = games.DEFAULT_FD_STEP

    @property
    def n_strategies(self):
        return self.common.n_strategies

    def build(self, cache_max_entries=None):
        S = self.n_strategies
        idiosyncratic = (games.IdiosyncraticMap.identity(S) if self.idiosyncratic is None
                         else self.idiosyncratic.build())
        return games.ASAG(self.common.build(), idiosyncratic, self.pricing, self.fd_step)


class MatchingConfig(Schema):
    base: Matrix
    own: Matrix | None = None
    opponent: Matrix | None = None
    cross: Matrix | None = None

    def build(self):
        return games.BilinearMatching(self.base, self.own, self.opponent, self.cross)


class RandomMatchingConfig(Schema):
    kind: Literal['random_matching']
    matching: MatchingConfig
    potential_part: MatchingConfig | None = None

    @property
    def n_strategies(self):
        return len(self.matching.base)

    def build(self, cache_max_entries=None):
        cap = games.DEFAULT_CACHE_MAX_ENTRIES if cache_max_entries is None else cache_max_entries
        part = None if self.potential_part is None else self.potential_part.build()
        return games.RandomMatching(self.matching.build(), part, cap)


class ConstantKernelConfig(Schema):
    kind: Literal['constant']
    value: float = 1.0

    def build(self):
        return games.ConstantKernel(self.value)


class GaussianKernelConfig(Schema):
    kind: Literal['gaussian']
    bandwidth: PositiveFloat
    scale: float = 1.0

    def build(self):
        return games.GaussianKernel(self.bandwidth, self.scale)


class ProductKernelConfig(Schema):
    kind: Literal['product']
    scale: float = 1.0
    shift: float = 0.0

    def build(self):
        return games.ProductKernel(self.scale, self.shift)


class TwoPopulationConfig(Schema):
    own: Matrix
    opponent: Matrix
    offset: list[float]
    cubic: list[float] | None = None

    def build(self):
        return games.TwoPopulationPayoff(self.own, self.opponent, self.offset, self.cubic)


class StructuredConfig(Schema):
    kind: Literal['structured']
    base: TwoPopulationConfig
    kernel: Annotated[
        Union[ConstantKernelConfig, GaussianKernelConfig, ProductKernelConfig],
        Field(discriminator='kind'),
    ]

    @property
    def n_strategies(self):
        return len(self.base.offset)

    def build(self, cache_max_entries=None):
        return games.Structured(self.base.build(), self.kernel.build())


GameConfig = Annotated[Union[ASAGConfig, RandomMatchingConfig, StructuredConfig], Field(discriminator='kind')]


# ---------------------------------------------------------------------------
# Protocols and assignment
# ---------------------------------------------------------------------------

class CappedLinearConfig(Schema):
    kind: Literal['capped_linear']
    slope: PositiveFloat = 1.0

    def build(self):
        return protocols.CappedLinear(self.slope)


class ExponentialTemperingConfig(Schema):
    kind: Literal['exponential']
    rate: PositiveFloat = 1.0

    def build(self):
        return protocols.ExponentialTempering(self.rate)


class SmithConfig(Schema):
    name: Literal['smith']

    def build(self):
        return protocols.Smith()


class PairwiseConfig(Schema):
    name: Literal['pairwise']
    gain: Literal['linear', 'square'] = 'linear'

    def build(self):
        return protocols.PairwiseComparison(self.gain)


class LogitConfig(Schema):
    name: Literal['logit']
    noise: PositiveFloat

    def build(self):
        return protocols.Logit(self.noise)


class BNNConfig(Schema):
    name: Literal['bnn']

    def build(self):
        return protocols.BNN()


class ReplicatorPairwiseConfig(Schema):
    name: Literal['replicator-pairwise']

    def build(self):
        return protocols.ReplicatorPairwise()


class ReplicatorDissatisfactionConfig(Schema):
    name: Literal['replicator-dissatisfaction']
    aspiration: float

    def build(self):
        return protocols.ReplicatorDissatisfaction(self.aspiration)


class ReplicatorSuccessConfig(Schema):
    name: Literal['replicator-success']
    floor: float

    def build(self):
        return protocols.ReplicatorSuccess(self.floor)


class StandardBRDConfig(Schema):
    name: Literal['standard-brd']

    def build(self):
        return protocols.StandardBRD()


class TemperedBRDConfig(Schema):
    name: Literal['tempered-brd']
    tempering: Annotated[
        Union[CappedLinearConfig, ExponentialTemperingConfig],
        Field(discriminator='kind'),
    ] = CappedLinearConfig(kind='capped_linear')

    def build(self):
        return protocols.TemperedBRD(self.tempering.build())


ProtocolConfig = Annotated[
    Union[
        SmithConfig, PairwiseConfig, LogitConfig, BNNConfig, ReplicatorPairwiseConfig,
        ReplicatorDissatisfactionConfig, ReplicatorSuccessConfig, StandardBRDConfig, TemperedBRDConfig,
    ],
    Field(discriminator='name'),
]


class UniformAssignment(Schema):
    rule: Literal['uniform']
    protocol: Annotated[int, Field(ge=0)] = 0

    def indices(self):
        return [self.protocol]

    def build(self):
        return protocols.UniformRule(self.protocol)


class ByNodeAssignment(Schema):
    rule: Literal['by_node']
    protocols: list[Annotated[int, Field(ge=0)]] = Field(min_length=1)

    def indices(self):
        return self.protocols

    def build(self):
        return protocols.ByNodeRule(tuple(self.protocols))


class ThresholdAssignment(Schema):
    rule: Literal['threshold']
    coordinate: Annotated[int, Field(ge=0)] = 0
    threshold: float
    below: Annotated[int, Field(ge=0)]
    above: Annotated[int, Field(ge=0)]

    def indices(self):
        return [self.below, self.above]

    def build(self):
        return protocols.ThresholdRule(self.threshold, self.below, self.above, self.coordinate)


AssignmentConfig = Annotated[
    Union[UniformAssignment, ByNodeAssignment, ThresholdAssignment],
    Field(discriminator='rule'),
]


# ---------------------------------------------------------------------------
# Initial state, numerics and outputs
# ---------------------------------------------------------------------------

class UniformInitial(Schema):
    kind: Literal['uniform']

    def build(self, grid, S):
        return typegrid.uniform_state(grid, S)


class PureInitial(Schema):
    kind: Literal['pure']
    strategy: Annotated[int, Field(ge=0)]

    def build(self, grid, S):
        return typegrid.pure_state(grid, S, self.strategy)


class RowsInitial(Schema):
    kind: Literal['rows']
    rows: Matrix = Field(min_length=1)

    def build(self, grid, S):
        return np.asarray(self.rows, dtype=float)


class RandomInitial(Schema):
    kind: Literal['random']
    seed: Annotated[int, Field(ge=0)]

    def build(self, grid, S):
        return typegrid.random_state(grid, S, np.random.Generator(np.random.PCG64(self.seed)))


InitialConfig = Annotated[
    Union[UniformInitial, PureInitial, RowsInitial, RandomInitial],
    Field(discriminator='kind'),
]


class IntegratorSchema(Schema):
    method: Literal['rk4', 'euler'] = 'rk4'
    dt: PositiveFloat = 0.01
    t_end: PositiveFloat = 10.0
    sample_every: PositiveInt = 10
    clamp_tol: PositiveFloat = 1e-9

    def build(self, renorm_budget=None):
        extra = {} if renorm_budget is None else {'renorm_budget': renorm_budget}
        return IntegratorConfig(self.method, self.dt, self.t_end, self.sample_every, self.clamp_tol, **extra)


class Tolerances(Schema):
    tie_tol: Annotated[float, Field(ge=0.0)] = games.DEFAULT_TIE_TOL
    mass_tol: PositiveFloat = 1e-8


class EquilibriumSchema(Schema):
    damping: Annotated[float, Field(gt=0.0, le=1.0)] = 0.5
    max_iters: PositiveInt = 1000
    tol: PositiveFloat = 1e-10


class PotentialCheckSchema(Schema):
    n_pairs: PositiveInt = 100
    h: PositiveFloat = 1e-4
    order_h: PositiveFloat = 1e-3
    n_directions: PositiveInt = 50


class AggregabilitySchema(Schema):
    target: list[float] | None = None
    n_states: Annotated[int, Field(ge=2)] = 4


class DiagnosticsSchema(Schema):
    n_samples: Annotated[int, Field(ge=2)] = 200
    min_distance: Annotated[float, Field(ge=0.0)] = 0.1


class OutputsSchema(Schema):
    directory: str | None = None
    trajectory_csv: bool = True
    diagnostics_csv: bool = True


class ScenarioConfig(Schema):
    name: str = Field(min_length=1)
    description: str = ''
    seed: Annotated[int, Field(ge=0)] = 0
    grid: GridConfig
    game: GameConfig
    protocols: list[ProtocolConfig] = Field(min_length=1)
    assignment: AssignmentConfig = UniformAssignment(rule='uniform')
    initial_state: InitialConfig = UniformInitial(kind='uniform')
    integrator: IntegratorSchema = IntegratorSchema()
    tolerances: Tolerances = Tolerances()
    equilibrium: EquilibriumSchema = EquilibriumSchema()
    potential_check: PotentialCheckSchema = PotentialCheckSchema()
    aggregability: AggregabilitySchema = AggregabilitySchema()
    diagnostics: DiagnosticsSchema = DiagnosticsSchema()
    outputs: OutputsSchema = OutputsSchema()
    checks: list[CHECK_NAMES] = []


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _loc(parts) -> str:
    return '.'.join(str(p) for p in parts) or '(document)'


def _shape(matrix):
    return len(matrix), (len(matrix[0]) if matrix else 0)


def _consistency_errors(config: ScenarioConfig) -> list[dict]:
    """Cross-field problems pydantic cannot see field by field."""
    errors = []
    S = config.game.n_strategies
    K = config.grid.size
    d = config.grid.dim
    game = config.game

    def add(loc, msg):
        errors.append({'loc': loc, 'msg': msg})

    if isinstance(game, ASAGConfig):
        if isinstance(game.common, LinearCommon) and _shape(game.common.matrix) != (S, S):
            add('game.common.matrix', f"must be {S}×{S} to match game.common.offset")
        if game.idiosyncratic is None:
            if d != S:
                add('game.idiosyncratic', f"identity map needs type dimension {d} to equal S={S} (game.common)")
        else:
            rows, cols = _shape(game.idiosyncratic.loadings)
            if rows != S:
                add('game.idiosyncratic.loadings', f"has {rows} rows but game.common defines S={S}")
            if cols != d:
                add('game.idiosyncratic.loadings', f"has {cols} columns but grid.distribution has dimension {d}")
            if game.idiosyncratic.offset is not None and len(game.idiosyncratic.offset) != S:
                add('game.idiosyncratic.offset', f"has length {len(game.idiosyncratic.offset)}, expected S={S}")
    elif isinstance(game, RandomMatchingConfig):
        for part_name in ('matching', 'potential_part'):
            part = getattr(game, part_name)
            if part is None:
                continue
            for name in ('base', 'own', 'opponent', 'cross'):
                matrix = getattr(part, name)
                if matrix is not None and _shape(matrix) != (S, S):
                    add(f'game.{part_name}.{name}', f"must be {S}×{S} (game.matching.base)")
    elif isinstance(game, StructuredConfig):
        for name in ('own', 'opponent'):
            if _shape(getattr(game.base, name)) != (S, S):
                add(f'game.base.{name}', f"must be {S}×{S} to match game.base.offset")
        if game.base.cubic is not None and len(game.base.cubic) != S:
            add('game.base.cubic', f"has length {len(game.base.cubic)}, expected S={S}")

    n_protocols = len(config.protocols)
    for index in config.assignment.indices():
        if index >= n_protocols:
            add('assignment', f"references protocol {index} but only {n_protocols} are listed in protocols")
    if isinstance(config.assignment, ByNodeAssignment) and len(config.assignment.protocols) != K:
        add('assignment.protocols', f"lists {len(config.assignment.protocols)} nodes but the grid has {K}")
    if isinstance(config.assignment, ThresholdAssignment) and config.assignment.coordinate >= d:
        add('assignment.coordinate', f"is out of range for type dimension {d}")

    initial = config.initial_state
    if isinstance(initial, PureInitial) and initial.strategy >= S:
        add('initial_state.strategy', f"is {initial.strategy} but game defines only S={S} strategies")
    if isinstance(initial, RowsInitial):
        rows, cols = _shape(initial.rows)
        if cols != S:
            add('initial_state.rows', f"rows have {cols} strategies but game defines S={S}")
        if rows != K:
            add('initial_state.rows', f"has {rows} rows but grid has {K} nodes")

    integrator = config.integrator
    if integrator.dt > integrator.t_end:
        add('integrator.dt', f"is {integrator.dt:g}, longer than integrator.t_end={integrator.t_end:g}")

    target = config.aggregability.target
    if target is not None and len(target) != S:
        add('aggregability.target', f"has length {len(target)} but game defines S={S}")
    return errors


def parse_scenario(document) -> ScenarioConfig:
    """
    Validate a scenario document.

    Args:
        document: JSON text, bytes or an already decoded mapping.

    Returns:
        ScenarioConfig: Fully validated config with defaults filled in.

    Raises:
        ScenarioError: listing every field error, or every consistency error.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError([{'loc': '(document)', 'msg': f"invalid JSON: {exc}"}]) from exc
    try:
        config = ScenarioConfig.model_validate(document)
    except ValidationError as exc:
        raise ScenarioError([{'loc': _loc(e['loc']), 'msg': e['msg']} for e in exc.errors()]) from exc
    errors = _consistency_errors(config)
    if errors:
        raise ScenarioError(errors)
    return config


def serialize_scenario(config: ScenarioConfig) -> str:
    return config.model_dump_json(indent=2)


def apply_overrides(config: ScenarioConfig, seed=None, dt=None, t_end=None) -> ScenarioConfig:
    """Return ``config`` with command-line overrides applied and re-validated."""
    data = config.model_dump(mode='json')
    if seed is not None:
        data['seed'] = seed
        if data['initial_state']['kind'] == 'random':
            data['initial_state']['seed'] = seed
    if dt is not None:
        data['integrator']['dt'] = dt
    if t_end is not None:
        data['integrator']['t_end'] = t_end
    return parse_scenario(data)
