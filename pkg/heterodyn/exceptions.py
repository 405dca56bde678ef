"""
⚠️ Error Types — heterodyn

Every failure raised by the numerical engine derives from ``HeterodynError``,
itself a ``ValueError`` so callers that only care about bad input can keep
catching the builtin.

Solver non-convergence and failed diagnostics are *results* (flags inside the
returned reports), never exceptions.
"""


class HeterodynError(ValueError):
    """Base class for all heterodyn errors."""


class DimensionMismatchError(HeterodynError):
    """Array shapes of states, grids, payoffs or directions disagree."""


class NonFiniteError(HeterodynError):
    """A payoff, rate, Jacobian or state entry is NaN or infinite."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class GridSpecError(HeterodynError):
    """A type-distribution description cannot be discretized."""


class GameSpecError(HeterodynError):
    """A game description is malformed or used outside its class."""


class PotentialSymmetryError(GameSpecError):
    """A symmetry precondition of a heterogeneous potential fails."""


class ProtocolSpecError(HeterodynError):
    """A revision protocol or protocol assignment is malformed."""


class InfeasibleError(HeterodynError):
    """A requested perturbation, target or bracket is outside the feasible set."""


class StepSizeError(HeterodynError):
    """The integrator needed more simplex renormalization than the budget allows."""

    def __init__(self, message, time=None, renormalization=None):
        super().__init__(message)
        self.time = time
        self.renormalization = renormalization


class ScenarioError(HeterodynError):
    """A scenario document failed validation; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{e['loc']}: {e['msg']}" for e in self.errors]
        super().__init__("❌ Invalid scenario:\n  " + "\n  ".join(lines))
