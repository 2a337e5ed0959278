"""Exception types shared across the package."""


class ContractLabError(Exception):
    """Base class for all package errors."""


class NegativeResolvedValue(ContractLabError):
    """A hidden vector produced a negative cost or reward for some action."""


class EmptyBody(ContractLabError):
    """The convex body has no feasible point."""


class OutOfRange(ContractLabError):
    """A threshold lies outside the support range of a body."""


class Infeasible(ContractLabError):
    """An action cannot be implemented anywhere on the body."""


class DegeneratePolygon(ContractLabError):
    """A polygon has zero area."""


class TargetUnreached(ContractLabError):
    """Greedy code generation stopped before reaching the requested size."""

    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


class MissingProposal(ContractLabError):
    """Feedback was delivered before a proposal."""


class NoSmallerCost(ContractLabError):
    """No known action is cheaper than the target action."""


class RepresentativeMissing(ContractLabError):
    """No known action falls inside the cost window below the target."""


class CodeTooSmall(ContractLabError):
    """A spherical code is too small for the requested horizon."""


class ConfigError(ContractLabError):
    """A run or adversary configuration is invalid."""


class ConsistencyViolation(ContractLabError):
    """A finalized hidden vector contradicts the logged feedback."""


class DimensionTooLarge(ContractLabError):
    """A grid oracle was requested in too many dimensions."""
