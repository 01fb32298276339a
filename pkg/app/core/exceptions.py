"""Errors raised by the sampling library.

Library code raises these; the CLI maps them to exit codes.
"""


class UstLabError(Exception):
    """Base class for every error raised by this package."""


class NetworkValidationError(UstLabError, ValueError):
    """A network or vertex set violates a structural requirement."""


class DisconnectedNetworkError(NetworkValidationError):
    """The network (or an induced subgraph that must be connected) is not connected."""


class NoBoundaryError(NetworkValidationError):
    """A wired quotient was requested without any vertex left to wire."""


class UnknownVertexError(UstLabError, KeyError):
    """A vertex id does not belong to the network or forest."""


class SingularSystemError(UstLabError, ArithmeticError):
    """The Dirichlet problem has no unique solution."""


class IrreducibleNetworkError(UstLabError, ValueError):
    """Series and parallel moves cannot reduce the network to a single edge."""


class TreeCountOverflowError(UstLabError, OverflowError):
    """The weighted spanning tree count does not fit in a double."""


class StepCapExceededError(UstLabError, RuntimeError):
    """A walk hit its step cap before reaching its goal."""


class ExtensionCapExceededError(UstLabError, RuntimeError):
    """A point process was extended too many times without reaching its goal."""


class EmptyWalkError(UstLabError, ValueError):
    """An operation that needs at least one vertex received an empty walk."""


class ForestInvariantError(UstLabError, ValueError):
    """An oriented forest has a cycle or a vertex with a bad parent edge."""


class MismatchedWindowError(UstLabError, ValueError):
    """A time window does not line up with the state it should update."""


class EmptyDistributionError(UstLabError, ValueError):
    """An empirical distribution has no samples."""


class DegenerateDistributionError(UstLabError, ValueError):
    """An exact distribution cannot support the requested test."""


class VertexBudgetError(UstLabError, ValueError):
    """A generated network would exceed the configured vertex budget."""


class ConfigurationError(UstLabError, ValueError):
    """An experiment config asks for something the chosen kind cannot produce."""
