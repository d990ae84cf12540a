"""
Exception hierarchy for DistSubmod.
Each library error carries the exit code the CLI reports for it.
"""


class DistSubmodError(Exception):
    """Base class for errors raised by the library"""
    exit_code = 1


class ConfigError(DistSubmodError):
    """Invalid scenario, settings or construction arguments"""
    exit_code = 1


class GraphError(ConfigError):
    """Communication graph is malformed or disconnected"""


class GuardExceededError(DistSubmodError):
    """An exact (enumeration based) routine was asked for an instance that is too large"""
    exit_code = 2


class InvariantViolation(DistSubmodError):
    """An internal consistency check failed"""
    exit_code = 3


class ProtocolViolation(InvariantViolation):
    """The message passing protocol produced an impossible state"""


class StrategyRangeError(ValueError):
    """Strategy identifier outside 1..n"""


class MembershipRangeError(ValueError):
    """Membership vector with a coordinate outside [0, 1] or wrong length"""


__all__ = [
    'DistSubmodError', 'ConfigError', 'GraphError', 'GuardExceededError',
    'InvariantViolation', 'ProtocolViolation', 'StrategyRangeError', 'MembershipRangeError'
]
