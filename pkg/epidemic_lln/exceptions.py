"""Error hierarchy shared by all epidemic_lln modules."""
from typing import Optional


class EpidemicError(Exception):
    """Base class for every error raised by epidemic_lln"""


class InvalidDistributionError(EpidemicError, ValueError):
    """Masses or atoms do not describe a valid finite weight law"""


class PositivityError(InvalidDistributionError):
    """Every atom sits at zero, so P(rho > 0) > 0 fails"""


class DomainError(EpidemicError, ValueError):
    """A real argument lies outside the domain of the function"""


class PreconditionError(EpidemicError, ValueError):
    """A documented precondition of an operation does not hold"""


class DimensionError(EpidemicError, ValueError):
    """Graph, weights and states disagree on the vertex count"""


class SolverError(EpidemicError, RuntimeError):
    """The ODE integrator or quadrature could not reach the requested time"""

    def __init__(self, message: str, t_reached: Optional[float] = None, status: Optional[int] = None):
        super().__init__(message)
        self.t_reached = t_reached
        self.status = status


class HorizonExceededError(SolverError):
    """Requested time lies beyond what the time-change quadrature can resolve"""

    def __init__(self, message: str, t_max: float):
        super().__init__(message, t_reached=t_max)
        self.t_max = t_max


class ConfigError(EpidemicError, ValueError):
    """A configuration or edge-list file could not be parsed or validated"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(location + message)
        self.path = path
        self.line = line


class TrajectoryAuditError(EpidemicError, AssertionError):
    """An event log contains a transition the SIR dynamics forbid"""


class ReportError(EpidemicError, OSError):
    """A report file could not be written"""

    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path
