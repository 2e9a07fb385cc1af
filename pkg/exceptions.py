"""
Error and warning types shared by every service.

Each error carries the process exit code the command line maps it to.
"""
from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for all errors raised by the lab"""
    exit_code: int = 1

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context or {})

    def with_stage(self, stage: str) -> "LabError":
        """Attach the pipeline stage the error surfaced in"""
        self.context.setdefault("stage", stage)
        return self


class PreconditionError(LabError, ValueError):
    """Inputs violate an operation precondition"""
    exit_code = 2


class ConfigurationError(PreconditionError):
    """A configuration file or override failed validation"""

    def __init__(self, message: str, problems: Optional[list] = None):
        super().__init__(message, {"problems": list(problems or [])})
        self.problems = list(problems or [])


class NoNodalPointsError(PreconditionError):
    """|Λ| > 1: the model has no band-touching points"""


class SingularMapError(PreconditionError):
    """The coupling map cannot be inverted (a = ±1)"""


class SegmentationError(PreconditionError):
    """b_w(τ) is not monotone inside a schedule segment"""


class ConvergenceError(LabError):
    """A numerical procedure failed to converge"""
    exit_code = 3


class DegeneracyCrossingError(ConvergenceError):
    """Selected and unselected bands touch at a grid point"""


class RefineGridError(ConvergenceError):
    """A link overlap matrix is (near) singular; the grid is too coarse"""


class ResolutionError(ConvergenceError):
    """Integration drifted between two grid refinements"""


class WindingConvergenceError(ConvergenceError):
    """A winding number did not settle on an integer"""


class IntegrationError(ConvergenceError):
    """The time integrator failed"""


class RampTooFastError(ConvergenceError):
    """Leakage out of the adiabatic state exceeded the threshold"""


class BasisError(ConvergenceError):
    """The block-decoupling basis does not decouple the Hamiltonian"""


class AliasingError(PreconditionError):
    """Two modulation tones collide or are not commensurate"""


class NonlinearityWarning(UserWarning):
    """A linear fit has a poor coefficient of determination"""


class DispersiveWarning(UserWarning):
    """A qubit-coupler pair is outside the dispersive regime"""


class DisturbanceWarning(UserWarning):
    """The discarded ATS branch sits close to another manifold level"""
