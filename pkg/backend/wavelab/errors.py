"""Error types raised by the WaveLab services.

Every error carries a human-readable ``detail`` and an optional ``context`` dict,
so the CLI can print a single line and the runner can attach the experiment kind.
"""

from typing import Any, Dict, List, Optional


class LabError(Exception):
    """Base class for all laboratory errors."""

    def __init__(self, detail: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.context = dict(context or {})

    def with_prefix(self, prefix: str) -> "LabError":
        """Return a copy of this error whose detail starts with ``prefix``."""
        err = self.__class__.__new__(self.__class__)
        LabError.__init__(err, f"{prefix}: {self.detail}", self.context)
        for key, value in self.__dict__.items():
            if key not in ("detail", "context"):
                setattr(err, key, value)
        return err


class GapViolation(LabError):
    """xi^2 + b(x2)^2 fell below the configured gap floor."""

    def __init__(self, detail: str, point=None, gap: Optional[float] = None):
        super().__init__(detail, {"point": point, "gap": gap})
        self.point = point
        self.gap = gap


class DerivativeUnavailable(LabError):
    """A symbol evaluator failed while its partial derivatives were requested."""


class GridTooCoarse(LabError):
    """The grid does not resolve the symbol or the semiclassical oscillations."""


class NotSelfAdjoint(LabError):
    """An operator required to be self-adjoint has a large adjoint defect."""


class EmptyWindow(LabError):
    """A spectral window contains no eigenvalue."""


class WindowMismatch(LabError):
    """The support of a window function is not contained in the spectral window."""


class StepRejected(LabError):
    """The implicit midpoint iteration did not converge."""

    def __init__(self, detail: str, trajectory=None):
        super().__init__(detail)
        self.trajectory = trajectory


class EdgeMassExceeded(LabError):
    """Too much wave mass reached the periodic seam of the box."""


class BoxTooSmall(LabError):
    """A wave packet does not fit inside the box with the required margin."""


class GridMismatch(LabError):
    """Operands were built on different grids or at different eps."""


class ConfigInvalid(LabError):
    """An experiment configuration failed validation."""

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors) if errors else "invalid configuration")
        self.errors = list(errors)
