"""Exception hierarchy.

Every error carries the module and operation that raised it plus a short
description of the offending input, so the CLI can report them uniformly.
"""


class DynzetaError(Exception):
    """Base class for all library errors."""

    module = "dynzeta"

    def __init__(self, message, operation=None, offending=None):
        self.operation = operation
        self.offending = offending
        parts = [f"[{self.module}"]
        if operation:
            parts[0] += f".{operation}"
        parts[0] += "]"
        parts.append(message)
        if offending is not None:
            parts.append(f"(input: {offending!r})")
        super().__init__(" ".join(parts))


class ConfigError(DynzetaError):
    module = "core-model"


class ValidationError(DynzetaError):
    module = "core-model"


class InadmissibleWordError(DynzetaError):
    module = "core-model"


class HyperbolicityError(DynzetaError):
    module = "orbit-enum"


class RoofPositivityError(DynzetaError):
    module = "orbit-enum"


class EnumerationCapError(DynzetaError):
    module = "orbit-enum"


class SpectrumError(DynzetaError):
    module = "single-orbit"


class OracleError(DynzetaError):
    module = "bowen"


class PoleProximityError(DynzetaError):
    module = "bowen"


class ApplicabilityError(DynzetaError):
    module = "determinant"


class UnresolvedClusterError(DynzetaError):
    module = "determinant"

    def __init__(self, message, operation=None, offending=None, regions=()):
        self.regions = list(regions)
        super().__init__(message, operation, offending)


class QuadratureError(DynzetaError):
    module = "frames"

    def __init__(self, message, operation=None, offending=None, values=None):
        self.values = values
        super().__init__(message, operation, offending)


class InsufficientDataError(DynzetaError):
    module = "frames"


class ContourDegeneracyError(DynzetaError):
    module = "entire-analysis"


class NumericalError(DynzetaError):
    """Generic numerical failure (exit status 2 in the CLI)."""


class FrameConfigError(ConfigError):
    """Frame parameters the discretization cannot handle."""

    module = "frames"
