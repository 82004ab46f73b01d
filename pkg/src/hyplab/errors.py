"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LabError(Exception):
    exit_code = 1


class ConfigError(LabError, ValueError):
    exit_code = 1


class GeometryError(LabError, ValueError):
    exit_code = 2


class HorizonError(LabError, ValueError):
    exit_code = 3


class CFLError(LabError, ValueError):
    exit_code = 4


class DeterminantError(LabError, ValueError):
    exit_code = 5


class EmptyEnsembleError(LabError, ValueError):
    exit_code = 6


class TauOrderError(LabError, ValueError):
    exit_code = 7


class CompatibilityError(LabError, ValueError):
    """Initial data disagree with the Dirichlet data at t = 0."""


class GridMismatchError(LabError, ValueError):
    pass


class SamplingError(LabError, ValueError):
    """Not enough time samples for the requested stencil."""
