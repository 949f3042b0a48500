"""Exception types shared across the package."""


class TgfemError(Exception):
    """Base class for all package errors."""


class ConfigError(TgfemError):
    """Invalid configuration or parameter set."""


class MeshError(TgfemError):
    """Invalid mesh input or a failed mesh operation."""


class SolverError(TgfemError):
    """An iterative solver failed to converge."""


class MaxPrincipleError(TgfemError):
    """A computed pressure violated the discrete maximum principle."""
