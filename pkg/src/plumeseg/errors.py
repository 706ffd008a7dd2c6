"""Exception hierarchy shared across the package and mapped to CLI exit codes."""


class PlumesegError(Exception):
    """Base class for errors raised by plumeseg."""


class ConfigError(PlumesegError):
    """Invalid run configuration (bad value, unknown key, unsatisfiable constraint)."""


class DataError(PlumesegError):
    """Dataset layout or content problem (missing files, shape mismatch, empty set)."""


class NumericalError(PlumesegError):
    """Non-finite values encountered during optimization."""
