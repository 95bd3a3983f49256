"""Exception hierarchy shared by all shellmatch modules."""


class ShellMatchError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""

    exit_code = 3


class InputError(ShellMatchError):
    """Bad user input: malformed files, inconsistent arguments."""

    exit_code = 2


class ParseError(InputError):
    pass


class EmptyMesh(InputError):
    pass


class NonTriangleFace(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NonFiniteValue(InputError):
    pass


class KTooLarge(InputError):
    pass


class InvalidRange(InputError):
    pass


class TemplateMismatch(InputError):
    pass


class ConfigError(InputError):
    pass


class DegenerateGeometry(ShellMatchError):
    pass


class SolverFailure(ShellMatchError):
    pass


class DegenerateSpectrum(ShellMatchError):
    pass


class NonFiniteEnergy(SolverFailure):
    pass


class AllSurrogatesFailed(ShellMatchError):
    pass


class DisconnectedTarget(ShellMatchError):
    pass
