"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class GraspkitError(Exception):
    exit_code = 1


class ParseError(GraspkitError):
    exit_code = 10


class LabelError(GraspkitError):
    exit_code = 11


class DegenerateMesh(GraspkitError):
    exit_code = 12


class DegenerateVolume(GraspkitError):
    exit_code = 13


class UnassignedPart(GraspkitError):
    exit_code = 14


class SolverFailure(GraspkitError):
    exit_code = 15


class NoPositiveGrasps(GraspkitError):
    exit_code = 16


class EmptyInstance(GraspkitError):
    exit_code = 17


class ShapeMismatch(GraspkitError, ValueError):
    exit_code = 18


# the bridge module calls the same condition ShapeError
ShapeError = ShapeMismatch


class DegenerateLabels(GraspkitError, ValueError):
    exit_code = 19


class DomainError(GraspkitError, ValueError):
    exit_code = 20


class Divergence(GraspkitError):
    exit_code = 21


class SchemaVersionMismatch(GraspkitError):
    exit_code = 22


class RecordIOError(GraspkitError, OSError):
    exit_code = 23


class VerificationFailure(GraspkitError):
    exit_code = 24


class ConfigError(GraspkitError):
    exit_code = 2


class UsageError(GraspkitError):
    exit_code = 2


class EmptyPairSet(UserWarning):
    """A pair set was empty; the corresponding loss term is taken as 0."""
