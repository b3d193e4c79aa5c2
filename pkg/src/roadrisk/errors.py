"""Exception hierarchy shared by every roadrisk module."""


class RoadRiskError(Exception):
    """Base class for all errors raised by roadrisk."""


class InputError(RoadRiskError, ValueError):
    """Bad user input: malformed records, files or arguments (CLI exit code 2)."""


class GraphError(InputError):
    pass


class DuplicateNodeId(GraphError):
    pass


class UnknownEndpoint(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class InvalidRecord(GraphError):
    pass


class IndexOutOfRange(RoadRiskError, IndexError):
    pass


class EmptyGraph(InputError):
    pass


class DegeneratePoint(InputError):
    pass


class OutOfRangeAngle(InputError):
    pass


class BadRatios(InputError):
    pass


class BadSpec(InputError):
    pass


class CsvFormatError(InputError):
    pass


class ContainerError(InputError):
    pass


class IoError(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class CorruptFile(ContainerError):
    pass


class ShapeMismatch(RoadRiskError, ValueError):
    pass


class NumericError(RoadRiskError, ArithmeticError):
    """Non-finite value produced or consumed by the numeric kernel (CLI exit code 3)."""


class UndefinedAuc(RoadRiskError, ValueError):
    pass
