"""
Exceptions raised across the design pipeline.

Every value-type failure derives from PipelineError, which is a ValueError,
so callers that only know about ValueError keep working.
"""

from typing import List, Optional, Sequence


def _rebuild(cls, message: str, state: dict):
    error = cls.__new__(cls)
    Exception.__init__(error, message)
    error.__dict__.update(state)
    return error


class PipelineError(ValueError):
    """Base class for pipeline failures caused by bad values or inputs"""

    # subclasses take structured arguments, so pickle by message and attributes
    def __reduce__(self):
        return _rebuild, (self.__class__, str(self), dict(self.__dict__))


class ConfigError(PipelineError):
    pass


class DegenerateScale(PipelineError):
    """Raised when a normalization scale is (numerically) zero"""

    def __init__(self, distance: float):
        super().__init__(f"Reference distance {distance:.3e} is too small to normalize by")
        self.distance = distance


class CapacityExceeded(PipelineError):
    def __init__(self, group: str, count: int, capacity: int):
        super().__init__(f"Group {group} has {count} joints but only {capacity} slots")
        self.group = group
        self.count = count
        self.capacity = capacity


class ConfigMismatch(PipelineError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"Expected {expected} joint angles, got {got}")
        self.expected = expected
        self.got = got


class ParseError(PipelineError):
    def __init__(self, message: str, line: Optional[int] = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class ChannelMismatch(PipelineError):
    def __init__(self, frame_index: int, expected: int, got: int):
        super().__init__(f"Frame {frame_index} has {got} values, skeleton declares {expected} channels")
        self.frame_index = frame_index
        self.expected = expected
        self.got = got


class MissingJoi(PipelineError):
    def __init__(self, markers: Sequence[str]):
        self.markers: List[str] = list(markers)
        super().__init__(f"Unresolved joints of interest: {', '.join(self.markers)}")


class DegenerateGeometry(PipelineError):
    pass


class DimensionMismatch(PipelineError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"Expected dimension {expected}, got {got}")
        self.expected = expected
        self.got = got


class ZeroJacobian(PipelineError):
    pass


class NonFiniteLoss(PipelineError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"Loss became non-finite ({value}) at epoch {epoch}")
        self.epoch = epoch
        self.value = value


class KTooLarge(PipelineError):
    def __init__(self, k: int, n_points: int):
        super().__init__(f"k={k} exceeds the number of points ({n_points})")
        self.k = k
        self.n_points = n_points


class SchemaError(PipelineError):
    def __init__(self, record: str, field: str, message: str = "invalid value"):
        super().__init__(f"Record '{record}', field '{field}': {message}")
        self.record = record
        self.field = field


class ObjectiveFailure(PipelineError):
    """Wraps an exception raised by a black-box objective together with the point"""

    def __init__(self, point, cause: Exception):
        super().__init__(f"Objective failed at {list(point)}: {cause}")
        self.point = point
        self.cause = cause


class ExportError(IOError):
    pass
