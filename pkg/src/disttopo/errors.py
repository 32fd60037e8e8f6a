"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit code 2, ``DataError`` to 3 and anything
else to 4.
"""


class DistTopoError(Exception):
    """Base class for every error raised by the package."""

    stage = None

    def with_stage(self, stage):
        self.stage = stage
        return self

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(DistTopoError):
    pass


class InvalidConfig(ConfigError):
    def __init__(self, field, reason):
        super().__init__(f"invalid config field {field!r}: {reason}")
        self.field = field


class DataError(DistTopoError):
    pass


# geometry
class GeometryError(DataError):
    pass


class DegenerateProjection(GeometryError):
    pass


class RayParallelToGround(GeometryError):
    pass


class PointBehindCamera(GeometryError):
    pass


class NonPositiveHeight(GeometryError):
    pass


# ingestion
class ParseError(DataError):
    def __init__(self, path, line, reason):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


class NonMonotonicTimestamps(DataError):
    def __init__(self, cam, pid):
        super().__init__(f"tracklet cam={cam} pid={pid} has non-increasing timestamps")
        self.tracklet = (cam, pid)


class MissingArtifact(DataError):
    pass


# estimation
class NoValidFrames(DataError):
    pass


class NoValidPairs(DataError):
    pass


class EmptyEstimates(DataError):
    pass


class TooFewFrames(DataError):
    pass


class ZeroDuration(DataError):
    pass


class NoReliablePairs(DataError):
    pass


class EmptyTracklet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ZeroSpeed(DataError):
    pass
