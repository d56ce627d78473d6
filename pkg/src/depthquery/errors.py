"""Exception types raised across the package."""


class DepthQueryError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DepthQueryError, ValueError):
    pass


class DepthOutOfRange(DepthQueryError, ValueError):
    pass


class BehindCamera(DepthQueryError, ValueError):
    pass


class InvalidCamera(DepthQueryError, ValueError):
    pass


class InvalidPose(DepthQueryError, ValueError):
    pass


class OutOfFrame(DepthQueryError, ValueError):
    pass


class DegenerateBox(DepthQueryError, ValueError):
    pass


class InfeasibleShape(DepthQueryError, ValueError):
    pass


class PlacementFailure(DepthQueryError, RuntimeError):
    pass


class ConfigError(DepthQueryError, ValueError):
    """Malformed or inconsistent configuration; message names the offending key."""


class SchemaVersionError(DepthQueryError, ValueError):
    pass


class InvariantViolation(DepthQueryError, AssertionError):
    pass
