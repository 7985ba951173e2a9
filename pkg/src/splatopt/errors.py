"""Exception hierarchy shared across the package."""


class SplatoptError(Exception):
    """Base class for all package-specific errors."""


class InvalidIntrinsicsError(SplatoptError):
    """Intrinsic matrix is singular or has non-positive focal lengths."""


class InvalidPoseError(SplatoptError):
    """Rotation is not orthonormal with determinant +1."""


class BehindCameraError(SplatoptError):
    """Point projects behind the camera or closer than the near plane."""


class DegenerateRayError(SplatoptError):
    """Ray direction is undefined (endpoint coincides with the camera center)."""


class GimbalDegenerateError(SplatoptError):
    """Orbit elevation of +/-90 degrees leaves the up vector undefined."""


class EmptyCloudError(SplatoptError):
    """An operation produced or received a cloud with zero Gaussians."""


class SplatParseError(SplatoptError):
    """Malformed splat or PLY file; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GuidanceUnavailableError(SplatoptError):
    """Remote guidance endpoint unreachable after the retry budget."""


class ProtocolError(SplatoptError):
    """Guidance-service response violates the wire protocol."""


class UnsupportedOperationError(SplatoptError):
    """Operation requires a capability the chosen backend lacks."""


class ConfigError(SplatoptError):
    """Run configuration failed validation; names the offending key path."""


class NumericalError(SplatoptError):
    """NaN or Inf detected where finite values are required."""
