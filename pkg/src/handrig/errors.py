"""Exception types raised across the toolkit.

Every error that a caller is expected to catch and handle has its own class
here; generic programming mistakes (wrong array shape passed to an internal
helper, etc.) raise ValueError as usual.
"""


class HandrigError(Exception):
    """Base class for all toolkit errors."""


# --- geometry ---

class PointBehindCamera(HandrigError):
    """Projection requested for a point at or behind the camera plane."""


class NonPositiveDepth(HandrigError):
    """Back-projection requires a strictly positive depth."""


class DegenerateBBox(HandrigError):
    """Bounding box with non-positive width or height."""


class SingularTransform(HandrigError):
    """Affine crop transform whose linear part is not invertible."""


# --- triangulation ---

class InsufficientViews(HandrigError):
    """Fewer than two usable observations."""


class DegenerateRays(HandrigError):
    """All observation ray pairs are closer than the minimum triangulation angle."""


class NoConsensus(HandrigError):
    """RANSAC found no model supported by at least two views."""


# --- heatmap ---

class NonPositiveSigma(HandrigError):
    """Gaussian rendering requires sigma > 0."""


class DegenerateMass(HandrigError):
    """Soft-argmax in normalized mode on a joint with (near-)zero total mass."""


# --- pose ---

class MissingDepth(HandrigError):
    """A hand is present but a root depth it needs was not provided."""


class DegeneratePose(HandrigError):
    """Palm plane undefined (plane-fit joints collinear)."""


class InvalidRoot(HandrigError):
    """Root joint marked invalid where a valid root is required."""


# --- objectives ---

class DimMismatch(HandrigError):
    """Predicted and ground-truth tensors disagree in shape."""


class EmptyBatch(HandrigError):
    """Metric over a batch with no qualifying contributions."""


class NoQualifyingFrames(HandrigError):
    """MRRPE over a batch with no frame where both roots qualify."""


class NoPositives(HandrigError):
    """Average precision undefined: a hand class has no positive label."""


# --- dataset_io ---

class ParseError(HandrigError):
    """Document is not well-formed; `location` names the offending path."""

    def __init__(self, location, message):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


class SchemaViolation(HandrigError):
    """Document parses but violates the schema; `field` names the culprit."""

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class IoError(HandrigError):
    """Filesystem failure while reading or writing a dataset."""


# --- annotation sessions / service ---

class UnknownFrame(HandrigError):
    """Frame reference not present in the dataset."""


class UnknownSession(HandrigError):
    """Session id not found in the session store."""


class UnknownView(HandrigError):
    """View id not part of the session's camera set."""


class UnknownJoint(HandrigError):
    """Joint id outside the 42-keypoint schema."""


class NothingToCommit(HandrigError):
    """Commit requested with zero triangulated joints."""


class StaleVersion(HandrigError):
    """Optimistic concurrency check failed: session changed since read."""


class InsufficientRig(HandrigError):
    """View sweep requested more views than the rig has."""
