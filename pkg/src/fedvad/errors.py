"""Exception hierarchy shared by all fedvad modules.

Validation problems (bad inputs, malformed files) exit with code 1 from the
CLI; protocol/runtime failures exit with code 2.
"""


class FedvadError(Exception):
    """Base class for all fedvad errors."""

    exit_code = 2


class ValidationError(FedvadError):
    """Invalid user input: bad config values, malformed manifests, etc."""

    exit_code = 1


class ManifestError(ValidationError):
    """Manifest file cannot be parsed or violates its invariants."""


class ManifestNotFoundError(ManifestError):
    """Manifest path (or a referenced payload file) does not exist."""


class FeatureDimensionError(ManifestError):
    """A feature file does not match the declared (segments x dim) shape."""


class NonFiniteFeatureError(ManifestError):
    """A feature file contains NaN or infinite entries."""


class GroundTruthLengthError(ManifestError):
    """gt_frame_labels length differs from segments * frames_per_segment."""


class UnknownVideoError(ValidationError):
    """An operation referenced a video_id absent from the manifest."""


class InsufficientSegmentsError(ValidationError):
    """A per-video statistic needs more segments than the video has."""


class NoNullModelError(FedvadError):
    """No pseudo-normal segments available to fit the null Gaussian."""


class ProtocolError(FedvadError):
    """Federation protocol violation: empty mixture, layout mismatch, etc."""


class UndefinedMetricError(FedvadError):
    """Metric undefined for the given inputs (e.g. single-class AUC)."""
