"""Per-video statistical summaries: magnitude-difference spread and the
von Neumann entropy of the segment covariance.

For a video with segment features f_1..f_m (rows), with z_j = ||f_j||_2:

    mu    = 1/(m-1) * sum_{j=1}^{m-1} (z_j - z_{j+1})
    sigma = sqrt( 1/(m-2) * sum_{j=1}^{m-1} ((z_j - z_{j+1}) - mu)^2 )
    H     = -sum_s lambda_s * ln(lambda_s)

where lambda_s are the singular values of the sample covariance (divisor m-1,
mean-centered over segments) of the features, with 0*ln(0) := 0. No trace
normalization is applied, so H is not scale-free.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetManifest, VideoRecord
from .errors import InsufficientSegmentsError

log = logging.getLogger(__name__)

# Relative floor below which covariance singular values count as zero.
SV_FLOOR = 1e-12


@dataclass(frozen=True)
class VideoSummary:
    """The 2-D clustering statistic [sigma, H] for one video."""

    video_id: str
    sigma: float
    entropy: float

    @property
    def point(self) -> np.ndarray:
        return np.array([self.sigma, self.entropy], dtype=np.float64)


def segment_magnitudes(features: np.ndarray) -> np.ndarray:
    """L2 norm per segment, computed in float64."""
    return np.linalg.norm(np.asarray(features, dtype=np.float64), axis=1)


def magnitude_diff_stats(features: np.ndarray) -> tuple:
    """Mean and spread of consecutive-segment magnitude differences.

    Divisors are (m-1) for the mean and (m-2) for the variance. m must be at
    least 2; for m == 2 the spread is defined as 0 (the divisor vanishes).
    """
    m = features.shape[0]
    if m < 2:
        raise InsufficientSegmentsError(
            f"magnitude stats need m >= 2 segments, got {m}"
        )
    z = segment_magnitudes(features)
    diffs = z[:-1] - z[1:]
    mu = float(diffs.sum() / (m - 1))
    if m == 2:
        log.debug("m=2 video: sigma defined as 0 (variance divisor vanishes)")
        return mu, 0.0
    sigma = float(np.sqrt(((diffs - mu) ** 2).sum() / (m - 2)))
    return mu, sigma


def covariance_entropy(features: np.ndarray, route: str = "auto") -> float:
    """von Neumann entropy of the segment sample covariance.

    ``route`` selects how the spectrum is obtained:
      * ``"cov"``  - eigenvalues of the d x d covariance;
      * ``"gram"`` - eigenvalues of the m x m Gram matrix of centered rows
        divided by (m-1) (identical nonzero spectrum, cheaper when m < d);
      * ``"auto"`` - gram when m < d, else cov.

    m == 1 leaves the covariance undefined; returns 0 with a logged flag.
    """
    X = np.asarray(features, dtype=np.float64)
    m, d = X.shape
    if m == 1:
        log.warning("single-segment video: covariance undefined, entropy := 0")
        return 0.0
    centered = X - X.mean(axis=0)
    if route == "auto":
        route = "gram" if m < d else "cov"
    if route == "gram":
        mat = (centered @ centered.T) / (m - 1)
    elif route == "cov":
        mat = (centered.T @ centered) / (m - 1)
    else:
        raise ValueError(f"unknown route {route!r}")
    ev = np.linalg.eigvalsh(mat)
    ev = np.clip(ev, 0.0, None)
    top = ev.max() if ev.size else 0.0
    if top <= 0.0:
        return 0.0
    ev = ev[ev > SV_FLOOR * top]
    return float(-(ev * np.log(ev)).sum())


def summarize_video(record: VideoRecord) -> VideoSummary:
    """Compose [sigma, H] for one video."""
    _, sigma = magnitude_diff_stats(record.features)
    entropy = covariance_entropy(record.features)
    return VideoSummary(video_id=record.video_id, sigma=sigma, entropy=entropy)


def summarize_manifest(manifest: DatasetManifest) -> list:
    return [summarize_video(v) for v in manifest.videos]
