"""Segment-level pseudo-labels via Gaussian hypothesis testing.

Each participant fits a 1-D Gaussian over z = ||f||_2 of its pseudo-normal
segments (mean gamma, variance theta). The server pools one component per
participant, weighted by normal-segment counts, into a mixture whose density
scores how "normal" a segment magnitude looks. Labels are then produced by a
window scan:

  Generate: for each pseudo-anomalous video, the length-ceil(beta*m) window
            with the lowest average density is labeled 1, the rest 0.
  Update:   the window with the highest average model confidence either
            intersects the current labels (keep exactly the intersection) or
            does not (union: a second anomalous region was found).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .dataset import DatasetManifest, VideoRecord
from .errors import NoNullModelError, ProtocolError, UnknownVideoError, ValidationError
from .stats import segment_magnitudes
from .vpl import VideoLabelSet

log = logging.getLogger(__name__)

THETA_FLOOR = 1e-9

# Wire layout of one participant's null-model payload: gamma f64 | theta f64
# | m0 u64, little-endian. Counted by the comms ledger.
GAUSSIAN_PAYLOAD_BYTES = 24


@dataclass(frozen=True)
class NullGaussian:
    """Gaussian over segment magnitudes of pseudo-normal segments."""

    gamma: float
    theta: float
    m0: int


@dataclass(frozen=True)
class ServerMixture:
    """Pooled per-participant null Gaussians; weights sum to 1."""

    gammas: np.ndarray
    thetas: np.ndarray
    weights: np.ndarray

    @property
    def num_components(self) -> int:
        return len(self.weights)


@dataclass
class SegmentLabelSet:
    """Map video_id -> per-segment 0/1 pseudo-labels."""

    labels: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "SegmentLabelSet":
        return SegmentLabelSet(labels={k: v.copy() for k, v in self.labels.items()})


@dataclass
class ConfidenceScores:
    """Map video_id -> per-segment detector scores in [0, 1]."""

    scores: Dict[str, np.ndarray] = field(default_factory=dict)


def fit_null_gaussian(manifest: DatasetManifest, labels: VideoLabelSet) -> NullGaussian:
    """Fit (gamma, theta) over all segments of videos pseudo-labeled normal.

    gamma is the plain mean of z; theta the variance with divisor (m0 - 1),
    floored at 1e-9. Needs at least two pseudo-normal segments.
    """
    zs = []
    for v in manifest.videos:
        if labels.get(v.video_id) == 0:
            zs.append(segment_magnitudes(v.features))
    if not zs:
        raise NoNullModelError("no pseudo-normal videos: cannot fit null Gaussian")
    z = np.concatenate(zs)
    m0 = int(z.size)
    if m0 < 2:
        raise NoNullModelError(f"need >= 2 pseudo-normal segments, got {m0}")
    gamma = float(z.mean())
    theta = float(((z - gamma) ** 2).sum() / (m0 - 1))
    theta = max(theta, THETA_FLOOR)
    return NullGaussian(gamma=gamma, theta=theta, m0=m0)


def build_mixture(parts: Iterable[NullGaussian]) -> ServerMixture:
    """One component per participant, weighted by its normal-segment count."""
    parts = list(parts)
    if not parts:
        raise ProtocolError("cannot build mixture from zero components")
    m0 = np.array([p.m0 for p in parts], dtype=np.float64)
    return ServerMixture(
        gammas=np.array([p.gamma for p in parts]),
        thetas=np.array([p.theta for p in parts]),
        weights=m0 / m0.sum(),
    )


def mixture_density(mix: ServerMixture, z) -> np.ndarray:
    """Mixture density sum_k w_k * N(z; gamma_k, theta_k); z scalar or array."""
    z = np.asarray(z, dtype=np.float64)
    zz = z[..., None]
    comp = np.exp(-0.5 * (zz - mix.gammas) ** 2 / mix.thetas) / np.sqrt(
        2.0 * np.pi * mix.thetas
    )
    out = comp @ mix.weights
    return out if out.ndim else float(out)


def _window_length(beta: float, m: int) -> int:
    if not 0.0 < beta <= 1.0:
        raise ValidationError(f"beta must be in (0, 1], got {beta}")
    return math.ceil(beta * m)


def _window_means(values: np.ndarray, w: int) -> np.ndarray:
    # One mean per start offset l in [0, m-w]; first index wins ties.
    windows = np.lib.stride_tricks.sliding_window_view(values, w)
    return windows.sum(axis=1) / w


def spl_generate(
    video: VideoRecord, yhat: int, mix: ServerMixture, beta: float
) -> np.ndarray:
    """Mode I: label the lowest-average-density window of a pseudo-anomalous
    video as anomalous; pseudo-normal videos get all zeros."""
    m = video.num_segments
    if yhat == 0:
        return np.zeros(m, dtype=np.int8)
    w = _window_length(beta, m)
    p = mixture_density(mix, segment_magnitudes(video.features))
    l_star = int(np.argmin(_window_means(p, w)))
    out = np.zeros(m, dtype=np.int8)
    out[l_star:l_star + w] = 1
    return out


def spl_update(old: np.ndarray, scores: np.ndarray, beta: float) -> np.ndarray:
    """Mode II: reconcile current labels with the maximum-confidence window.

    Overlapping windows keep exactly the intersection; disjoint windows are
    treated as a newly found anomalous region and unioned in.
    """
    old = np.asarray(old)
    q = np.asarray(scores, dtype=np.float64)
    if old.shape != q.shape:
        raise ValidationError("label/score length mismatch")
    m = old.size
    w = _window_length(beta, m)
    l_star = int(np.argmax(_window_means(q, w)))
    q_tilde = np.zeros(m, dtype=np.int8)
    q_tilde[l_star:l_star + w] = 1
    inter = (old != 0) & (q_tilde != 0)
    if inter.any():
        return inter.astype(np.int8)
    return ((old != 0) | (q_tilde != 0)).astype(np.int8)


def generate_all(
    manifest: DatasetManifest,
    vlabels: VideoLabelSet,
    mix: ServerMixture,
    beta: float,
) -> SegmentLabelSet:
    """Run Mode I over every video of a manifest."""
    return SegmentLabelSet(
        labels={
            v.video_id: spl_generate(v, vlabels.get(v.video_id), mix, beta)
            for v in manifest.videos
        }
    )


def correct_with_weak_labels(
    seg_labels: SegmentLabelSet,
    vlabels: VideoLabelSet,
    weak: Dict[str, int],
    manifest: DatasetManifest,
    mix: ServerMixture,
    beta: float,
) -> Tuple[SegmentLabelSet, VideoLabelSet]:
    """Overwrite pseudo-labels with weak video-level ground truth where given.

    Weakly-normal videos are cleared; weakly-anomalous videos keep a nonzero
    window or get one regenerated via Mode I.
    """
    seg_out = seg_labels.copy()
    vid_out = vlabels.copy()
    for video_id, w in weak.items():
        if video_id not in vid_out.labels:
            raise UnknownVideoError(f"weak label for unknown video {video_id!r}")
        if w == 0:
            vid_out.labels[video_id] = 0
            seg_out.labels[video_id] = np.zeros_like(seg_out.labels[video_id])
        elif w == 1:
            vid_out.labels[video_id] = 1
            if not seg_out.labels[video_id].any():
                seg_out.labels[video_id] = spl_generate(
                    manifest.get(video_id), 1, mix, beta
                )
        else:
            raise ValidationError(f"weak label for {video_id!r} must be 0/1")
    return seg_out, vid_out
