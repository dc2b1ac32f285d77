"""Frame-level evaluation: score expansion and rank-based AUC."""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.stats import rankdata

from . import detector
from .dataset import DatasetManifest
from .errors import UndefinedMetricError, ValidationError


@dataclass
class FrameScoreTrack:
    """Per-frame anomaly scores for one video; every frame of a segment
    inherits that segment's score."""

    video_id: str
    frame_scores: np.ndarray


@dataclass
class EvalResult:
    auc: float
    num_pos: int
    num_neg: int
    tracks: Optional[List[FrameScoreTrack]] = None


def expand_scores(segment_scores: np.ndarray, r: int) -> np.ndarray:
    """Repeat each segment score across its r frames."""
    if r < 1:
        raise ValidationError("frames per segment must be >= 1")
    scores = np.asarray(segment_scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size < 1:
        raise ValidationError("segment scores must be a non-empty 1-D sequence")
    return np.repeat(scores, r)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for score ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and equal length")
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined: {pos} positive / {neg} negative frames"
        )
    ranks = rankdata(scores, method="average")
    return float((ranks[labels == 1].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def score_manifest(params: np.ndarray, manifest: DatasetManifest) -> Dict[str, np.ndarray]:
    """Eval-mode segment scores per video."""
    return {
        v.video_id: detector.forward(params, v.features, train_mode=False)
        for v in manifest.videos
    }


def evaluate_model(
    params: np.ndarray, test: DatasetManifest, dump_tracks: bool = False
) -> EvalResult:
    """Frame-level AUC of a model over a test manifest (micro-averaged over
    the concatenation of all test videos)."""
    all_scores = []
    all_labels = []
    tracks = [] if dump_tracks else None
    for v in test.videos:
        if v.gt_frame_labels is None:
            raise ValidationError(
                f"test video {v.video_id!r} has no gt_frame_labels"
            )
        seg_scores = detector.forward(params, v.features, train_mode=False)
        frames = expand_scores(seg_scores, v.frames_per_segment)
        all_scores.append(frames)
        all_labels.append(np.asarray(v.gt_frame_labels))
        if dump_tracks:
            tracks.append(FrameScoreTrack(video_id=v.video_id, frame_scores=frames))
    scores = np.concatenate(all_scores)
    labels = np.concatenate(all_labels)
    return EvalResult(
        auc=roc_auc(scores, labels),
        num_pos=int((labels == 1).sum()),
        num_neg=int((labels == 0).sum()),
        tracks=tracks,
    )
