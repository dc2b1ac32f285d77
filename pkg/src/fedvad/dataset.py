"""Feature-level dataset handling: manifest format, loading, synthesis.

On-disk layout (one directory per split):

    manifest.tsv   header ``#fedvad-manifest v1 d=<dim>`` followed by one
                   record per line:
                   ``video_id<TAB>feature_path<TAB>m<TAB>r<TAB>event<TAB>scene<TAB>weak<TAB>gt_path``
                   with ``-`` for absent optionals.
    <id>.f32       m*d little-endian float32, row-major, no header.
    <id>.gt        m*r bytes, one 0/1 byte per frame.

Paths inside a manifest are resolved relative to the manifest's directory.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import (
    FeatureDimensionError,
    GroundTruthLengthError,
    ManifestError,
    ManifestNotFoundError,
    NonFiniteFeatureError,
    UnknownVideoError,
    ValidationError,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
_HEADER_PREFIX = "#fedvad-manifest v1 d="


@dataclass
class VideoRecord:
    """One video's segment features plus benchmark metadata.

    ``features`` is an (m, d) float32 array, one row per non-overlapping
    segment of ``frames_per_segment`` frames. ``gt_frame_labels`` (evaluation
    only) has exactly m * frames_per_segment 0/1 entries when present.
    """

    video_id: str
    features: np.ndarray
    frames_per_segment: int
    event_class: Optional[str] = None
    scene_class: Optional[str] = None
    weak_label: Optional[int] = None
    gt_frame_labels: Optional[np.ndarray] = None

    @property
    def num_segments(self) -> int:
        return int(self.features.shape[0])

    def validate(self, feature_dim: int) -> None:
        if self.features.ndim != 2 or self.features.shape[1] != feature_dim:
            raise FeatureDimensionError(
                f"video {self.video_id!r}: features shape {self.features.shape} "
                f"does not match dim {feature_dim}"
            )
        if self.features.shape[0] < 1:
            raise ManifestError(f"video {self.video_id!r}: no segments")
        if not np.isfinite(self.features).all():
            raise NonFiniteFeatureError(
                f"video {self.video_id!r}: non-finite feature entries"
            )
        if self.frames_per_segment < 1:
            raise ManifestError(
                f"video {self.video_id!r}: frames_per_segment must be positive"
            )
        if self.weak_label is not None and self.weak_label not in (0, 1):
            raise ManifestError(f"video {self.video_id!r}: weak label not 0/1")
        if self.gt_frame_labels is not None:
            expect = self.num_segments * self.frames_per_segment
            if len(self.gt_frame_labels) != expect:
                raise GroundTruthLengthError(
                    f"video {self.video_id!r}: gt length "
                    f"{len(self.gt_frame_labels)} != m*r = {expect}"
                )
            if not np.isin(self.gt_frame_labels, (0, 1)).all():
                raise ManifestError(
                    f"video {self.video_id!r}: gt labels must be 0/1"
                )


@dataclass
class DatasetManifest:
    """A validated collection of videos sharing one feature dimension."""

    videos: List[VideoRecord]
    feature_dim: int
    split_role: str = "train"
    _by_id: Dict[str, VideoRecord] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = [v.video_id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate video_ids in manifest")
        for v in self.videos:
            v.validate(self.feature_dim)
        self._by_id = {v.video_id: v for v in self.videos}

    @property
    def num_videos(self) -> int:
        return len(self.videos)

    def video_ids(self) -> List[str]:
        return [v.video_id for v in self.videos]

    def get(self, video_id: str) -> VideoRecord:
        try:
            return self._by_id[video_id]
        except KeyError:
            raise UnknownVideoError(f"unknown video_id {video_id!r}") from None


@dataclass
class SyntheticSpec:
    """Parameters of the desk-scale synthetic benchmark generator.

    Normal segments are i.i.d. Gaussian noise with per-dimension scale
    ``base_scale``; each anomalous video carries one contiguous window of
    ``ceil(anomaly_window_fraction * m)`` segments whose vectors are scaled so
    the expected segment norm rises by ``magnitude_shift`` base-scale units.
    The companion test split holds one quarter of ``num_videos``.
    """

    num_videos: int
    anomaly_fraction: float
    feature_dim: int
    segments_range: Tuple[int, int] = (40, 48)
    anomaly_window_fraction: float = 0.2
    magnitude_shift: float = 3.0
    num_event_classes: int = 5
    num_scene_classes: int = 4
    frames_per_segment: int = 16
    base_scale: float = 0.1
    direction_jitter: float = 0.65
    seed: int = 0

    def validate(self) -> None:
        if self.num_videos < 1:
            raise ValidationError("num_videos must be >= 1")
        if not 0.0 < self.anomaly_fraction < 1.0:
            raise ValidationError("anomaly_fraction must be in (0,1)")
        if self.anomaly_fraction * self.num_videos < 1.0:
            raise ValidationError("anomaly_fraction*num_videos must be >= 1")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.segments_range[0] < 3 or self.segments_range[1] < self.segments_range[0]:
            raise ValidationError("segments_range min must be >= 3 and <= max")
        if not 0.0 < self.anomaly_window_fraction < 1.0:
            raise ValidationError("anomaly_window_fraction must be in (0,1)")
        if self.num_event_classes < 1 or self.num_scene_classes < 1:
            raise ValidationError("class counts must be >= 1")
        if self.frames_per_segment < 1:
            raise ValidationError("frames_per_segment must be >= 1")
        if self.base_scale <= 0:
            raise ValidationError("base_scale must be > 0")
        if not 0.0 <= self.direction_jitter <= 1.0:
            raise ValidationError("direction_jitter must be in [0, 1]")


def load_manifest(path, split_role: str = "train") -> DatasetManifest:
    """Load and validate a manifest file (see module docstring for format)."""
    path = Path(path)
    if not path.exists():
        raise ManifestNotFoundError(f"manifest not found: {path}")
    base = path.parent
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ManifestError(f"{path}: missing '{_HEADER_PREFIX}<dim>' header")
    try:
        feature_dim = int(lines[0][len(_HEADER_PREFIX):])
    except ValueError:
        raise ManifestError(f"{path}: bad feature dim in header") from None

    videos = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 8:
            raise ManifestError(f"{path}:{lineno}: expected 8 fields, got {len(fields)}")
        vid, feat_path, m_s, r_s, event, scene, weak_s, gt_path = fields
        try:
            m, r = int(m_s), int(r_s)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: m and r must be integers") from None
        features = _read_features(base / feat_path, vid, m, feature_dim)
        gt = None
        if gt_path != "-":
            gt = _read_gt(base / gt_path, vid, m, r)
        videos.append(
            VideoRecord(
                video_id=vid,
                features=features,
                frames_per_segment=r,
                event_class=None if event == "-" else event,
                scene_class=None if scene == "-" else scene,
                weak_label=None if weak_s == "-" else int(weak_s),
                gt_frame_labels=gt,
            )
        )
    return DatasetManifest(videos=videos, feature_dim=feature_dim, split_role=split_role)


def _read_features(path: Path, vid: str, m: int, d: int) -> np.ndarray:
    if not path.exists():
        raise ManifestNotFoundError(f"feature file for {vid!r} not found: {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != m * d:
        raise FeatureDimensionError(
            f"video {vid!r}: feature file holds {raw.size} floats, "
            f"expected m*d = {m}*{d} = {m * d}"
        )
    feats = raw.reshape(m, d)
    if not np.isfinite(feats).all():
        raise NonFiniteFeatureError(f"video {vid!r}: non-finite feature entries")
    return feats


def _read_gt(path: Path, vid: str, m: int, r: int) -> np.ndarray:
    if not path.exists():
        raise ManifestNotFoundError(f"gt file for {vid!r} not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != m * r:
        raise GroundTruthLengthError(
            f"video {vid!r}: gt file holds {raw.size} bytes, expected m*r = {m * r}"
        )
    if not np.isin(raw, (0, 1)).all():
        raise ManifestError(f"video {vid!r}: gt bytes must be 0 or 1")
    return raw


def save_manifest(manifest: DatasetManifest, out_dir) -> Path:
    """Write manifest + payload files under ``out_dir``; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in manifest.videos:
        feat_name = f"{v.video_id}.f32"
        v.features.astype("<f4").tofile(out_dir / feat_name)
        gt_name = "-"
        if v.gt_frame_labels is not None:
            gt_name = f"{v.video_id}.gt"
            np.asarray(v.gt_frame_labels, dtype=np.uint8).tofile(out_dir / gt_name)
        rows.append(
            "\t".join(
                [
                    v.video_id,
                    feat_name,
                    str(v.num_segments),
                    str(v.frames_per_segment),
                    v.event_class or "-",
                    v.scene_class or "-",
                    "-" if v.weak_label is None else str(v.weak_label),
                    gt_name,
                ]
            )
        )
    path = out_dir / MANIFEST_NAME
    path.write_text(_HEADER_PREFIX + str(manifest.feature_dim) + "\n" + "\n".join(rows) + "\n")
    return path


def _chi_mean(d: int) -> float:
    # E ||N(0, I_d)||_2 = sqrt(2) * Gamma((d+1)/2) / Gamma(d/2)
    return float(np.exp(0.5 * math.log(2.0) + gammaln((d + 1) / 2) - gammaln(d / 2)))


def anomaly_offset_magnitude(spec: SyntheticSpec) -> float:
    """Length of the offset added to in-window vectors so the expected
    segment norm rises by ``magnitude_shift`` base-scale units:
    sqrt((mu + shift)^2 - mu^2) * base_scale for mu = E||N(0, I_d)||."""
    mu = _chi_mean(spec.feature_dim)
    s = spec.magnitude_shift
    return spec.base_scale * math.sqrt(2.0 * mu * s + s * s)


def synthesize_dataset(spec: SyntheticSpec) -> Tuple[DatasetManifest, DatasetManifest]:
    """Generate (train, test) manifests; deterministic given ``spec.seed``.

    Anomalous windows are shifted along a per-video unit direction that mixes
    one dataset-wide direction with video-specific jitter (anomalies share
    feature-space structure only partially); the offset length elevates the
    expected segment magnitude by ``magnitude_shift`` base-scale units.
    Train and test share the dataset-wide direction.
    """
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    shared = rng.standard_normal(spec.feature_dim)
    shared /= np.linalg.norm(shared)
    n_test = max(2, int(round(spec.num_videos / 4)))
    train = _synthesize_split(spec, rng, shared, spec.num_videos, "train", "tr")
    test = _synthesize_split(spec, rng, shared, n_test, "test", "te")
    return train, test


def _synthesize_split(spec, rng, shared, n_videos, role, prefix) -> DatasetManifest:
    n_anom = max(1, int(round(spec.anomaly_fraction * n_videos)))
    if n_anom >= n_videos:
        raise ValidationError("anomaly_fraction leaves no normal videos")
    anom_ids = set(rng.permutation(n_videos)[:n_anom].tolist())
    c = anomaly_offset_magnitude(spec)
    kappa = spec.direction_jitter
    lo, hi = spec.segments_range
    r = spec.frames_per_segment
    videos = []
    for i in range(n_videos):
        m = int(rng.integers(lo, hi + 1))
        feats = rng.standard_normal((m, spec.feature_dim)) * spec.base_scale
        seg_gt = np.zeros(m, dtype=np.uint8)
        if i in anom_ids:
            w = math.ceil(spec.anomaly_window_fraction * m)
            w = min(w, m - 1)  # keep at least one normal segment
            start = int(rng.integers(0, m - w + 1))
            own = rng.standard_normal(spec.feature_dim)
            own /= np.linalg.norm(own)
            direction = (1.0 - kappa) * shared + kappa * own
            direction /= np.linalg.norm(direction)
            feats[start:start + w] += c * direction
            seg_gt[start:start + w] = 1
        videos.append(
            VideoRecord(
                video_id=f"{prefix}{i:04d}",
                features=feats.astype(np.float32),
                frames_per_segment=r,
                event_class=f"event{i % spec.num_event_classes}",
                scene_class=f"scene{i % spec.num_scene_classes}",
                weak_label=None,
                gt_frame_labels=np.repeat(seg_gt, r),
            )
        )
    return DatasetManifest(videos=videos, feature_dim=spec.feature_dim, split_role=role)


def segment_gt(record: VideoRecord) -> np.ndarray:
    """Per-segment 0/1 ground truth: a segment is anomalous when any of its
    frames is (evaluation/benchmark metadata only)."""
    if record.gt_frame_labels is None:
        raise ValidationError(f"video {record.video_id!r} has no gt_frame_labels")
    per_seg = np.asarray(record.gt_frame_labels).reshape(
        record.num_segments, record.frames_per_segment
    )
    return (per_seg.max(axis=1) > 0).astype(np.int8)


def video_anomaly_tag(record: VideoRecord) -> int:
    """Benchmark-construction tag: weak label when present, else any-frame GT,
    else normal. Never consumed by the training path."""
    if record.weak_label is not None:
        return int(record.weak_label)
    if record.gt_frame_labels is not None:
        return int(np.asarray(record.gt_frame_labels).max() > 0)
    return 0
