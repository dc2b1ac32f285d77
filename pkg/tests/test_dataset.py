import numpy as np
import pytest

from fedvad.dataset import (
    DatasetManifest,
    SyntheticSpec,
    VideoRecord,
    load_manifest,
    save_manifest,
    segment_gt,
    synthesize_dataset,
    video_anomaly_tag,
)
from fedvad.errors import (
    FeatureDimensionError,
    GroundTruthLengthError,
    ManifestError,
    ManifestNotFoundError,
    NonFiniteFeatureError,
    ValidationError,
)


def _record(vid="v0", m=4, d=3, r=2, gt=True):
    feats = np.arange(m * d, dtype=np.float32).reshape(m, d)
    labels = np.zeros(m * r, dtype=np.uint8) if gt else None
    return VideoRecord(
        video_id=vid, features=feats, frames_per_segment=r, gt_frame_labels=labels
    )


def test_load_well_formed_manifest(tmp_path):
    manifest = DatasetManifest(
        videos=[_record("a"), _record("b")], feature_dim=3, split_role="train"
    )
    path = save_manifest(manifest, tmp_path)
    loaded = load_manifest(path)
    assert loaded.num_videos == 2
    assert loaded.feature_dim == 3


def test_roundtrip_field_by_field(tmp_path):
    spec = SyntheticSpec(num_videos=12, anomaly_fraction=0.25, feature_dim=5, seed=3)
    train, _ = synthesize_dataset(spec)
    train.videos[0].weak_label = 1
    path = save_manifest(train, tmp_path)
    loaded = load_manifest(path)
    assert loaded.feature_dim == train.feature_dim
    for a, b in zip(train.videos, loaded.videos):
        assert a.video_id == b.video_id
        assert a.frames_per_segment == b.frames_per_segment
        assert a.event_class == b.event_class
        assert a.scene_class == b.scene_class
        assert a.weak_label == b.weak_label
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.gt_frame_labels, b.gt_frame_labels)


def test_missing_manifest_file(tmp_path):
    with pytest.raises(ManifestNotFoundError):
        load_manifest(tmp_path / "nope.tsv")


def test_feature_dimension_mismatch(tmp_path):
    manifest = DatasetManifest(videos=[_record()], feature_dim=3)
    path = save_manifest(manifest, tmp_path)
    # Rewrite the feature file one row short of the declared m*d.
    (tmp_path / "v0.f32").write_bytes(b"\x00" * (4 * 3 * 4 - 4))
    with pytest.raises(FeatureDimensionError):
        load_manifest(path)


def test_non_finite_entries(tmp_path):
    manifest = DatasetManifest(videos=[_record()], feature_dim=3)
    path = save_manifest(manifest, tmp_path)
    bad = np.full((4, 3), np.nan, dtype="<f4")
    bad.tofile(tmp_path / "v0.f32")
    with pytest.raises(NonFiniteFeatureError):
        load_manifest(path)


def test_gt_length_mismatch(tmp_path):
    manifest = DatasetManifest(videos=[_record()], feature_dim=3)
    path = save_manifest(manifest, tmp_path)
    (tmp_path / "v0.gt").write_bytes(b"\x00" * 5)  # expected 4*2 = 8
    with pytest.raises(GroundTruthLengthError):
        load_manifest(path)


def test_duplicate_video_ids_rejected():
    with pytest.raises(ManifestError):
        DatasetManifest(videos=[_record("a"), _record("a")], feature_dim=3)


def test_gt_invariant_checked_on_construction():
    rec = _record()
    rec.gt_frame_labels = np.zeros(3, dtype=np.uint8)
    with pytest.raises(GroundTruthLengthError):
        DatasetManifest(videos=[rec], feature_dim=3)


def test_synthesize_deterministic():
    spec = SyntheticSpec(num_videos=10, anomaly_fraction=0.2, feature_dim=4, seed=7)
    t1, e1 = synthesize_dataset(spec)
    t2, e2 = synthesize_dataset(spec)
    for a, b in zip(t1.videos + e1.videos, t2.videos + e2.videos):
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.gt_frame_labels, b.gt_frame_labels)
        assert a.video_id == b.video_id


def test_synthesize_anomaly_count_exact():
    spec = SyntheticSpec(num_videos=10, anomaly_fraction=0.2, feature_dim=4, seed=7)
    train, _ = synthesize_dataset(spec)
    n_anom = sum(video_anomaly_tag(v) for v in train.videos)
    assert n_anom == 2


def test_synthetic_anomaly_window_magnitude_oracle(tmp_path):
    """Oracle: recompute segment magnitudes from the emitted files and check
    the in-window mean L2 norm exceeds the out-of-window mean, per video."""
    spec = SyntheticSpec(num_videos=30, anomaly_fraction=0.2, feature_dim=24, seed=5)
    train, test = synthesize_dataset(spec)
    path = save_manifest(train, tmp_path)
    loaded = load_manifest(path)
    checked = 0
    for v in loaded.videos:
        seg = segment_gt(v)
        if not seg.any():
            continue
        z = np.linalg.norm(v.features.astype(np.float64), axis=1)
        assert z[seg == 1].mean() > z[seg == 0].mean()
        checked += 1
    assert checked == 6


def test_synthetic_anomalous_window_contiguous():
    spec = SyntheticSpec(num_videos=20, anomaly_fraction=0.2, feature_dim=8, seed=9)
    train, _ = synthesize_dataset(spec)
    for v in train.videos:
        seg = segment_gt(v)
        if seg.any():
            ones = np.flatnonzero(seg)
            assert ones[-1] - ones[0] + 1 == len(ones)  # one contiguous run
            expected = int(np.ceil(spec.anomaly_window_fraction * v.num_segments))
            assert len(ones) == min(expected, v.num_segments - 1)


def test_spec_validation_errors():
    with pytest.raises(ValidationError):
        SyntheticSpec(num_videos=10, anomaly_fraction=0.05, feature_dim=4).validate()
    with pytest.raises(ValidationError):
        SyntheticSpec(
            num_videos=10, anomaly_fraction=0.2, feature_dim=4, segments_range=(2, 5)
        ).validate()
    with pytest.raises(ValidationError):
        SyntheticSpec(num_videos=10, anomaly_fraction=0.2, feature_dim=0).validate()


def test_test_split_is_quarter_of_train():
    spec = SyntheticSpec(num_videos=200, anomaly_fraction=0.2, feature_dim=4, seed=1)
    train, test = synthesize_dataset(spec)
    assert train.num_videos == 200
    assert test.num_videos == 50
    assert all(v.gt_frame_labels is not None for v in test.videos)
