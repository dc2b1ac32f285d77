"""Benchmark participant partitions: random, event-based, scene-based.

Anomalous/normal tags used here come from benchmark metadata (weak labels or
ground truth) and exist only to construct the splits; the training path never
sees them.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .dataset import DatasetManifest, video_anomaly_tag
from .errors import ManifestError, ValidationError

log = logging.getLogger(__name__)

_SPLIT_HEADER = "#fedvad-split v1"


@dataclass
class SplitAssignment:
    """Map participant_id -> list of video_ids (a partition of the train set)."""

    assignment: Dict[int, List[str]]
    strategy: str
    seed: Optional[int] = None

    @property
    def num_participants(self) -> int:
        return len(self.assignment)

    def all_video_ids(self) -> List[str]:
        out = []
        for pid in sorted(self.assignment):
            out.extend(self.assignment[pid])
        return out


def split_random(manifest: DatasetManifest, k: int, seed: int) -> SplitAssignment:
    """Shuffle, then deal each class round-robin so per-participant counts
    differ by at most one per class."""
    if k < 1:
        raise ValidationError("participants must be >= 1")
    if k > manifest.num_videos:
        raise ValidationError(
            f"cannot split {manifest.num_videos} videos across {k} participants"
        )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    normal = [v.video_id for v in manifest.videos if video_anomaly_tag(v) == 0]
    anomalous = [v.video_id for v in manifest.videos if video_anomaly_tag(v) == 1]
    assignment = {pid: [] for pid in range(k)}
    for group in (normal, anomalous):
        order = [group[i] for i in rng.permutation(len(group))]
        for pid in range(k):
            assignment[pid].extend(order[pid::k])
    return SplitAssignment(assignment=assignment, strategy="random", seed=seed)


def split_by_event(manifest: DatasetManifest) -> SplitAssignment:
    """One participant per anomalous event class; normal videos are dealt
    round-robin across participants in descending class-size order."""
    by_class: Dict[str, List[str]] = {}
    normal = []
    for v in manifest.videos:
        if video_anomaly_tag(v) == 1:
            if v.event_class is None:
                raise ValidationError(
                    f"anomalous video {v.video_id!r} has no event_class"
                )
            by_class.setdefault(v.event_class, []).append(v.video_id)
        else:
            normal.append(v.video_id)
    if not by_class:
        raise ValidationError("no anomalous videos: event split undefined")
    classes = sorted(by_class, key=lambda c: (-len(by_class[c]), c))
    assignment = {pid: list(by_class[c]) for pid, c in enumerate(classes)}
    for i, vid in enumerate(normal):
        assignment[i % len(classes)].append(vid)
    return SplitAssignment(assignment=assignment, strategy="event")


def split_by_scene(manifest: DatasetManifest) -> SplitAssignment:
    """One participant per scene class; imbalance is expected and preserved."""
    by_scene: Dict[str, List[str]] = {}
    for v in manifest.videos:
        if v.scene_class is None:
            raise ValidationError(f"video {v.video_id!r} has no scene_class")
        by_scene.setdefault(v.scene_class, []).append(v.video_id)
    scenes = sorted(by_scene, key=lambda c: (-len(by_scene[c]), c))
    return SplitAssignment(
        assignment={pid: list(by_scene[c]) for pid, c in enumerate(scenes)},
        strategy="scene",
    )


def validate_partition(split: SplitAssignment, manifest: DatasetManifest) -> None:
    """Assert the split is a partition of the manifest's videos."""
    assigned = split.all_video_ids()
    if len(assigned) != len(set(assigned)):
        raise ValidationError("split assigns some video to multiple participants")
    if set(assigned) != set(manifest.video_ids()):
        raise ValidationError("split does not cover the manifest exactly")


def save_split(split: SplitAssignment, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    seed = "-" if split.seed is None else str(split.seed)
    lines = [
        f"{_SPLIT_HEADER} strategy={split.strategy} seed={seed} "
        f"participants={split.num_participants}"
    ]
    for pid in sorted(split.assignment):
        for vid in split.assignment[pid]:
            lines.append(f"{pid}\t{vid}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_split(path) -> SplitAssignment:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"split file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(_SPLIT_HEADER):
        raise ManifestError(f"{path}: missing split header")
    meta = dict(
        part.split("=", 1) for part in lines[0][len(_SPLIT_HEADER):].split() if "=" in part
    )
    assignment: Dict[int, List[str]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            pid_s, vid = line.split("\t")
            pid = int(pid_s)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad split line") from None
        assignment.setdefault(pid, []).append(vid)
    seed = meta.get("seed", "-")
    return SplitAssignment(
        assignment=assignment,
        strategy=meta.get("strategy", "unknown"),
        seed=None if seed == "-" else int(seed),
    )
