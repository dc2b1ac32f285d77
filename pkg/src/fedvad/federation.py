"""Synchronous simulation of the collaborative training protocol.

One run executes, in order: per-participant video pseudo-labeling, null
Gaussian fits, the pooled server mixture, segment pseudo-label generation,
then T rounds of (broadcast global params -> E local SGD iterations ->
pseudo-label refinement -> gradient aggregation). Everything is derived from
(config.seed, participant seed key, round, iteration) so results are
byte-reproducible regardless of scheduling; participants run sequentially in
ascending id order and all reductions use that canonical order.

Cross-participant traffic is limited to the 24-byte null-Gaussian triple and
the flat parameter/gradient vectors; raw feature access goes through a store
that records (accessor, owner) pairs so the privacy contract is auditable.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import detector, harness, layout, spl, stats, vpl
from .dataset import DatasetManifest, VideoRecord
from .errors import NoNullModelError, ProtocolError, ValidationError
from .spl import GAUSSIAN_PAYLOAD_BYTES
from .splits import SplitAssignment, validate_partition
from .vpl import VideoLabelSet

log = logging.getLogger(__name__)

# Stage tags for deriving independent RNG streams.
_STAGE_VPL = 1
_STAGE_INIT = 2
_STAGE_BATCH = 3
_STAGE_DROPOUT = 4


@dataclass
class FederationConfig:
    participants: int = 5
    rounds: int = 10
    local_iters: int = 20
    local_lr: float = 1.0
    server_lr: float = 1.0
    beta: float = 0.2
    alpha: float = 0.05  # significance level; reserved, unused by default path
    plr_warmup_rounds: int = 2
    batch_size: int = 64
    dropout: float = 0.3
    l2_coeff: float = 1e-4
    seed: int = 0
    plr_all_videos: bool = False

    def validate(self) -> None:
        if self.participants < 1 or self.rounds < 1 or self.local_iters < 1:
            raise ValidationError("participants, rounds, local_iters must be >= 1")
        if not 0.0 < self.beta <= 1.0:
            raise ValidationError("beta must be in (0, 1]")
        if self.local_lr <= 0 or self.server_lr <= 0:
            raise ValidationError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        if self.l2_coeff < 0:
            raise ValidationError("l2_coeff must be >= 0")
        if self.plr_warmup_rounds < 0:
            raise ValidationError("plr_warmup_rounds must be >= 0")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")


@dataclass
class CommsLedger:
    """Byte counts of every cross-node payload, derived from exact layouts."""

    entries: List[Tuple[str, int, str, int]] = field(default_factory=list)

    def record(self, phase: str, pid: int, direction: str, nbytes: int) -> None:
        self.entries.append((phase, pid, direction, nbytes))

    def participant_total(self, pid: int) -> int:
        return sum(e[3] for e in self.entries if e[1] == pid)

    def grand_total(self) -> int:
        return sum(e[3] for e in self.entries)

    def table(self) -> str:
        lines = ["phase\tparticipant\tdirection\tbytes"]
        for phase, pid, direction, nbytes in self.entries:
            lines.append(f"{phase}\t{pid}\t{direction}\t{nbytes}")
        pids = sorted({e[1] for e in self.entries})
        for pid in pids:
            lines.append(f"total\t{pid}\t-\t{self.participant_total(pid)}")
        lines.append(f"total\t-\t-\t{self.grand_total()}")
        return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    mode: str
    per_round_loss: List[Dict[int, float]]
    per_round_auc: List[float]
    final_params: np.ndarray
    feature_dim: int
    ledger: CommsLedger
    access_log: List[Tuple[int, int]]
    participant_id: Optional[int] = None
    final_model_path: Optional[Path] = None

    @property
    def final_auc(self) -> float:
        return self.per_round_auc[-1]

    def report_text(self) -> str:
        lines = ["round,who,metric,value"]
        for t, (losses, auc) in enumerate(zip(self.per_round_loss, self.per_round_auc)):
            for pid in sorted(losses):
                lines.append(f"{t},participant:{pid},loss,{losses[pid]!r}")
            lines.append(f"{t},global,auc,{auc!r}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "run") -> Dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = out_dir / f"{stem}_report.csv"
        report.write_text(self.report_text())
        ledger = out_dir / f"{stem}_ledger.txt"
        ledger.write_text(self.ledger.table())
        model = detector.save_model(
            self.final_params, self.feature_dim, out_dir / f"{stem}_model.bin"
        )
        self.final_model_path = model
        return {"report": report, "ledger": ledger, "model": model}


def _seed_int(*keys) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0])


def _rng(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(keys))))


class FeatureStore:
    """Mediates all raw-feature access during training and logs who read
    whose videos. Served records carry features and shape only; benchmark
    tags and ground truth are stripped."""

    def __init__(self, manifest: DatasetManifest, owner_of: Dict[str, int]):
        self._manifest = manifest
        self._owner_of = owner_of
        self.access_log: List[Tuple[int, int]] = []

    def training_record(self, video_id: str, accessor: int) -> VideoRecord:
        record = self._manifest.get(video_id)
        self.access_log.append((accessor, self._owner_of[video_id]))
        return VideoRecord(
            video_id=record.video_id,
            features=record.features,
            frames_per_segment=record.frames_per_segment,
        )


class _Participant:
    def __init__(self, pid, seed_key, video_ids, store, config, feature_dim):
        self.pid = pid
        self.seed_key = seed_key
        self.video_ids = list(video_ids)
        self.config = config
        self.records = [store.training_record(vid, pid) for vid in self.video_ids]
        self.local_manifest = DatasetManifest(
            videos=self.records, feature_dim=feature_dim, split_role="train"
        )
        self.vlabels: Optional[VideoLabelSet] = None
        self.seg_labels: Dict[str, np.ndarray] = {}
        self.null = None
        self._X = np.vstack([r.features for r in self.records]).astype(np.float32)

    def bootstrap(self) -> None:
        cfg = self.config
        summaries = [stats.summarize_video(r) for r in self.records]
        points = [[s.sigma, s.entropy] for s in summaries]
        gmm = vpl.fit_gmm2(points, seed=_seed_int(cfg.seed, _STAGE_VPL, self.seed_key))
        self.vlabels = vpl.assign_video_labels(gmm, summaries)
        self.seg_labels = {
            r.video_id: np.zeros(r.num_segments, dtype=np.int8) for r in self.records
        }
        try:
            self.null = spl.fit_null_gaussian(self.local_manifest, self.vlabels)
        except NoNullModelError:
            log.warning(
                "participant %d has no pseudo-normal segments: "
                "contributes no mixture component", self.pid,
            )
            self.null = None

    def generate_segments(self, mixture) -> None:
        for r in self.records:
            self.seg_labels[r.video_id] = spl.spl_generate(
                r, self.vlabels.get(r.video_id), mixture, self.config.beta
            )

    def _labels_flat(self) -> np.ndarray:
        return np.concatenate([self.seg_labels[r.video_id] for r in self.records])

    def train_round(self, theta_global: np.ndarray, t: int) -> Tuple[np.ndarray, float]:
        """E local SGD iterations from the broadcast parameters; returns the
        parameter delta and the mean training loss. Refines pseudo-labels
        afterwards when past the warmup."""
        cfg = self.config
        X, y = self._X, self._labels_flat()
        m_total = X.shape[0]
        rng = _rng(cfg.seed, _STAGE_BATCH, self.seed_key, t)
        need = cfg.local_iters * cfg.batch_size
        stream = np.concatenate(
            [rng.permutation(m_total) for _ in range(-(-need // m_total))]
        )
        theta = theta_global.copy()
        losses = []
        for e in range(cfg.local_iters):
            idx = stream[e * cfg.batch_size:(e + 1) * cfg.batch_size]
            batch = detector.TrainBatch(features=X[idx], labels=y[idx])
            loss, grad = detector.loss_and_grad(
                theta,
                batch,
                l2_coeff=cfg.l2_coeff,
                train_mode=True,
                dropout_seed=_seed_int(cfg.seed, _STAGE_DROPOUT, self.seed_key, t, e),
                dropout_rate=cfg.dropout,
            )
            theta = detector.sgd_step(theta, grad, cfg.local_lr)
            losses.append(loss)
        delta = theta - theta_global
        if t >= cfg.plr_warmup_rounds:
            self._refine_labels(theta)
        return delta, float(np.mean(losses))

    def _refine_labels(self, theta_local: np.ndarray) -> None:
        cfg = self.config
        for r in self.records:
            if not cfg.plr_all_videos and self.vlabels.get(r.video_id) != 1:
                continue
            q = detector.forward(theta_local, r.features, train_mode=False)
            self.seg_labels[r.video_id] = spl.spl_update(
                self.seg_labels[r.video_id], q, cfg.beta
            )


def aggregate_fedavg(
    deltas: List[np.ndarray],
    server_lr: float,
    num_participants: int,
    participant_ids: Optional[List[int]] = None,
) -> np.ndarray:
    """server_lr * (sum of deltas / K), summed in ascending participant order
    (float64 accumulation). Returns the float64 global update vector."""
    if not deltas:
        raise ProtocolError("no gradient deltas to aggregate")
    shape = deltas[0].shape
    for delta in deltas:
        if delta.shape != shape:
            raise ProtocolError("gradient delta layout mismatch")
    order = range(len(deltas))
    if participant_ids is not None:
        if len(participant_ids) != len(deltas):
            raise ProtocolError("participant_ids length mismatch")
        order = np.argsort(participant_ids, kind="stable")
    total = np.zeros(shape, dtype=np.float64)
    for i in order:
        total += deltas[i].astype(np.float64)
    return server_lr * (total / num_participants)


def _engine(
    config: FederationConfig,
    train: DatasetManifest,
    split: SplitAssignment,
    test: DatasetManifest,
    mode: str,
    seed_keys: Optional[Dict[int, int]] = None,
) -> RunReport:
    config.validate()
    pids = sorted(pid for pid, vids in split.assignment.items() if vids)
    if len(pids) != config.participants:
        raise ValidationError(
            f"config expects {config.participants} participants, split has "
            f"{len(pids)} non-empty"
        )
    d = train.feature_dim
    owner_of = {
        vid: pid for pid, vids in split.assignment.items() for vid in vids
    }
    store = FeatureStore(train, owner_of)
    participants = [
        _Participant(
            pid,
            seed_keys[pid] if seed_keys else pid,
            split.assignment[pid],
            store,
            config,
            d,
        )
        for pid in pids
    ]

    for p in participants:
        p.bootstrap()
    ledger = CommsLedger()
    contributing = [p for p in participants if p.null is not None]
    if not contributing:
        raise NoNullModelError("no participant could fit a null Gaussian")
    mixture = spl.build_mixture([p.null for p in contributing])
    for p in contributing:
        ledger.record("init", p.pid, "up", GAUSSIAN_PAYLOAD_BYTES)
    for p in participants:
        p.generate_segments(mixture)

    theta = detector.init_params(d, _seed_int(config.seed, _STAGE_INIT))
    param_bytes = layout.param_count(d) * 4
    k = len(participants)
    per_round_loss: List[Dict[int, float]] = []
    per_round_auc: List[float] = []
    for t in range(config.rounds):
        deltas, ids, losses = [], [], {}
        for p in participants:
            ledger.record(str(t), p.pid, "down", param_bytes)
            delta, mean_loss = p.train_round(theta, t)
            ledger.record(str(t), p.pid, "up", param_bytes)
            deltas.append(delta)
            ids.append(p.pid)
            losses[p.pid] = mean_loss
        update = aggregate_fedavg(deltas, config.server_lr, k, participant_ids=ids)
        theta = (theta.astype(np.float64) + update).astype(np.float32)
        per_round_loss.append(losses)
        per_round_auc.append(harness.evaluate_model(theta, test).auc)

    return RunReport(
        mode=mode,
        per_round_loss=per_round_loss,
        per_round_auc=per_round_auc,
        final_params=theta,
        feature_dim=d,
        ledger=ledger,
        access_log=list(store.access_log),
    )


def run_collaborative(
    config: FederationConfig,
    train: DatasetManifest,
    split: SplitAssignment,
    test: DatasetManifest,
    seed_keys: Optional[Dict[int, int]] = None,
) -> RunReport:
    """Full protocol across the split's participants. ``seed_keys`` overrides
    the per-participant RNG identity (defaults to the participant id); it
    exists so experiments can force identical per-participant streams."""
    validate_partition(split, train)
    return _engine(config, train, split, test, "collab", seed_keys)


def run_centralized(
    config: FederationConfig, train: DatasetManifest, test: DatasetManifest
) -> RunReport:
    """All data on one node: the same pipeline with K=1 and server_lr=1."""
    if train.num_videos == 0:
        raise ValidationError("empty training set")
    cfg = replace(config, participants=1, server_lr=1.0)
    split = SplitAssignment(assignment={0: train.video_ids()}, strategy="central")
    return _engine(cfg, train, split, test, "central")


def run_local(
    config: FederationConfig,
    train: DatasetManifest,
    split: SplitAssignment,
    test: DatasetManifest,
) -> List[RunReport]:
    """Each participant trains independently on its shard; every report
    carries that participant's id and its AUC on the full test set."""
    reports = []
    for pid in sorted(split.assignment):
        vids = split.assignment[pid]
        if not vids:
            log.warning("participant %d has no videos: skipped", pid)
            continue
        cfg = replace(config, participants=1, server_lr=1.0)
        sub = SplitAssignment(assignment={pid: vids}, strategy="local", seed=split.seed)
        report = _engine(cfg, train, sub, test, "local")
        report.participant_id = pid
        reports.append(report)
    if not reports:
        raise ValidationError("no non-empty participants in split")
    return reports


def comms_accounting(config: FederationConfig, d: int) -> CommsLedger:
    """Closed-form ledger for a full run: one 24-byte Gaussian upload per
    participant, then param_count(d)*4 bytes down and up per round."""
    config.validate()
    ledger = CommsLedger()
    param_bytes = layout.param_count(d) * 4
    for pid in range(config.participants):
        ledger.record("init", pid, "up", GAUSSIAN_PAYLOAD_BYTES)
    for t in range(config.rounds):
        for pid in range(config.participants):
            ledger.record(str(t), pid, "down", param_bytes)
            ledger.record(str(t), pid, "up", param_bytes)
    return ledger
