"""Command-line interface.

Subcommands: synth, split, train, eval, pseudo-label, stats, comms.
Exit codes: 0 success, 1 validation error, 2 runtime/protocol error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import detector, federation, harness, splits, spl, stats, vpl
from .config import build_config, parse_config_file
from .dataset import SyntheticSpec, load_manifest, save_manifest, synthesize_dataset
from .errors import FedvadError, ValidationError

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedvad",
        description="Federated unsupervised video anomaly detection on segment features",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic train/test dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--videos", type=int, required=True)
    p.add_argument("--anomaly-frac", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--magnitude-shift", type=float, default=3.0)
    p.add_argument("--window-frac", type=float, default=0.2)
    p.add_argument("--direction-jitter", type=float, default=0.65)
    p.add_argument("--segments-min", type=int, default=40)
    p.add_argument("--segments-max", type=int, default=48)
    p.add_argument("--frames-per-segment", type=int, default=16)
    p.add_argument("--event-classes", type=int, default=5)
    p.add_argument("--scene-classes", type=int, default=4)

    p = sub.add_parser("split", help="partition a train manifest across participants")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", required=True, choices=["random", "event", "scene"])
    p.add_argument("--participants", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run centralized / local / collaborative training")
    p.add_argument("--mode", required=True, choices=["central", "local", "collab"])
    p.add_argument("--manifest", required=True, help="train manifest")
    p.add_argument("--split", default=None, help="split file (local/collab)")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--test", default=None, help="test manifest (overrides config)")

    p = sub.add_parser("eval", help="frame-level AUC of a model on a test manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--dump-tracks", nargs="?", const="tracks.tsv", default=None,
                   metavar="PATH", help="write per-frame score tracks")

    p = sub.add_parser("pseudo-label", help="single-node pseudo-label generation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--out", required=True, help="segment-label dump path")
    p.add_argument("--video-out", default=None, help="video-label dump path")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="dump per-video [sigma, entropy] summaries")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("comms", help="closed-form communication ledger")
    p.add_argument("--config", default=None)
    p.add_argument("--dim", type=int, required=True)
    return parser


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        num_videos=args.videos,
        anomaly_fraction=args.anomaly_frac,
        feature_dim=args.dim,
        segments_range=(args.segments_min, args.segments_max),
        anomaly_window_fraction=args.window_frac,
        magnitude_shift=args.magnitude_shift,
        direction_jitter=args.direction_jitter,
        num_event_classes=args.event_classes,
        num_scene_classes=args.scene_classes,
        frames_per_segment=args.frames_per_segment,
        seed=args.seed,
    )
    train, test = synthesize_dataset(spec)
    out = Path(args.out)
    train_path = save_manifest(train, out / "train")
    test_path = save_manifest(test, out / "test")
    print(f"wrote {train.num_videos} train videos: {train_path}")
    print(f"wrote {test.num_videos} test videos: {test_path}")
    return 0


def _cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.strategy == "random":
        if args.participants is None:
            raise ValidationError("--participants is required for the random strategy")
        split = splits.split_random(manifest, args.participants, args.seed)
    elif args.strategy == "event":
        split = splits.split_by_event(manifest)
    else:
        split = splits.split_by_scene(manifest)
    path = splits.save_split(split, args.out)
    print(f"wrote {split.num_participants}-participant {split.strategy} split: {path}")
    return 0


def _cmd_train(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = build_config(file_values)
    test_path = args.test or file_values.get("test_manifest")
    if not test_path:
        raise ValidationError("a test manifest is required (--test or config key)")
    train = load_manifest(args.manifest, split_role="train")
    test = load_manifest(test_path, split_role="test")
    out = Path(args.out)

    if args.mode == "central":
        report = federation.run_centralized(cfg, train, test)
        paths = report.write(out, stem="central")
        print(f"centralized auc {report.final_auc:.4f} model {paths['model']}")
        return 0

    if not args.split:
        raise ValidationError(f"--split is required for mode {args.mode}")
    split = splits.load_split(args.split)
    if args.mode == "collab":
        report = federation.run_collaborative(cfg, train, split, test)
        paths = report.write(out, stem="collab")
        print(f"collaborative auc {report.final_auc:.4f} model {paths['model']}")
        return 0

    reports = federation.run_local(cfg, train, split, test)
    aucs = []
    for report in reports:
        report.write(out, stem=f"local_p{report.participant_id}")
        aucs.append(report.final_auc)
        print(f"local participant {report.participant_id} auc {report.final_auc:.4f}")
    print(f"mean local auc {np.mean(aucs):.4f}")
    return 0


def _cmd_eval(args) -> int:
    params, _ = detector.load_model(args.model)
    test = load_manifest(args.test, split_role="test")
    result = harness.evaluate_model(params, test, dump_tracks=args.dump_tracks is not None)
    print(f"auc {result.auc:.6f} pos {result.num_pos} neg {result.num_neg}")
    if args.dump_tracks is not None:
        lines = [
            f"{track.video_id}\t" + ",".join(f"{s:.6f}" for s in track.frame_scores)
            for track in result.tracks
        ]
        Path(args.dump_tracks).write_text("\n".join(lines) + "\n")
        print(f"wrote tracks: {args.dump_tracks}")
    return 0


def _cmd_pseudo_label(args) -> int:
    manifest = load_manifest(args.manifest)
    summaries = stats.summarize_manifest(manifest)
    gmm = vpl.fit_gmm2([[s.sigma, s.entropy] for s in summaries], seed=args.seed)
    vlabels = vpl.assign_video_labels(gmm, summaries)
    null = spl.fit_null_gaussian(manifest, vlabels)
    mixture = spl.build_mixture([null])
    seg_labels = spl.generate_all(manifest, vlabels, mixture, args.beta)
    lines = [
        f"{vid}\t" + ",".join(str(int(b)) for b in seg_labels.labels[vid])
        for vid in manifest.video_ids()
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote segment labels: {args.out}")
    if args.video_out:
        vlines = [f"{vid}\t{vlabels.get(vid)}" for vid in manifest.video_ids()]
        Path(args.video_out).write_text("\n".join(vlines) + "\n")
        print(f"wrote video labels: {args.video_out}")
    return 0


def _cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    lines = [
        f"{s.video_id}\t{s.sigma!r}\t{s.entropy!r}"
        for s in stats.summarize_manifest(manifest)
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote stats for {manifest.num_videos} videos: {args.out}")
    return 0


def _cmd_comms(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = build_config(file_values)
    ledger = federation.comms_accounting(cfg, args.dim)
    sys.stdout.write(ledger.table())
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "split": _cmd_split,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "pseudo-label": _cmd_pseudo_label,
    "stats": _cmd_stats,
    "comms": _cmd_comms,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _HANDLERS[args.command](args)
    except FedvadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
