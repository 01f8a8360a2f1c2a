"""Command-line interface: ingest, train, recognize, detect, evaluate, synth."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import synthetic
from .dataset_io import (
    DatasetManifest,
    ManifestEntry,
    SplitSpec,
    concatenate,
    load_canonical,
    load_joint_text,
    load_layout,
    make_split,
    msr_exclusions,
    parse_msr_filename,
    save_canonical,
    save_joint_text,
)
from .detection import score_detection, segment_iou
from .pipeline import ModelBundle, PipelineConfig, fit, detect, recognize, with_overrides

logger = logging.getLogger("skelhmm")


class CliError(Exception):
    pass


def _subjects(text: str | None):
    if text is None:
        return None
    out = set()
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out.update(range(int(lo), int(hi or lo) + 1))
    return out


def _load_split(args) -> SplitSpec:
    if args.split:
        return SplitSpec.from_dict(yaml.safe_load(Path(args.split).read_text()))
    train, test = _subjects(args.train_subjects), _subjects(args.test_subjects)
    if train is None or test is None:
        raise CliError("give --split FILE or both --train-subjects and --test-subjects")
    return SplitSpec(frozenset(train), frozenset(test))


def _exclusions(args) -> frozenset[str]:
    if args.exclusions == "none":
        return frozenset()
    if args.exclusions == "msr":
        return msr_exclusions()
    lines = Path(args.exclusions).read_text().splitlines()
    return frozenset(l.strip() for l in lines if l.strip() and not l.startswith("#"))


def _load_config(args) -> PipelineConfig:
    data = yaml.safe_load(Path(args.config).read_text()) or {}
    if not isinstance(data, dict):
        raise CliError(f"{args.config}: config must be a mapping")
    cfg = PipelineConfig.from_dict(data)
    hmm = cfg.hmm
    if args.states is not None or args.restarts is not None or args.smoothing is not None:
        from dataclasses import replace

        hmm = replace(
            hmm,
            **{k: v for k, v in {"n_states": args.states, "restarts": args.restarts, "smoothing": args.smoothing}.items() if v is not None},
        )
    descriptor = cfg.descriptor
    if args.descriptor is not None:
        from dataclasses import replace

        descriptor = replace(descriptor, family=args.descriptor)
    return with_overrides(
        cfg,
        seed=args.seed,
        descriptor=descriptor,
        hmm=hmm,
        variance_fraction=args.variance_fraction,
        ap_max_rows=args.ap_max_rows,
        window_width=args.window_width,
        exit_prob=args.exit_prob,
    )


def _sha256(text: str | bytes) -> str:
    return hashlib.sha256(text.encode() if isinstance(text, str) else text).hexdigest()


def _entries_digest(manifest: DatasetManifest, entries) -> str:
    data = [[e.path, e.label, e.subject, e.instance] for e in entries]
    return _sha256(json.dumps({"topology": manifest.topology_ref, "entries": data}))


def cmd_ingest(args) -> int:
    src, out = Path(args.input), Path(args.out)
    if not src.is_dir():
        raise CliError(f"{src} is not a directory")
    files = sorted(p for p in src.glob(args.pattern) if p.is_file())
    if not files:
        raise CliError(f"no files matching {args.pattern!r} in {src}")
    layout = load_layout(args.layout)
    exclusions = _exclusions(args)
    out.mkdir(parents=True, exist_ok=True)
    entries, failures, excluded = [], [], []
    for path in files:
        if path.name in exclusions or path.stem in exclusions:
            excluded.append(path.name)
            continue
        try:
            action, subject, instance = parse_msr_filename(path.name)
            seq = load_joint_text(path, layout, label=action, subject=subject, instance=instance)
        except (ValueError, OSError) as exc:
            failures.append({"file": path.name, "error": str(exc)})
            continue
        target = f"{path.stem}.skel"
        save_canonical(seq, out / target)
        entries.append(ManifestEntry(target, action, subject, instance))
    manifest = DatasetManifest(entries, layout.topology)
    data = json.loads(manifest.to_json())
    data["excluded"] = excluded
    data["failures"] = failures
    (out / "manifest.json").write_text(json.dumps(data, indent=1) + "\n")
    print(f"ingested {len(entries)} files, excluded {len(excluded)}, failed {len(failures)}")
    for f in failures:
        print(f"  failed: {f['file']}: {f['error']}", file=sys.stderr)
    return 0 if entries else 1


def cmd_train(args) -> int:
    cfg = _load_config(args)
    manifest = DatasetManifest.load_file(args.manifest)
    train_entries, _ = make_split(manifest, _load_split(args), _exclusions(args))
    if not train_entries:
        raise CliError("training split is empty")
    seqs = [manifest.load(e) for e in train_entries]
    bundle, log = fit(seqs, cfg)
    bundle.save(args.out)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.json")
    record = {"config_hash": cfg.digest(), "seed": cfg.seed, "train_manifest_hash": _entries_digest(manifest, train_entries)}
    record.update(log.to_dict())
    log_path.write_text(json.dumps(record, indent=1) + "\n")
    print(f"trained {len(bundle.hmms)} models on {len(seqs)} sequences; codebook {bundle.codebook.size}, "
          f"PCA {bundle.pca.retained} dims -> {args.out}")
    return 0


def cmd_recognize(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    for path in args.inputs:
        result = recognize(bundle, load_canonical(path, bundle.topology))
        label = "rejected" if result.rejected else result.label
        lls = " ".join(f"{k}:{v:.6f}" for k, v in result.log_likelihoods.items())
        print(f"{path}\t{label}\t{lls}" if args.verbose else f"{path}\t{label}")
    return 0


def cmd_detect(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    overrides = {"window_width": args.window_width, "per_window": True if args.per_window else None}
    if any(v is not None for v in overrides.values()):
        bundle = _rebundle(bundle, with_overrides(bundle.config, **overrides))
    stream = load_canonical(args.input, bundle.topology)
    result = detect(bundle, stream)
    text = result.to_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _rebundle(bundle: ModelBundle, cfg: PipelineConfig) -> ModelBundle:
    return ModelBundle(cfg, bundle.topology, bundle.angles, bundle.profile, bundle.normalizer,
                       bundle.pca, bundle.codebook, bundle.hmms)


def _recognition_report(bundle: ModelBundle, seqs) -> dict:
    labels = sorted({*bundle.labels, *(s.label for s in seqs)}, key=lambda l: (str(type(l)), l))
    columns = labels + ["rejected"]
    confusion = np.zeros((len(labels), len(columns)), dtype=int)
    for seq in seqs:
        result = recognize(bundle, seq)
        col = len(labels) if result.rejected else labels.index(result.label)
        confusion[labels.index(seq.label), col] += 1
    counts = confusion.sum(axis=1)
    correct = int(np.trace(confusion[:, : len(labels)]))
    return {
        "labels": labels,
        "per_class_accuracy": {
            str(l): (float(confusion[i, i] / counts[i]) if counts[i] else None) for i, l in enumerate(labels)
        },
        "instances": {str(l): int(c) for l, c in zip(labels, counts)},
        "correct": correct,
        "total": int(counts.sum()),
        "overall_accuracy": correct / int(counts.sum()) if counts.sum() else 0.0,
        "confusion_columns": [str(c) for c in columns],
        "confusion": confusion.tolist(),
    }


def _detection_report(bundle: ModelBundle, streams) -> dict:
    predicted, truth = [], []
    for stream in streams:
        predicted.extend(detect(bundle, stream).frame_labels)
        truth.extend(stream.frame_labels)
    scores = score_detection(predicted, truth)
    report = {"window_width": bundle.config.window_width, "per_window": bundle.config.per_window,
              "streams": len(streams), "frames": len(truth)}
    report.update(scores.to_dict())
    report["segment_iou"] = segment_iou(predicted, truth)
    return report


def _render(report: dict) -> str:
    lines = [f"mode: {report['mode']}", f"config hash: {report['metadata']['config_hash']}",
             f"seed: {report['metadata']['seed']}", ""]
    if "recognition" in report:
        rec = report["recognition"]
        width = max(8, *(len(str(l)) for l in rec["labels"]))
        lines.append(f"{'class':<{width}}  {'n':>5}  {'accuracy':>9}")
        for l in rec["labels"]:
            acc = rec["per_class_accuracy"][str(l)]
            lines.append(f"{str(l):<{width}}  {rec['instances'][str(l)]:>5}  "
                         + (f"{100 * acc:>8.4f}%" if acc is not None else f"{'-':>9}"))
        lines.append(f"{'overall':<{width}}  {rec['total']:>5}  {100 * rec['overall_accuracy']:>8.4f}%")
        lines.append("")
        lines.append("confusion (rows: true, columns: predicted)")
        cols = rec["confusion_columns"]
        cw = max(4, *(len(c) for c in cols))
        lines.append(" " * width + "  " + " ".join(f"{c:>{cw}}" for c in cols))
        for l, row in zip(rec["labels"], rec["confusion"]):
            lines.append(f"{str(l):<{width}}  " + " ".join(f"{v:>{cw}}" for v in row))
    if "detection" in report:
        det = report["detection"]
        lines.append(f"window width {det['window_width']}, {det['streams']} streams, {det['frames']} frames")
        lines.append(f"{'class':<10} {'precision':>10} {'recall':>10} {'F1':>10}")
        for label, s in det["per_class"].items():
            lines.append(f"{label:<10} {s['precision']:>10.4f} {s['recall']:>10.4f} {s['f1']:>10.4f}")
        m = det["micro"]
        lines.append(f"{'micro':<10} {m['precision']:>10.4f} {m['recall']:>10.4f} {m['f1']:>10.4f}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    if args.window_width is not None:
        bundle = _rebundle(bundle, with_overrides(bundle.config, window_width=args.window_width))
    manifest = DatasetManifest.load_file(args.manifest)
    _, test_entries = make_split(manifest, _load_split(args), _exclusions(args))
    if not test_entries:
        raise CliError("test split is empty")
    seqs = [manifest.load(e, bundle.topology) for e in test_entries]
    report = {
        "mode": args.mode,
        "metadata": {
            "config_hash": bundle.config.digest(),
            "seed": bundle.config.seed,
            "bundle_hash": _sha256(Path(args.bundle).read_bytes()),
            "test_manifest_hash": _entries_digest(manifest, test_entries),
        },
    }
    if args.mode == "recognition":
        report["recognition"] = _recognition_report(bundle, seqs)
    else:
        streams = [s for s in seqs if s.frame_labels is not None]
        segmented = [s for s in seqs if s.frame_labels is None]
        if segmented:
            order = np.random.default_rng([bundle.config.seed, 4]).permutation(len(segmented))
            for i in range(0, len(order), args.concat):
                streams.append(concatenate([segmented[j] for j in order[i: i + args.concat]]))
        report["detection"] = _detection_report(bundle, streams)
    out = Path(args.report)
    out.write_text(json.dumps(report, indent=1) + "\n")
    table = _render(report)
    out.with_suffix(".txt").write_text(table)
    sys.stdout.write(table)
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = synthetic.make_dataset(args.actions, range(1, args.subjects + 1), args.instances, args.seed, args.noise)
    if args.raw:
        layout = load_layout("msr_action3d")
        for seq in data:
            save_joint_text(seq, out / f"a{seq.label:02d}_s{seq.subject:02d}_e{seq.instance:02d}_skeleton3D.txt", layout)
        print(f"wrote {len(data)} raw files to {out}")
        return 0
    entries = []
    for seq in data:
        name = f"a{seq.label:02d}_s{seq.subject:02d}_e{seq.instance:02d}.skel"
        save_canonical(seq, out / name)
        entries.append(ManifestEntry(name, seq.label, seq.subject, seq.instance))
    DatasetManifest(entries, "kinect20").save(out / "manifest.json")
    print(f"wrote {len(entries)} sequences and manifest.json to {out}")
    return 0


def _add_split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", help="YAML file with train_subjects / test_subjects")
    p.add_argument("--train-subjects", help="e.g. 1-5 or 1,3,5,7,9")
    p.add_argument("--test-subjects", help="e.g. 6-10")
    p.add_argument("--exclusions", default="msr", help="'msr' (default list), 'none', or a file of names")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skelhmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert raw skeleton text files to canonical files + manifest")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--layout", default="msr_action3d", help="preset name or layout YAML")
    p.add_argument("--pattern", default="*.txt")
    p.add_argument("--exclusions", default="msr", help="'msr' (default list), 'none', or a file of names")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit a model bundle on the training split")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    _add_split_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--descriptor")
    p.add_argument("--states", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--variance-fraction", type=float)
    p.add_argument("--ap-max-rows", type=int)
    p.add_argument("--window-width", type=int)
    p.add_argument("--exit-prob", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recognize", help="classify segmented sequences")
    p.add_argument("--bundle", required=True)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("detect", help="label every frame of an unsegmented stream")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--window-width", type=int)
    p.add_argument("--per-window", action="store_true", help="decode each window independently")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a bundle on the test split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="JSON report path; a .txt table is written beside it")
    p.add_argument("--mode", choices=("recognition", "detection"), default="recognition")
    p.add_argument("--concat", type=int, default=5, help="instances per stream in detection mode")
    p.add_argument("--window-width", type=int)
    _add_split_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--actions", type=int, default=3)
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--instances", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--raw", action="store_true", help="write MSR-style raw text instead of canonical files")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
