"""Command line: ``pawss track | eval | synth | bench``.

Settings come from the built-in defaults, then an optional ``--config`` file
(``key = value`` lines), then explicit flags, later sources winning.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import evaluate, vot_run
from .imaging import BoundingBox
from .io import (
    RunConfig,
    SequenceError,
    SequenceSpec,
    format_config,
    load_config,
    load_groundtruth,
    load_sequence,
    read_results_csv,
    render_overlay,
    save_sequence,
    write_frame,
    write_metrics_json,
    write_results_csv,
)
from .synth import KINDS, synth_sequence
from .tracker import Config, Tracker

log = logging.getLogger("pawss")

ATTRIBUTES_FILE = "attributes.txt"


# -- running ------------------------------------------------------------------


def _first_box(gt, init):
    if init is not None:
        return BoundingBox.from_array(init)
    if gt is None:
        raise SequenceError("need ground truth or --init to start tracking")
    if not np.isfinite(gt[0]).all():
        raise SequenceError("target absent in the first frame; supply --init")
    return BoundingBox.from_array(gt[0])


def track_sequence(run, spec, init=None):
    """Track one sequence and write its outputs to ``run.output``; returns the MetricReport or None."""
    frames, gt = load_sequence(spec)
    out = Path(run.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(run))
    overlay_dir = out / "overlays"
    if run.overlay:
        overlay_dir.mkdir(exist_ok=True)

    tracker = Tracker(run.tracker)
    box0 = _first_box(gt, init)
    boxes, scales, scores = [], [], []
    for k, frame in enumerate(frames):
        if k == 0:
            tracker.init(frame, box0)
            box, scale, score = tracker.report_box(), 1.0, float("nan")
        else:
            res = tracker.track(frame)
            box, scale, score = res.box, res.scale, res.score
        boxes.append(box.as_array())
        scales.append(scale)
        scores.append(score)
        if run.overlay:
            write_frame(overlay_dir / f"{k:04d}.png", render_overlay(frame, box, tracker.weights))
    write_results_csv(out / "results.csv", boxes, scales, scores)

    if gt is None:
        return None
    kwargs = {}
    if "vot" in run.metrics:
        vot = vot_run(Tracker(run.tracker), frames, gt)
        kwargs = dict(failures=vot.failures, accuracy=vot.accuracy)
    report = evaluate(np.asarray(boxes), gt, sequence=spec.name, **kwargs)
    write_metrics_json(out / "metrics.json", report)
    return report


def run_track(run, spec, init=None):
    """Exit status of a ``track`` run; failures are logged with a diagnostic."""
    try:
        report = track_sequence(run, spec, init)
    except (SequenceError, ValueError, OSError) as exc:
        log.error("track failed: %s", exc)
        return 1
    if report is not None:
        print(f"{spec.name or 'sequence'}: PR@20 {report.pr20:.3f}  SR AUC {report.sr_auc:.3f}  mean IoU {report.mean_iou:.3f}")
    return 0


def read_attributes(seq_dir):
    path = Path(seq_dir) / ATTRIBUTES_FILE
    if not path.exists():
        return []
    return sorted({t for t in path.read_text().replace(",", " ").split() if t})


def _bench_one(args):
    run_dict, seq_dir, out_dir = args
    run = RunConfig.from_dict(run_dict)
    run.output = str(out_dir)
    spec = SequenceSpec.from_dir(seq_dir)
    report = track_sequence(run, spec)
    if report is None:
        raise SequenceError(f"{seq_dir}: bench needs ground truth")
    return spec.name, report.to_dict()


def bench(run, root, workers=None):
    """Track every sequence under ``root`` and aggregate per attribute; returns the summary dict."""
    root = Path(root)
    seqs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "groundtruth_rect.txt").exists())
    if not seqs:
        raise SequenceError(f"no OTB-style sequences (with groundtruth_rect.txt) under {root}")
    out = Path(run.output)
    jobs = [(run.to_dict(), str(s), str(out / s.name)) for s in seqs]
    if workers is None:
        workers = int(os.environ.get("PAWSS_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        results = [_bench_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bench_one, jobs))

    per_seq = dict(results)
    groups = {"ALL": list(per_seq)}
    for s in seqs:
        for tag in read_attributes(s):
            groups.setdefault(tag, []).append(s.name)
    keys = ("pr20", "sr_auc", "mean_iou", "accuracy", "failures")
    attrs = {
        tag: {"n": len(names), **{k: float(np.mean([per_seq[n][k] for n in names])) for k in keys}}
        for tag, names in sorted(groups.items())
    }
    summary = {"sequences": per_seq, "attributes": attrs}
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# -- argument parsing ---------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--output", "-o", help="output directory")
    p.add_argument("--overlay", action="store_true", default=None, help="write overlay PNGs")
    p.add_argument("--metrics", help="comma separated metric sets: ope, vot")
    for f in fields(Config):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar=f.name.upper())


def _run_config(ns):
    run = load_config(ns.config) if ns.config else RunConfig()
    d = run.to_dict()
    for key in [f.name for f in fields(Config)] + ["output", "overlay", "metrics"]:
        v = getattr(ns, key, None)
        if v is not None:
            d[key] = v
    return RunConfig.from_dict({k: ("none" if v is None else v) for k, v in d.items()})


def _spec_from_args(ns):
    if ns.sequence:
        spec = SequenceSpec.from_dir(ns.sequence)
    elif ns.frames:
        spec = SequenceSpec(frames=ns.frames, name=Path(ns.frames).name)
    else:
        raise SequenceError("give a sequence directory or --frames")
    if ns.gt:
        spec.groundtruth = ns.gt
    spec.start, spec.end = ns.start, ns.end
    return spec


def build_parser():
    parser = argparse.ArgumentParser(prog="pawss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track one sequence")
    p.add_argument("sequence", nargs="?", help="OTB-style directory (img/ + groundtruth_rect.txt)")
    p.add_argument("--frames", help="directory of frames (instead of a sequence directory)")
    p.add_argument("--gt", help="ground-truth file (1-based x,y,w,h per line)")
    p.add_argument("--init", type=float, nargs=4, metavar=("X", "Y", "W", "H"), help="0-based initial box")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--end", type=int, default=None)
    _add_config_flags(p)

    p = sub.add_parser("eval", help="score a results CSV against ground truth")
    p.add_argument("results")
    p.add_argument("gt")
    p.add_argument("--output", "-o", help="write the metrics JSON here")

    p = sub.add_parser("synth", help="write a synthetic sequence")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("output")
    p.add_argument("--n-frames", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="track every sequence in a directory and aggregate per attribute")
    p.add_argument("root")
    p.add_argument("--workers", type=int, default=None, help="defaults to PAWSS_THREADS or the CPU count")
    _add_config_flags(p)
    return parser


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if ns.command == "track":
            run = _run_config(ns)
            return run_track(run, _spec_from_args(ns), ns.init)
        if ns.command == "eval":
            traj = read_results_csv(ns.results)
            gt = load_groundtruth(ns.gt)
            if len(gt) != len(traj):
                raise SequenceError(f"{len(traj)} result rows but {len(gt)} ground-truth boxes")
            report = evaluate(traj, gt, sequence=Path(ns.results).parent.name)
            if ns.output:
                write_metrics_json(ns.output, report)
            print(f"PR@20 {report.pr20:.3f}  SR AUC {report.sr_auc:.3f}  mean IoU {report.mean_iou:.3f}")
            return 0
        if ns.command == "synth":
            frames, gt = synth_sequence(ns.kind, n_frames=ns.n_frames, seed=ns.seed)
            save_sequence(ns.output, frames, gt)
            print(f"wrote {len(frames)} frames to {ns.output}")
            return 0
        if ns.command == "bench":
            run = _run_config(ns)
            summary = bench(run, ns.root, ns.workers)
            for tag, agg in summary["attributes"].items():
                print(f"{tag:>12s}  n={agg['n']:<3d} PR@20 {agg['pr20']:.3f}  SR AUC {agg['sr_auc']:.3f}  mean IoU {agg['mean_iou']:.3f}")
            return 0
    except (SequenceError, ValueError, KeyError, OSError) as exc:
        print(f"pawss {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
