"""Command-line entry points: ``track``, ``train-toy``, ``describe``, ``eval`` and ``plot``.

Every command reads one :class:`~citetrack.config.RunConfig` (defaults, then
``--config`` file, then ``CITETRACK_*`` environment variables, then flags) and
writes only below ``--out``. Exit codes: 0 success, 2 usage or configuration
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np
import torch

from citetrack.boxes import Box, iou
from citetrack.config import ConfigError, RunConfig, load_config
from citetrack.encoders import WeightsError
from citetrack.eval import (
    AnnotationError,
    MetricReport,
    Sequence,
    evaluate_boxes,
    generate_synthetic_set,
    parse_sequence,
    read_results,
    run_sre,
    run_tre,
    write_results,
)
from citetrack.eval.metrics import center_errors, paired, precision_curve, success_curve
from citetrack.eval.report import plot_boxes, plot_curves
from citetrack.textconv import describe
from citetrack.tracker import Tracker, build_model, default_training_set, load_model, save_model, train_toy
from citetrack.tracker.crop import crop_patch, to_chw
from citetrack.vocab import KINDS, VocabularyError, load_vocabulary

log = logging.getLogger("citetrack")

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    """Bad flags, paths or config values; reported with exit code 2."""


# ---- argument parsing -------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON run config")
    p.add_argument("--seed", type=int, help="seed for model init, training and data (default 0)")
    p.add_argument("--weights", help="model weights file")
    p.add_argument("--vocab", help="vocabulary YAML/JSON (default: bundled vocabulary)")
    p.add_argument("--dataset", help="sequence directory, or a directory of sequence directories")
    p.add_argument("--format", choices=("otb", "got10k", "synth"), help="dataset layout (default synth)")
    p.add_argument("--out", help="output directory (default runs)")
    p.add_argument("--no-window", action="store_true", help="disable the cosine window on the score map")
    p.add_argument("--no-text", action="store_true", help="run the vision-only pathway")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citetrack", description="Text-conditioned single object tracker.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track every sequence of a dataset")
    _common(p)

    p = sub.add_parser("train-toy", help="train on synthetic sequences")
    _common(p)
    p.add_argument("--iterations", type=int, help="override train.iterations")

    p = sub.add_parser("describe", help="print the predicted description of a target")
    _common(p)
    p.add_argument("image", help="image file")
    p.add_argument("--box", required=True, help="target box as x,y,w,h in pixels")

    p = sub.add_parser("eval", help="compute metrics (plain, TRE or SRE)")
    _common(p)
    p.add_argument("--results", help="directory of <sequence>.txt result files (plain protocol)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tre", action="store_true", help="temporal robustness evaluation")
    group.add_argument("--sre", choices=("shift", "scale"), help="spatial robustness evaluation")
    p.add_argument("--segments", type=int, default=20, help="TRE start points per sequence")

    p = sub.add_parser("plot", help="overlay result boxes on frames and draw curves")
    _common(p)
    p.add_argument("--results", help="directory of <sequence>.txt result files")
    p.add_argument("--every", type=int, default=10, help="plot every n-th frame")
    return parser


def config_from_args(args: argparse.Namespace, environ=None) -> RunConfig:
    overrides: dict = {}
    for key in ("weights", "vocab", "dataset", "format", "out", "results"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["model"] = {"seed": args.seed}
        overrides["train"] = {"seed": args.seed}
    tracker = {}
    if args.no_window:
        tracker["window"] = False
    if args.no_text:
        tracker["use_text"] = False
    if tracker:
        overrides["tracker"] = tracker
    if getattr(args, "iterations", None) is not None:
        overrides.setdefault("train", {})["iterations"] = args.iterations
    return load_config(args.config, overrides, environ)


# ---- shared plumbing --------------------------------------------------------

def _check_paths(cfg: RunConfig, need_dataset: bool = False, need_results: bool = False) -> None:
    """Validate every input path up front, before any compute."""
    if cfg.weights is not None and not Path(cfg.weights).is_file():
        raise UsageError(f"weights file not found: {cfg.weights}")
    if cfg.vocab is not None and not Path(cfg.vocab).is_file():
        raise UsageError(f"vocabulary file not found: {cfg.vocab}")
    if cfg.format not in ("otb", "got10k", "synth"):
        raise UsageError(f"unknown dataset format {cfg.format!r}")
    if cfg.format != "synth":
        if cfg.dataset is None and need_dataset:
            raise UsageError(f"--dataset is required for format {cfg.format}")
        if cfg.dataset is not None and not Path(cfg.dataset).is_dir():
            raise UsageError(f"dataset directory not found: {cfg.dataset}")
    if need_results and cfg.results is not None and not Path(cfg.results).is_dir():
        raise UsageError(f"results directory not found: {cfg.results}")


def _model(cfg: RunConfig):
    vocab = load_vocabulary(cfg.vocab) if cfg.vocab else None
    if cfg.weights:
        return load_model(cfg.weights, vocab=vocab)
    log.warning("no --weights given; using an untrained model initialized from seed %d", cfg.model.seed)
    return build_model(cfg.model, vocab)


def _annotation_file(path: Path, fmt: str) -> Path:
    return path / ("groundtruth_rect.txt" if fmt == "otb" else "groundtruth.txt")


def load_dataset(cfg: RunConfig) -> list[Sequence]:
    if cfg.format == "synth":
        return generate_synthetic_set(cfg.synth_count, cfg.synth_seed)
    root = Path(cfg.dataset)
    if _annotation_file(root, cfg.format).is_file():
        return [parse_sequence(root, cfg.format)]
    dirs = sorted(d for d in root.iterdir() if d.is_dir() and _annotation_file(d, cfg.format).is_file())
    if not dirs:
        raise AnnotationError(f"no {cfg.format} sequences found under {root}")
    return [parse_sequence(d, cfg.format) for d in dirs]


def _parse_box(text: str) -> Box:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",")]
        if len(vals) != 4:
            raise ValueError
        return Box(*vals)
    except ValueError:
        raise UsageError(f"--box must be x,y,w,h with positive w and h, got {text!r}") from None


def _result_boxes(cfg: RunConfig, seq: Sequence) -> list[Box]:
    boxes = read_results(Path(cfg.results) / f"{seq.name}.txt")
    if len(boxes) != len(seq):
        raise AnnotationError(f"{seq.name}: {len(boxes)} result boxes for {len(seq)} frames")
    return boxes


# ---- commands ---------------------------------------------------------------

def cmd_track(cfg: RunConfig, args) -> int:
    _check_paths(cfg, need_dataset=True)
    model = _model(cfg)
    sequences = load_dataset(cfg)
    out = Path(cfg.out)
    tracker = Tracker(model, cfg.tracker)
    vocab = model.vocab
    for seq in sequences:
        frames = (seq.frame(i) for i in range(len(seq)))
        boxes, diags = tracker.run(frames, seq.boxes[0])
        write_results(out / "results" / f"{seq.name}.txt", boxes)
        log_path = out / "descriptions" / f"{seq.name}.jsonl"
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with log_path.open("w") as fh:
            for d in diags:
                row = {"frame": d["frame"]}
                if "labels" in d:
                    row["labels"] = {k: vocab.labels(k)[i] for k, i in d["labels"].items()}
                if "weights" in d:
                    row["weights"] = dict(zip(("color", "material", "texture"), d["weights"]))
                if "peak" in d:
                    row["peak"] = d["peak"]
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        p, g = paired(boxes, seq.boxes)
        mean_iou = float(np.mean([iou(a, b) for a, b in zip(p[1:], g[1:])])) if len(p) > 1 else float("nan")
        print(f"{seq.name}: {len(boxes)} frames, mean IoU {mean_iou:.4f}")
    return 0


def cmd_train_toy(cfg: RunConfig, args) -> int:
    _check_paths(cfg)
    vocab = load_vocabulary(cfg.vocab) if cfg.vocab else None
    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model, vocab)
    if cfg.format == "synth" or cfg.dataset is None:
        sequences = default_training_set(cfg.train)
    else:
        sequences = load_dataset(cfg)
    result = train_toy(model, sequences, cfg.train, cfg.tracker, progress=args.verbose)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / "weights.pt")
    with (out / "loss.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(result.curve[0]) if result.curve else ["iteration"])
        writer.writeheader()
        writer.writerows(result.curve)
    if result.curve:
        first, last = result.curve[0]["total"], result.curve[-1]["total"]
        print(f"trained {len(result.curve)} iterations: loss {first:.4f} -> {last:.4f}")
    print(f"weights: {out / 'weights.pt'}\nloss curve: {out / 'loss.csv'}")
    return 0


def cmd_describe(cfg: RunConfig, args) -> int:
    _check_paths(cfg)
    box = _parse_box(args.box)
    if not Path(args.image).is_file():
        raise UsageError(f"image not found: {args.image}")
    img = cv2.imread(str(args.image), cv2.IMREAD_COLOR)
    if img is None:
        raise UsageError(f"cannot decode image: {args.image}")
    frame = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    model = _model(cfg)
    patch, _ = crop_patch(frame, box, cfg.tracker.template_factor, model.cfg.template_size)
    desc = describe(to_chw(patch), model.conversion, source=str(args.image))
    for kind in KINDS:
        i = desc.indices[kind]
        print(f"{kind}: {model.vocab.labels(kind)[i]} ({float(desc.probs[kind][i]):.4f})")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    robust = args.tre or args.sre is not None
    if not robust and cfg.results is None:
        raise UsageError("plain evaluation needs --results (or use --tre/--sre to run the tracker)")
    _check_paths(cfg, need_dataset=True, need_results=True)
    sequences = load_dataset(cfg)
    protocol = "tre" if args.tre else (f"sre-{args.sre}" if args.sre else "plain")
    report = MetricReport(protocol)
    success, prec = {}, {}
    if robust:
        tracker = Tracker(_model(cfg), cfg.tracker)

        def run(seq, start, init_box):
            return tracker.run_sequence(seq, start, init_box)

    for seq in sequences:
        if args.tre:
            row = run_tre(run, seq, args.segments)
        elif args.sre:
            row = run_sre(run, seq, args.sre)
        else:
            boxes = _result_boxes(cfg, seq)
            row = evaluate_boxes(boxes, seq.boxes)
            p, g = paired(boxes, seq.boxes)
            success[seq.name] = success_curve([iou(a, b) for a, b in zip(p, g)])
            prec[seq.name] = precision_curve(center_errors(p, g))
        report.add(seq.name, row)
    out = Path(cfg.out)
    path = report.save(out / f"report_{protocol}.json")
    if success:
        mean_s = np.mean(list(success.values()), axis=0)
        mean_p = np.mean(list(prec.values()), axis=0)
        plot_curves({"overall": mean_s}, {"overall": mean_p}, out / "plots")
    print(report.summary())
    print(f"report: {path}")
    return 0


def cmd_plot(cfg: RunConfig, args) -> int:
    if cfg.results is None:
        raise UsageError("plot needs --results")
    if args.every < 1:
        raise UsageError("--every must be positive")
    _check_paths(cfg, need_dataset=True, need_results=True)
    out = Path(cfg.out) / "plots"
    success, prec = {}, {}
    for seq in load_dataset(cfg):
        boxes = _result_boxes(cfg, seq)
        for i in range(0, len(seq), args.every):
            plot_boxes(seq.frame(i), {"gt": seq.boxes[i], "result": boxes[i]}, out / seq.name / f"{i:05d}.png")
        p, g = paired(boxes, seq.boxes)
        success[seq.name] = success_curve([iou(a, b) for a, b in zip(p, g)])
        prec[seq.name] = precision_curve(center_errors(p, g))
    for path in plot_curves(success, prec, out):
        print(path)
    return 0


COMMANDS = {
    "track": cmd_track,
    "train-toy": cmd_train_toy,
    "describe": cmd_describe,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError, VocabularyError, WeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # any module failure during compute
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
