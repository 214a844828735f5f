"""Command-line interface: ``uwbnlos <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .config import ConfigError, load_pipeline, load_scenario, parse_environment
from .features import extract_features
from .geometry import Point2
from .nn import ABLATIONS, load_model, predict_rows, save_model
from .wls import SolverConfig
from .pipeline import evaluate_files, localize, run_pipeline, simulate_scenario, train_classifier


def _point(text: str) -> Point2:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y got {text!r}") from None
    return Point2(x, y)


def _ids(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ids, got {text!r}") from None


def cmd_simulate(args) -> int:
    sc = load_scenario(args.config, args.seed)
    samples, poses = simulate_scenario(sc)
    out = Path(args.out)
    truth = Path(args.truth) if args.truth else out.with_name(out.stem + "_truth.csv")
    io.write_dataset(out, samples)
    io.write_truth(truth, poses)
    print(f"wrote {len(samples)} samples to {out} and {len(poses)} poses to {truth}")
    return 0


def cmd_train(args) -> int:
    sc = load_scenario(args.config, args.seed)
    cfg = sc.train
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    samples = io.read_dataset(args.dataset)
    res = train_classifier(samples, cfg, ABLATIONS[args.inputs])
    save_model(res.model, args.out)
    if res.metrics is not None:
        print(f"held-out accuracy {res.metrics.accuracy:.2f}%  precision {res.metrics.precision:.4f}")
    print(f"model ({args.inputs}: {len(res.model.input_selection)} inputs) written to {args.out}")
    return 0


def cmd_classify(args) -> int:
    model = load_model(args.model)
    samples = sorted(io.read_dataset(args.dataset), key=lambda s: s.t)
    rows = extract_features(samples)
    io.write_features(args.out, rows, predict_rows(model, rows))
    print(f"wrote {len(rows)} classified rows to {args.out}")
    return 0


def _environment(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "anchors" in doc and "environment" not in doc:
        return parse_environment(doc), None
    sc = load_scenario(path)
    return sc.environment, sc


def cmd_localize(args) -> int:
    try:
        env, sc = _environment(args.config)
    except OSError as exc:
        raise ConfigError(f"{args.config}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
    if args.nwls == (args.model is not None):
        raise ValueError("give exactly one of --model or --nwls")
    model = None if args.nwls else load_model(args.model)
    start = args.start or (sc.start if sc else None)
    if start is None:
        raise ValueError("--start is required when the config has no trajectory")
    solver = sc.solver if sc else None
    times, est = localize(io.read_dataset(args.dataset), env, model, start,
                          solver or SolverConfig(), args.anchor_ids)
    io.write_estimates(args.out, times, est)
    print(f"wrote {len(est)} estimates to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    rows = evaluate_files(args.estimates, args.truth, args.out, args.names)
    for r in rows:
        imp = "Nil" if r.improvement is None else f"{r.improvement:.2f}%"
        print(f"{r.approach}: mean {r.summary.mean:.3f} m  improvement {imp}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_pipeline(args.config, args.seed)
    results = run_pipeline(cfg, args.out)
    for (name, label), rows in results.items():
        print(f"{name} ({label} anchors)")
        for r in rows:
            imp = "Nil" if r.improvement is None else f"{r.improvement:.2f}%"
            print(f"  {r.approach:16s} mean {r.summary.mean:.3f} m  {imp}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uwbnlos", description="NLOS-aware UWB localization toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a labeled ranging dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="ground-truth CSV (default: <out>_truth.csv)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a LOS classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--inputs", choices=sorted(ABLATIONS), default="all")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="write features and LOS probabilities")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("localize", help="estimate positions (WLS with a model, or NWLS)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True, help="scenario or environment config with anchors")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model")
    g.add_argument("--nwls", action="store_true")
    p.add_argument("--start", type=_point, help="start position x,y")
    p.add_argument("--anchor-ids", type=_ids, help="comma-separated subset of anchors to use")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="compare estimate files; the first is the baseline")
    p.add_argument("estimates", nargs="+")
    p.add_argument("--truth", required=True)
    p.add_argument("--names", type=lambda s: s.split(","))
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the full train/test experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
