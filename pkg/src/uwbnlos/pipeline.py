"""Orchestration: simulate -> features -> train -> classify -> localize -> evaluate."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .config import PipelineConfig, ScenarioConfig
from .evaluation import compare_report, format_table, position_errors, report_csv_rows
from .features import correlation_report, extract_features
from .geometry import Environment, Point2, generate_trajectory, simulate_campaign, true_ranges
from .nn import (ABLATIONS, MlpModel, TrainConfig, evaluate, init_model, predict_rows, rows_xy,
                 save_model, train)
from .rng import Rng
from .wls import SolverConfig, WlsProblem, solve_trajectory, weights_from_probabilities

log = logging.getLogger(__name__)

# gap between simulated passes; longer than the feature window so passes never mix
PASS_GAP = 1.0
SPLIT_STREAM = 7


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def simulate_scenario(sc: ScenarioConfig):
    """All passes of a scenario, time-shifted to follow each other.

    Returns ``(samples, poses)`` with pass ``k`` drawing from substream ``k``.
    """
    samples, poses = [], []
    t0 = 0.0
    for k, spec in enumerate(sc.trajectories):
        traj = generate_trajectory(spec.waypoints, spec.speed, spec.rate, t0=t0)
        samples += simulate_campaign(sc.environment, traj, sc.noise, pass_index=k)
        poses += traj
        t0 = traj[-1].t + PASS_GAP
    return samples, poses


def split_indices(n: int, seed: int, train_fraction: float = 0.8):
    order = Rng(seed).substream(SPLIT_STREAM).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(order[:cut]), np.sort(order[cut:])


@dataclass
class TrainResult:
    model: MlpModel
    history: list
    metrics: object


def train_classifier(samples, config: TrainConfig, inputs: Sequence[str]) -> TrainResult:
    """Seeded 80/20 split; returns the model and its held-out metrics."""
    rows = extract_features(samples)
    if any(r.label is None for r in rows):
        raise ValueError("dataset has unlabeled rows; generate labeled data with 'simulate'")
    X, y = rows_xy(rows, inputs)
    if len(set(y.tolist())) < 2:
        raise ValueError("dataset needs both LOS (1) and NLOS (0) labels")
    tr, te = split_indices(len(y), config.seed)
    model, history = train(init_model(config, inputs), X[tr], y[tr], config)
    metrics = evaluate(model, X[te], y[te]) if len(te) else None
    return TrainResult(model, history, metrics)


def check_anchor_ids(samples, env: Environment):
    known = {a.id for a in env.anchors}
    unknown = sorted({s.anchor_id for s in samples} - known)
    if unknown:
        raise ValueError(f"dataset references anchor ids not in the anchor config: {unknown}")


def localize(samples, env: Environment, model: Optional[MlpModel], start: Point2,
             solver: SolverConfig, anchor_ids: Optional[Sequence[int]] = None):
    """Per-timestamp WLS fixes (NWLS when ``model`` is None).

    Returns ``(times, estimates)``.
    """
    check_anchor_ids(samples, env)
    if anchor_ids is not None:
        keep = set(anchor_ids)
        samples = [s for s in samples if s.anchor_id in keep]
    samples = sorted(samples, key=lambda s: s.t)  # stable: keeps anchor order within a timestamp
    if not samples:
        raise ValueError("no samples to localize")
    rows = extract_features(samples)
    if model is None:
        weights = np.ones(len(rows))
    else:
        weights = weights_from_probabilities(predict_rows(model, rows), solver.weight_floor)

    groups: "OrderedDict[float, list[int]]" = OrderedDict()
    for i, r in enumerate(rows):
        groups.setdefault(r.t, []).append(i)
    problems = []
    for t, idx in groups.items():
        if len(idx) < 3:
            problems.append(None)
            continue
        problems.append(WlsProblem(
            anchors=[env.anchor(rows[i].anchor_id).position for i in idx],
            ranges=[rows[i].features.range for i in idx],
            weights=weights[idx],
            initial_guess=start,
            bounds=env.bounds,
            anchor_ids=[rows[i].anchor_id for i in idx]))
    return list(groups), solve_trajectory(problems, start, solver)


def evaluate_files(estimate_paths: Sequence, truth_path, out_dir, names: Optional[Sequence[str]] = None,
                   title: str = ""):
    """Compare estimate files against ground truth; the first is the baseline.

    Writes ``report.txt``, ``report.csv`` and ``cdf_<name>.csv`` into ``out_dir``.
    """
    truth = io.read_truth(truth_path)
    gt = [(p.t, p.position.x, p.position.y) for p in truth]
    names = list(names) if names else [Path(p).stem for p in estimate_paths]
    if len(names) != len(estimate_paths):
        raise ValueError("one name per estimate file required")
    errs = OrderedDict()
    for name, path in zip(names, estimate_paths):
        est = io.read_estimates(path)
        errs[name] = position_errors(est[:, :3], gt)
    base = names[0]
    rows, curves = compare_report(base, errs[base], OrderedDict((n, errs[n]) for n in names[1:]))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(format_table(rows, title), encoding="utf-8")
    io.write_table(out_dir / "report.csv", report_csv_rows(rows))
    for name, curve in curves.items():
        io.write_cdf(out_dir / f"cdf_{name}.csv", curve)
    return rows


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, extra: dict) -> Path:
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    doc = dict(extra)
    doc["files"] = [{"path": p.relative_to(out_dir).as_posix(), "bytes": p.stat().st_size,
                     "sha256": _sha256(p)} for p in files]
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _stage(name):
    def wrap(fn):
        def run(*a, **kw):
            log.info("stage %s", name)
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
                raise StageError(name, exc) from exc
        return run
    return wrap


def run_pipeline(cfg: PipelineConfig, out_dir) -> dict:
    """Full experiment; returns the summary rows keyed by (scenario, anchors)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsc = cfg.train_scenario

    @_stage("simulate-train")
    def sim_train():
        samples, poses = simulate_scenario(tsc)
        io.write_dataset(out / "train" / "dataset.csv", samples)
        io.write_truth(out / "train" / "truth.csv", poses)
        rows = extract_features(samples)
        corr = correlation_report(rows, true_ranges(samples, poses, tsc.environment))
        io.write_table(out / "train" / "correlation.csv",
                       [("feature", "spearman")] + [(k, repr(v)) for k, v in corr.items()])
        return samples

    @_stage("train")
    def train_all(samples):
        models, metric_rows = {}, [("model", "inputs", "accuracy", "precision")]
        for name, sel in ABLATIONS.items():
            res = train_classifier(samples, tsc.train, sel)
            models[name] = res.model
            save_model(res.model, out / "models" / f"{name}.json")
            metric_rows.append((name, " ".join(sel), repr(res.metrics.accuracy), repr(res.metrics.precision)))
            log.info("model %s: accuracy %.2f precision %.4f", name, res.metrics.accuracy, res.metrics.precision)
        io.write_table(out / "models" / "metrics.csv", metric_rows)
        return models

    samples = sim_train()
    models = train_all(samples)

    summary = [("scenario", "anchors", "approach", "mean", "median", "sd", "improvement")]
    results = {}
    for sc in cfg.test_scenarios:
        @_stage(f"simulate-{sc.name}")
        def sim_test():
            s, p = simulate_scenario(sc)
            io.write_dataset(out / sc.name / "dataset.csv", s)
            io.write_truth(out / sc.name / "truth.csv", p)
            return s

        test_samples = sim_test()
        subsets = sc.anchor_subsets or {str(len(sc.environment.anchors)): [a.id for a in sc.environment.anchors]}
        for label, ids in subsets.items():
            sub = out / sc.name / f"{label}_anchors"

            @_stage(f"localize-{sc.name}-{label}")
            def loc():
                paths, names = [], []
                for name, model in [("nwls", None)] + [(f"wls_{k}", m) for k, m in models.items()]:
                    times, est = localize(test_samples, sc.environment, model, sc.start, sc.solver, ids)
                    path = sub / f"estimates_{name}.csv"
                    io.write_estimates(path, times, est)
                    paths.append(path)
                    names.append(name)
                return paths, names

            paths, names = loc()

            @_stage(f"evaluate-{sc.name}-{label}")
            def ev():
                return evaluate_files(paths, out / sc.name / "truth.csv", sub, names,
                                      title=f"{sc.name}, {len(ids)} anchors")

            rows = ev()
            results[(sc.name, label)] = rows
            for r in rows:
                summary.append((sc.name, label, r.approach, f"{r.summary.mean:.6f}",
                                f"{r.summary.median:.6f}", f"{r.summary.sd:.6f}",
                                "" if r.improvement is None else f"{r.improvement:.4f}"))
    io.write_table(out / "summary.csv", summary)
    resolved = json.dumps(cfg.source, sort_keys=True).encode("utf-8")
    write_manifest(out, {"seed": cfg.seed, "config_sha256": hashlib.sha256(resolved).hexdigest()})
    return results
