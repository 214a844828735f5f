"""CSV readers and writers for datasets, poses, features and estimates.

Floats are written with ``repr`` so every file reads back bit-exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .features import FeatureRow, FeatureVector, RangingSample
from .geometry import Point2, Pose

DATASET_HEADER = ["t", "anchor_id", "range", "rx_rssi", "fp_rssi", "label"]
TRUTH_HEADER = ["t", "x", "y"]
FEATURE_HEADER = ["t", "anchor_id", "range", "rx_rssi", "fp_rssi", "rssd", "range_std", "label"]
ESTIMATE_HEADER = ["t", "x", "y", "cost", "iterations", "converged"]
CDF_HEADER = ["error", "probability"]


class DataFormatError(ValueError):
    pass


def _f(x: float) -> str:
    return repr(float(x))


def _write(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read(path, required: Sequence[str], optional: Sequence[str] = ()):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        expected = list(required)
        if header != expected and header != expected + [o for o in optional if o in header]:
            raise DataFormatError(f"{path}: header {header} does not match {expected + list(optional)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, dict(zip(header, row))))
        return header, rows


def _num(path, lineno, rec, key, cast=float):
    try:
        v = cast(rec[key])
    except (TypeError, ValueError):
        raise DataFormatError(f"{path}:{lineno}: column {key!r}: cannot parse {rec[key]!r}") from None
    if cast is float and not math.isfinite(v) and key != "cost":
        raise DataFormatError(f"{path}:{lineno}: column {key!r}: non-finite value")
    return v


def _label(path, lineno, raw: str) -> Optional[int]:
    raw = raw.strip()
    if raw == "":
        return None
    if raw not in ("0", "1"):
        raise DataFormatError(f"{path}:{lineno}: column 'label': expected 0, 1 or empty, got {raw!r}")
    return int(raw)


def write_dataset(path, samples: Sequence[RangingSample]) -> None:
    _write(path, DATASET_HEADER, (
        (_f(s.t), s.anchor_id, _f(s.range), _f(s.rx_rssi), _f(s.fp_rssi),
         "" if s.los_label is None else s.los_label) for s in samples))


def read_dataset(path) -> list[RangingSample]:
    header, rows = _read(path, DATASET_HEADER[:-1], ["label"])
    out = []
    for lineno, rec in rows:
        try:
            out.append(RangingSample(
                _num(path, lineno, rec, "t"), _num(path, lineno, rec, "anchor_id", int),
                _num(path, lineno, rec, "range"), _num(path, lineno, rec, "rx_rssi"),
                _num(path, lineno, rec, "fp_rssi"),
                _label(path, lineno, rec["label"]) if "label" in rec else None))
        except DataFormatError:
            raise
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_truth(path, poses: Sequence[Pose]) -> None:
    _write(path, TRUTH_HEADER, ((_f(p.t), _f(p.position.x), _f(p.position.y)) for p in poses))


def read_truth(path) -> list[Pose]:
    _, rows = _read(path, TRUTH_HEADER)
    return [Pose(_num(path, n, r, "t"), Point2(_num(path, n, r, "x"), _num(path, n, r, "y")))
            for n, r in rows]


def write_features(path, rows: Sequence[FeatureRow], probabilities=None) -> None:
    header = FEATURE_HEADER + (["probability"] if probabilities is not None else [])

    def gen():
        for i, r in enumerate(rows):
            f = r.features
            cells = [_f(r.t), r.anchor_id, _f(f.range), _f(f.rx_rssi), _f(f.fp_rssi),
                     _f(f.rssd), _f(f.range_std), "" if r.label is None else r.label]
            if probabilities is not None:
                cells.append(_f(probabilities[i]))
            yield cells

    _write(path, header, gen())


def read_features(path):
    """Feature rows and the probability column (or None when absent)."""
    header, rows = _read(path, FEATURE_HEADER, ["probability"])
    out, probs = [], []
    for n, r in rows:
        fv = FeatureVector(*(_num(path, n, r, k) for k in FeatureVector._fields))
        out.append(FeatureRow(_num(path, n, r, "t"), _num(path, n, r, "anchor_id", int), fv,
                              _label(path, n, r["label"])))
        if "probability" in r:
            probs.append(_num(path, n, r, "probability"))
    return out, (np.array(probs) if "probability" in header else None)


def write_estimates(path, times: Sequence[float], estimates) -> None:
    _write(path, ESTIMATE_HEADER, (
        (_f(t), _f(e.position[0]), _f(e.position[1]), _f(e.cost), e.iterations, int(e.converged))
        for t, e in zip(times, estimates)))


def read_estimates(path) -> np.ndarray:
    """Estimates as an array of ``(t, x, y, cost, iterations, converged)`` rows."""
    _, rows = _read(path, ESTIMATE_HEADER)
    return np.array([[_num(path, n, r, k) for k in ESTIMATE_HEADER] for n, r in rows],
                    dtype=float).reshape(-1, len(ESTIMATE_HEADER))


def write_cdf(path, curve) -> None:
    _write(path, CDF_HEADER, ((_f(v), _f(p)) for v, p in zip(curve.values, curve.probabilities)))


def read_cdf(path) -> np.ndarray:
    _, rows = _read(path, CDF_HEADER)
    return np.array([[_num(path, n, r, "error"), _num(path, n, r, "probability")] for n, r in rows])


def write_table(path, rows: Iterable[Sequence]) -> None:
    rows = list(rows)
    _write(path, rows[0], rows[1:])
