"""Per-measurement NLOS features and rank-correlation diagnostics."""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

FEATURE_NAMES = ("range", "rx_rssi", "fp_rssi", "rssd", "range_std")
DEFAULT_WINDOW = 0.5
# slack on the window's lower edge so 0.1 s grids do not lose samples to rounding
_WINDOW_EPS = 1e-9


@dataclass(frozen=True)
class RangingSample:
    t: float
    anchor_id: int
    range: float
    rx_rssi: float
    fp_rssi: float
    los_label: Optional[int] = None

    def __post_init__(self):
        if not self.range >= 0:
            raise ValueError(f"range must be >= 0, got {self.range}")
        if self.los_label not in (None, 0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.los_label}")


class FeatureVector(NamedTuple):
    range: float
    rx_rssi: float
    fp_rssi: float
    rssd: float
    range_std: float

    def select(self, names: Sequence[str]) -> list[float]:
        return [getattr(self, n) for n in names]


class FeatureRow(NamedTuple):
    t: float
    anchor_id: int
    features: FeatureVector
    label: Optional[int]


def compute_rssd(rx_rssi: float, fp_rssi: float) -> float:
    """Received minus first-path signal strength, in dB."""
    return rx_rssi - fp_rssi


def compute_window_std(samples: Sequence[RangingSample], t_now: float,
                       window: float = DEFAULT_WINDOW) -> float:
    """Population std of ranges with ``t`` in ``[t_now - window, t_now]``.

    ``samples`` must be one anchor's stream sorted by time. Fewer than two
    samples in the window gives 0.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    times = [s.t for s in samples]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("samples must be sorted by time")
    lo = bisect.bisect_left(times, t_now - window - _WINDOW_EPS)
    hi = bisect.bisect_right(times, t_now)
    return _pop_std([s.range for s in samples[lo:hi]])


def _pop_std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float)))


def extract_features(samples: Sequence[RangingSample],
                     window: float = DEFAULT_WINDOW) -> list[FeatureRow]:
    """Feature rows in the same order as ``samples``.

    The window STD looks only at earlier-or-equal samples of the same anchor.
    """
    streams: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        streams[s.anchor_id].append(i)

    stds = [0.0] * len(samples)
    for anchor_id, idx in streams.items():
        times = [samples[i].t for i in idx]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError(f"anchor {anchor_id}: samples not sorted by time")
        ranges = [samples[i].range for i in idx]
        for j, i in enumerate(idx):
            lo = bisect.bisect_left(times, times[j] - window - _WINDOW_EPS)
            hi = bisect.bisect_right(times, times[j])
            stds[i] = _pop_std(ranges[lo:hi])

    rows = []
    for s, sd in zip(samples, stds):
        fv = FeatureVector(s.range, s.rx_rssi, s.fp_rssi, compute_rssd(s.rx_rssi, s.fp_rssi), sd)
        rows.append(FeatureRow(s.t, s.anchor_id, fv, s.los_label))
    return rows


def feature_matrix(rows: Iterable[FeatureRow], names: Sequence[str] = FEATURE_NAMES) -> np.ndarray:
    return np.array([r.features.select(names) for r in rows], dtype=float).reshape(-1, len(names))


def rankdata(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=float)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation (Pearson correlation of average ranks).

    Raises:
        ValueError: on length mismatch, fewer than two points, or a
            constant input whose ranks have zero variance.
    """
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    rx = rankdata(xs)
    ry = rankdata(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise ValueError("constant input: rank correlation undefined")
    r = float(rx @ ry) / float(np.sqrt(sxx * syy))
    return min(1.0, max(-1.0, r))


CORRELATION_FEATURES = ("fp_rssi", "rx_rssi", "rssd", "range_std")


def correlation_report(rows: Sequence[FeatureRow], true_ranges: Sequence[float]) -> dict[str, float]:
    """Spearman coefficient of each signal feature against ``range - true range``."""
    if len(rows) != len(true_ranges):
        raise ValueError("rows and true_ranges differ in length")
    errors = np.array([r.features.range for r in rows]) - np.asarray(true_ranges, dtype=float)
    return {name: spearman([getattr(r.features, name) for r in rows], errors)
            for name in CORRELATION_FEATURES}
