"""Position-error statistics and NWLS-vs-WLS comparison tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    median: float
    sd: float
    n: int


@dataclass(frozen=True)
class CdfCurve:
    values: np.ndarray
    probabilities: np.ndarray

    def __call__(self, x: float) -> float:
        """Fraction of errors <= x (right-continuous)."""
        k = int(np.searchsorted(self.values, x, side="right"))
        return 0.0 if k == 0 else float(self.probabilities[k - 1])


def position_errors(estimates, truth) -> np.ndarray:
    """Euclidean error of each estimate against its nearest ground-truth pose.

    Both arguments are sequences of ``(t, x, y)``. An estimate is kept only
    if a truth timestamp lies within half the median truth sample period.
    """
    est = np.asarray(estimates, dtype=float).reshape(-1, 3)
    gt = np.asarray(truth, dtype=float).reshape(-1, 3)
    if len(est) == 0 or len(gt) == 0:
        raise ValueError("no estimates or no ground truth")
    gt = gt[np.argsort(gt[:, 0], kind="stable")]
    tg = gt[:, 0]
    half = 0.5 * float(np.median(np.diff(tg))) if len(tg) > 1 else 0.0
    idx = np.clip(np.searchsorted(tg, est[:, 0]), 1, max(len(tg) - 1, 1))
    if len(tg) == 1:
        nearest = np.zeros(len(est), dtype=int)
    else:
        left_closer = np.abs(est[:, 0] - tg[idx - 1]) <= np.abs(tg[idx] - est[:, 0])
        nearest = np.where(left_closer, idx - 1, idx)
    ok = np.abs(tg[nearest] - est[:, 0]) <= half + 1e-9
    if not np.any(ok):
        raise ValueError("no estimate could be aligned with ground truth")
    d = est[ok, 1:] - gt[nearest[ok], 1:]
    return np.hypot(d[:, 0], d[:, 1])


def summarize(errors: Sequence[float]) -> ErrorSummary:
    """Mean, median and population SD."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("no errors to summarize")
    return ErrorSummary(float(e.mean()), float(np.median(e)), float(e.std()), int(e.size))


def improvement(baseline_mean: float, candidate_mean: float) -> float:
    """Percentage reduction of the candidate's mean error w.r.t. the baseline."""
    if not baseline_mean > 0:
        raise ValueError("baseline mean error must be positive")
    return 100.0 * (baseline_mean - candidate_mean) / baseline_mean


def cdf(errors: Sequence[float]) -> CdfCurve:
    """Empirical CDF: distinct sorted errors with the fraction of errors <= each."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("no errors")
    values, counts = np.unique(e, return_counts=True)
    return CdfCurve(values, np.cumsum(counts) / e.size)


@dataclass(frozen=True)
class ReportRow:
    approach: str
    summary: ErrorSummary
    improvement: float | None   # None for the baseline


def compare_report(baseline_name: str, baseline_errors, candidates: Mapping[str, Sequence[float]]):
    """Rows for the baseline and each candidate plus their CDF curves."""
    base = summarize(baseline_errors)
    rows = [ReportRow(baseline_name, base, None)]
    curves = {baseline_name: cdf(baseline_errors)}
    for name, errs in candidates.items():
        s = summarize(errs)
        rows.append(ReportRow(name, s, improvement(base.mean, s.mean)))
        curves[name] = cdf(errs)
    return rows, curves


def format_table(rows: Sequence[ReportRow], title: str = "") -> str:
    header = ("Approach", "Mean", "Median", "SD", "Improvement")
    body = []
    for r in rows:
        imp = "Nil" if r.improvement is None else f"{r.improvement:.2f}%"
        body.append((r.approach, f"{r.summary.mean:.2f}", f"{r.summary.median:.2f}",
                     f"{r.summary.sd:.2f}", imp))
    widths = [max(len(x[i]) for x in [header, *body]) for i in range(len(header))]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    lines = [title] if title else []
    lines += [fmt(header), "  ".join("-" * w for w in widths)]
    lines += [fmt(b) for b in body]
    return "\n".join(lines) + "\n"


def report_csv_rows(rows: Sequence[ReportRow]):
    yield ("approach", "mean", "median", "sd", "n", "improvement")
    for r in rows:
        imp = "" if r.improvement is None else repr(r.improvement)
        yield (r.approach, repr(r.summary.mean), repr(r.summary.median),
               repr(r.summary.sd), str(r.summary.n), imp)
