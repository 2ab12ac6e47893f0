"""Error metrics and Monte-Carlo summaries."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from transmc.datasets import MaskedDataset

SUMMARY_COLUMNS = ("method", "scheme", "mean", "median", "min", "max", "sd")
CURVE_COLUMNS = ("k_sources", "mean_err", "sd")


@dataclass(frozen=True)
class RepSummary:
    errors: tuple[float, ...]
    mean: float
    median: float
    min: float
    max: float
    sd: float


def rel_frob_error(est, truth) -> float:
    """||est - truth||_F / ||truth||_F."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ValueError("truth matrix is zero; relative error undefined")
    return float(np.linalg.norm(est - truth)) / denom


def holdout_errors(est, test: MaskedDataset) -> tuple[float, float]:
    """(E, RE) over the held-out entries.

    E = sqrt(sum (est[i,j] - y)^2); RE = E / sqrt(sum y^2).
    """
    est = np.asarray(est, dtype=np.float64)
    if est.shape != test.shape:
        raise ValueError("estimate shape does not match the test set")
    diff = est[test.rows, test.cols] - test.values
    e = math.sqrt(float(diff @ diff))
    denom_sq = float(test.values @ test.values)
    if denom_sq == 0.0:
        raise ValueError("all test values are zero; relative error undefined")
    return e, e / math.sqrt(denom_sq)


def summarize(errors) -> RepSummary:
    """Mean, median, min, max and sample standard deviation of replicate errors.

    Reductions run over the sorted sequence, so the summary is exactly
    invariant to the order the errors arrive in.
    """
    arr = np.asarray(list(errors), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty error sequence")
    raw = tuple(float(x) for x in arr)
    arr = np.sort(arr)
    sd = 0.0 if arr.size == 1 else float(np.std(arr, ddof=1))
    return RepSummary(
        errors=raw,
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        min=float(arr.min()),
        max=float(arr.max()),
        sd=sd,
    )


def _fmt(x) -> str:
    return f"{x:.12g}" if isinstance(x, float) else str(x)


def write_summary_csv(path, rows):
    """rows: iterable of (method, scheme, RepSummary)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for method, scheme, s in rows:
            writer.writerow(
                [method, scheme, _fmt(s.mean), _fmt(s.median), _fmt(s.min),
                 _fmt(s.max), _fmt(s.sd)]
            )


def write_curve_csv(path, points):
    """points: iterable of (k_sources, mean_err, sd)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for k, mean_err, sd in points:
            writer.writerow([k, _fmt(float(mean_err)), _fmt(float(sd))])
