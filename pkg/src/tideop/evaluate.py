"""Error metrics, residual-vs-error agreement, and the results table."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric is not defined for this input (zero norm or variance)."""


def rel_l2(pred, ref):
    """Relative L2 error ||pred - ref|| / ||ref|| over flattened fields."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ValueError("prediction and reference shapes differ")
    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise UndefinedMetricError("reference field has zero norm")
    return float(np.linalg.norm(pred - ref) / denom)


@dataclass(frozen=True)
class ErrorSeries:
    values: np.ndarray
    min: float
    mean: float
    max: float


def error_series(preds, refs):
    """Per-snapshot rel_l2 along the leading axis, with summary stats."""
    preds = np.asarray(preds, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    if preds.shape != refs.shape:
        raise ValueError("prediction and reference shapes differ")
    vals = np.array([rel_l2(p, r) for p, r in zip(preds, refs)])
    return ErrorSeries(vals, float(vals.min()), float(vals.mean()), float(vals.max()))


def pearson(x, y):
    """Pearson correlation; rejects constant inputs."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.linalg.norm(xc)
    sy = np.linalg.norm(yc)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedMetricError("correlation of a constant series is undefined")
    return float(xc @ yc / (sx * sy))


@dataclass(frozen=True)
class CorrelationSummary:
    """Agreement between the residual monitor and the true error.

    mae and rho are averaged over examples; degenerate_perfect marks the
    case where every example had both series constant and identical
    (perfect prediction and perfect reconstruction), where correlation
    is undefined but agreement is exact.
    """

    mae: float
    rho: float
    degenerate_perfect: bool
    n_examples: int


def residual_error_correlation(residual_series, error_series_list):
    """Per-example MAE and Pearson rho between the residual-monitor
    series and the true-error series, averaged over examples."""
    if len(residual_series) != len(error_series_list) or not residual_series:
        raise ValueError("need matching, non-empty per-example series lists")
    maes, rhos = [], []
    degenerate = 0
    for r, e in zip(residual_series, error_series_list):
        r = np.asarray(r, dtype=np.float64)
        e = np.asarray(e, dtype=np.float64)
        if r.shape != e.shape:
            raise ValueError("residual and error series lengths differ")
        maes.append(float(np.mean(np.abs(r - e))))
        try:
            rhos.append(pearson(r, e))
        except UndefinedMetricError:
            if np.array_equal(r, e):
                degenerate += 1
            else:
                raise
    if degenerate == len(residual_series):
        return CorrelationSummary(0.0, float("nan"), True, len(residual_series))
    return CorrelationSummary(
        float(np.mean(maes)), float(np.mean(rhos)), False, len(residual_series)
    )


# ---------------------------------------------------------------------------
# results table


METHOD_ROWS = ("fr", "ar", "piti_euler", "piti_rk4", "piti_abm2")
TABLE_COLUMNS = ("method", "rel_l2_min", "rel_l2_mean", "rel_l2_max",
                 "inference_s_mean", "inference_s_std")


@dataclass
class MethodResult:
    """Terminal-time errors per test example plus repeated timing runs."""

    errors: np.ndarray
    timing_runs: np.ndarray = field(default_factory=lambda: np.array([]))

    def row(self, name):
        e = np.asarray(self.errors, dtype=np.float64)
        cells = [name, f"{e.min():.6g}", f"{e.mean():.6g}", f"{e.max():.6g}"]
        t = np.asarray(self.timing_runs, dtype=np.float64)
        if t.size:
            cells += [f"{t.mean():.6g}", f"{t.std():.6g}"]
        else:
            cells += ["", ""]
        return cells


def report(results, out_dir, error_curves=None):
    """Write table_1.csv (one row per method, gaps for missing runs) and,
    when per-method error-vs-time curves are given, a CSV figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "table_1.csv"
    with open(table, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TABLE_COLUMNS)
        for name in METHOD_ROWS:
            if name in results and results[name] is not None:
                w.writerow(results[name].row(name))
            else:
                w.writerow([name, "", "", "", "", ""])
    if error_curves:
        fig = out_dir / "figure_error_vs_time.csv"
        names = sorted(error_curves)
        times = np.asarray(error_curves[names[0]][0], dtype=np.float64)
        with open(fig, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["time"] + names)
            cols = []
            for n in names:
                t, e = error_curves[n]
                if not np.array_equal(np.asarray(t), times):
                    raise ValueError("error curves must share their time axis")
                cols.append(np.asarray(e, dtype=np.float64))
            for i, t in enumerate(times):
                w.writerow([f"{t:.6g}"] + [f"{c[i]:.6g}" for c in cols])
    return table
