"""Experiment reports: tabulated rows, log-log slope fits, CSV/JSON output."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ExperimentReport:
    """Rows plus an optional fitted scaling exponent and run metadata."""

    columns: tuple
    rows: list
    config: dict = field(default_factory=dict)
    fitted_slope: float | None = None
    slope_ci: float | None = None
    expected_slope: float | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])

    def summary_dict(self) -> dict:
        out = {
            "slope": self.fitted_slope,
            "ci": self.slope_ci,
            "expected_slope": self.expected_slope,
            "config": _jsonable(self.config),
        }
        return out

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def check_geometric(lams, rel_tol: float = 1e-9) -> None:
    lams = np.asarray(lams, dtype=np.float64)
    if lams.size < 4:
        raise ValueError("slope fits require at least 4 points")
    ratios = lams[1:] / lams[:-1]
    if np.any(np.abs(ratios - ratios[0]) > rel_tol * ratios[0]):
        raise ValueError("lambda values must be geometrically spaced")


def fit_loglog(lams, values, log_sigmas=None) -> tuple[float, float]:
    """OLS slope of log(values) vs log(lams) with a propagated 95% interval.

    The interval combines the per-point log-stderr (propagated through the
    OLS weights) with the residual scatter, in quadrature.
    """
    check_geometric(lams)
    x = np.log(np.asarray(lams, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    w = (x - xbar) / sxx
    slope = float(np.sum(w * y))
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    dof = max(len(x) - 2, 1)
    var_resid = float(np.sum(resid**2)) / dof / sxx
    var_prop = 0.0
    if log_sigmas is not None:
        var_prop = float(np.sum((w * np.asarray(log_sigmas)) ** 2))
    ci = 1.96 * float(np.sqrt(var_resid + var_prop))
    return slope, ci
