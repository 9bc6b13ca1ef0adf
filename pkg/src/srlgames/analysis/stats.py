"""Small statistical helpers shared by the checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def wilson_halfwidth(k: int, n: int, level: float = 0.95) -> float:
    lo, hi = wilson_interval(k, n, level)
    return 0.5 * (hi - lo)


def loglog_slope(t, y) -> float:
    """Least-squares slope of log y against log t (positive samples only)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (t > 0) & (y > 0)
    if keep.sum() < 2:
        raise ValueError("not enough positive samples for a log-log fit")
    return float(np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)[0])


@dataclass
class EnsembleSummary:
    """Per-time statistics of a scalar tracked across runs.

    ``values`` is ``(n_runs, n_times)``; threshold counts are the number of
    runs strictly above each threshold at each time.
    """

    n_runs: int
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    quantiles: dict
    exceedances: dict = field(default_factory=dict)
    seeds: tuple = ()

    @classmethod
    def from_values(cls, times, values, levels=(0.05, 0.25, 0.5, 0.75, 0.95), thresholds=(),
                    seeds=()):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        n = values.shape[0]
        q = np.quantile(values, levels, axis=0)
        return cls(n_runs=n, times=np.asarray(times, dtype=float), mean=values.mean(axis=0),
                   var=values.var(axis=0, ddof=1) if n > 1 else np.zeros(values.shape[1]),
                   quantiles={float(a): q[i] for i, a in enumerate(levels)},
                   exceedances={float(c): (values > c).sum(axis=0) for c in thresholds},
                   seeds=tuple(seeds))

    def rows(self):
        """One dict per time point, for CSV export."""
        for i, t in enumerate(self.times):
            row = {"t": float(t), "mean": float(self.mean[i]), "var": float(self.var[i])}
            for a, q in self.quantiles.items():
                row[f"q{a:g}"] = float(q[i])
            for c, cnt in self.exceedances.items():
                row[f"above_{c:g}"] = int(cnt[i])
            yield row
