"""Time averages of play and the growth of score differences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..games import Game, nash_gap_batch
from .stats import loglog_slope


class AveragingError(ValueError):
    pass


@dataclass
class TimeAverage:
    times: np.ndarray
    Xbar: np.ndarray
    gap: np.ndarray | None = None


def time_average(trajectory, game: Game | None = None) -> TimeAverage:
    """Running average (1/t) int_0^t X over the stored grid, X(0) at t = 0.

    Uses the integral accumulated at every step when it was stored, else the
    trapezoid rule on the stored points.  With ``game`` the Nash gap of each
    averaged profile is included.
    """
    times = np.asarray(trajectory.times, dtype=float)
    X = np.asarray(trajectory.X, dtype=float)
    if times.size == 0 or X.size == 0:
        raise AveragingError("empty trajectory")
    Xint = getattr(trajectory, "Xint", None)
    if Xint is None:
        Xint = cumulative_trapezoid(X, times, axis=0, initial=0.0)
    Xbar = np.empty_like(X)
    Xbar[0] = X[0]
    Xbar[1:] = Xint[1:] / times[1:, None]
    gap = nash_gap_batch(game, game.split(Xbar)) if game is not None else None
    return TimeAverage(times=times, Xbar=Xbar, gap=gap)


@dataclass
class GrowthFit:
    slope: float
    n_points: int
    window: tuple

    @property
    def sublinear(self) -> bool:
        return self.slope < 0.95


def score_difference_growth(trajectory, a: int, b: int, min_points: int = 10) -> GrowthFit:
    """Log-log slope of |Y_a - Y_b| against t over the last decade [T/10, T].

    ``a`` and ``b`` are flat coordinates of the same player.
    """
    t = np.asarray(trajectory.times, dtype=float)
    Y = np.asarray(trajectory.Y, dtype=float)
    T = t[-1]
    sel = (t >= T / 10) & (t > 0)
    diff = np.abs(Y[sel, a] - Y[sel, b])
    ok = diff > 0
    if ok.sum() < min_points:
        raise AveragingError(f"only {int(ok.sum())} usable samples in [T/10, T]; need {min_points}")
    return GrowthFit(slope=loglog_slope(t[sel][ok], diff[ok]), n_points=int(ok.sum()),
                     window=(float(T / 10), float(T)))
