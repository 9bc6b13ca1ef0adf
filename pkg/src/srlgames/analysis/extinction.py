"""Extinction of dominated actions: decay envelope, tail bound and hitting times."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from ..dynamics.schedules import LearningSchedule
from ..regularizers import PenaltyKernel, _invert_dtheta
from .stats import EnsembleSummary


class ExtinctionError(ValueError):
    pass


def initial_offset(kernel: PenaltyKernel, eta0: float, y_alpha: float, y_beta: float) -> float:
    """C = theta'(1) + eta(0) |Y_a(0) - Y_b(0)|."""
    return float(kernel.dtheta(1.0)) + eta0 * abs(y_alpha - y_beta)


def noise_pair_scale(var_alpha, var_beta) -> float:
    """sigma_ab = sqrt(max(var_a + var_b) / 2), maxima taken over the given samples."""
    return math.sqrt(0.5 * float(np.max(np.asarray(var_alpha) + np.asarray(var_beta))))


def _phi(kernel, z):
    if kernel.phi is not None:
        return kernel.phi(z)
    return _invert_dtheta(kernel, z)


def extinction_envelope(kernel: PenaltyKernel, m: float, sigma_ab: float, C: float,
                        schedule: LearningSchedule, eps: float, t):
    """phi[C - eta(t) (m t - 2 (1 + eps) sigma_ab sqrt(t log log t))], phi = (theta')^-1."""
    if not kernel.steep:
        raise ExtinctionError(f"kernel {kernel.name} is not steep; the envelope needs theta'(0+) = -inf")
    if m <= 0:
        raise ExtinctionError("dominance margin m must be positive")
    t = np.asarray(t, dtype=float)
    if sigma_ab > 0:
        if np.any(t < math.e):
            raise ExtinctionError("noisy envelope needs t >= e (log log t must be defined)")
        lil = 2.0 * (1.0 + eps) * sigma_ab * np.sqrt(t * np.log(np.log(t)))
    else:
        lil = 0.0
    out = _phi(kernel, C - schedule.eta(t) * (m * t - lil))
    out = np.minimum(out, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def exceedance_bound(kernel: PenaltyKernel, m: float, sigma_ab: float, C: float,
                     schedule: LearningSchedule, delta: float, t):
    """Upper bound on P(X_a(t) > delta); 1 wherever m t eta(t) < C - theta'(delta)."""
    if m <= 0:
        raise ExtinctionError("dominance margin m must be positive")
    if not 0 < delta < 1:
        raise ExtinctionError("delta must lie in (0, 1)")
    if sigma_ab <= 0:
        raise ExtinctionError("the tail bound needs a positive noise scale")
    t = np.asarray(t, dtype=float)
    eta = schedule.eta(t)
    gap = C - float(kernel.dtheta(delta))
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (m * np.sqrt(t) - gap / (eta * np.sqrt(t))) / (2.0 * sigma_ab)
        out = 0.5 * erfc(arg)
    out = np.where((t > 0) & (m * t * eta >= gap), out, 1.0)
    return float(out) if out.ndim == 0 else out


def hitting_time_bound(kernel: PenaltyKernel, m: float, eta: float, delta: float, C: float) -> float:
    """[C - theta'(delta)]_+ / (eta m) for constant eta and constant noise."""
    if m <= 0:
        raise ExtinctionError("dominance margin m must be positive")
    if eta <= 0:
        raise ExtinctionError("learning rate must be positive")
    return max(C - float(kernel.dtheta(delta)), 0.0) / (eta * m)


@dataclass
class HittingTimes:
    tau: np.ndarray
    censored: np.ndarray
    delta: float
    summary: EnsembleSummary

    @property
    def n_runs(self) -> int:
        return self.tau.size

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    @property
    def flagged(self) -> bool:
        """More than 1% of runs never reached delta within the horizon."""
        return self.censored_fraction > 0.01

    @property
    def mean(self) -> float:
        """Mean over uncensored runs (a lower estimate when runs are censored)."""
        return float(np.mean(self.tau[~self.censored])) if (~self.censored).any() else math.nan

    @property
    def stderr(self) -> float:
        ok = self.tau[~self.censored]
        return float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else math.nan


def _from_tau(tau, censored, delta, seeds=()):
    vals = np.where(censored, np.nan, tau)
    finite = vals[~np.isnan(vals)]
    summary = EnsembleSummary.from_values([0.0], finite[:, None] if finite.size else np.zeros((1, 1)),
                                          seeds=seeds)
    summary.n_runs = tau.size
    return HittingTimes(tau=tau, censored=censored, delta=delta, summary=summary)


def hitting_times_from_monitor(fp: dict, delta: float, seed: int | None = None) -> HittingTimes:
    """Wrap the output of a first-passage monitor."""
    return _from_tau(np.asarray(fp["tau"]), np.asarray(fp["censored"]), delta,
                     () if seed is None else (seed,))


def estimate_hitting_time(ensemble, index: int, delta: float) -> HittingTimes:
    """First passage of X[index] to ``delta`` or below, with censoring flags.

    ``ensemble`` is a list of trajectories or an ensemble result carrying a
    first-passage monitor for the same coordinate and level.
    """
    if hasattr(ensemble, "monitors") and "first_passage" in getattr(ensemble, "monitors", {}):
        return hitting_times_from_monitor(ensemble.monitors["first_passage"], delta, ensemble.seed)
    trajs = ensemble.trajectories() if hasattr(ensemble, "trajectories") else list(ensemble)
    tau = np.full(len(trajs), np.nan)
    for i, tr in enumerate(trajs):
        below = np.nonzero(np.asarray(tr.X)[:, index] <= delta)[0]
        if below.size:
            tau[i] = tr.times[below[0]]
    return _from_tau(tau, np.isnan(tau), delta, tuple({tr.noise_seed for tr in trajs}))
