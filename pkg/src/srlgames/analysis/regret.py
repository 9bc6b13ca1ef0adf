"""Cumulative regret of a single learner and its guaranteed upper bound."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..dynamics.schedules import LearningSchedule


class RegretError(ValueError):
    pass


class LinearBoundWarning(UserWarning):
    """The bound grows linearly: constant learning rate under noise."""


@dataclass
class RegretSeries:
    times: np.ndarray
    regret: np.ndarray
    bound: np.ndarray | None = None
    components: dict | None = None


def _loglog(t):
    # log log t, floored at 0 below t = e so the noise term stays real
    t = np.asarray(t, dtype=float)
    return np.log(np.log(np.maximum(t, math.e)))


def regret_bound_components(omega: float, K: float, sigma_max: float, n_actions: int,
                            schedule: LearningSchedule, t, c: float = 3.0) -> dict:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise RegretError("regret bound needs t >= 0")
    if sigma_max > 0 and schedule.is_constant:
        warnings.warn("constant learning rate with noise: the regret bound is linear in t",
                      LinearBoundWarning, stacklevel=3)
    return {
        "penalty": omega / schedule.eta(t),
        "noise_drift": sigma_max ** 2 * n_actions / (2.0 * K) * schedule.integral(t),
        "martingale": c * sigma_max * np.sqrt(t * _loglog(t)),
    }


def regret_bound(omega: float, K: float, sigma_max: float, n_actions: int,
                 schedule: LearningSchedule, t, c: float = 3.0):
    """Omega/eta(t) + sigma_max^2 n/(2K) int_0^t eta + c sigma_max sqrt(t log log t)."""
    parts = regret_bound_components(omega, K, sigma_max, n_actions, schedule, t, c)
    out = parts["penalty"] + parts["noise_drift"] + parts["martingale"]
    return float(out) if np.ndim(out) == 0 else out


def regret_from_integrals(payoff_integral, policy_integral) -> np.ndarray:
    """max_a int v_a - int <v, x>, from running integrals (runs/time on leading axes)."""
    return np.max(np.asarray(payoff_integral), axis=-1) - np.asarray(policy_integral)


def cumulative_regret(trajectory, payoff_stream=None, run: int | None = None) -> RegretSeries:
    """Regret series of a stored single-learner trajectory.

    Uses the integrals accumulated during integration when present (exact
    for payoff streams that are constant between steps); otherwise applies
    the trapezoid rule on the stored grid to the noiseless stream values.
    """
    times = np.asarray(trajectory.times, dtype=float)
    if times.size == 0:
        raise RegretError("empty trajectory")
    if trajectory.Vint is not None and trajectory.PVint is not None:
        return RegretSeries(times, regret_from_integrals(trajectory.Vint, trajectory.PVint[:, 0]))
    if payoff_stream is None:
        raise RegretError("need the payoff stream or stored payoff integrals")
    steps = np.diff(times)
    if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise RegretError("trajectory grid is not uniform")
    X = np.asarray(trajectory.X, dtype=float)
    r = trajectory.run if run is None else run
    V = np.stack([payoff_stream(t, r) for t in times])
    if V.shape != X.shape:
        raise RegretError(f"stream gives {V.shape[1]} payoffs, trajectory has {X.shape[1]} actions")
    Vint = cumulative_trapezoid(V, times, axis=0, initial=0.0)
    PVint = cumulative_trapezoid(np.einsum("ij,ij->i", V, X), times, initial=0.0)
    return RegretSeries(times, Vint.max(axis=1) - PVint)
