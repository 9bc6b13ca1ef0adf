"""Quantitative checks run against simulated ensembles, each producing a verdict.

A check spec is a mapping with a ``check`` kind plus parameters.  The keys
``n_runs``, ``T``, ``dt``, ``seed`` and ``overrides`` (a partial config)
change the ensemble the check is evaluated on; checks whose effective
configs coincide share one ensemble.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dynamics.ensemble import EnvelopeWatch, FirstPassage, Snapshot, simulate_ensemble
from ..games import dominance_margin, nash_gap_batch
from ..regularizers import penalty_range
from .extinction import (exceedance_bound, extinction_envelope,
                         hitting_time_bound, hitting_times_from_monitor,
                         initial_offset)
from .regret import regret_bound, regret_from_integrals
from .stability import stability_experiment, stability_threshold
from .stats import loglog_slope, wilson_halfwidth, wilson_interval

ENSEMBLE_KEYS = ("n_runs", "T", "dt", "seed", "overrides")


class CheckError(ValueError):
    pass


@dataclass
class Verdict:
    check_id: str
    passed: bool
    statistic: float
    bound: float
    n_runs: int
    ci: list | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.check_id}: statistic={self.statistic:.6g} bound={self.bound:.6g} n_runs={self.n_runs}"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def verdicts_json(verdicts) -> str:
    return json.dumps([v.to_dict() for v in verdicts], indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# shared quantities

def _flat(scen, spec) -> tuple[int, int, int]:
    """(player, action, flat index) of the tracked action."""
    k = int(spec.get("player", 0))
    a = int(spec["action"])
    if not 0 <= a < scen.system.actions[k]:
        raise CheckError(f"action {a} out of range for player {k}")
    return k, a, int(scen.system.offsets[k]) + a


def _dominance(scen, k: int, a: int) -> tuple[float, int]:
    """Largest margin by which another pure action dominates ``a``, and that action."""
    game = scen.game
    if game is None:
        raise CheckError("dominance checks need a game")
    best, arg = -math.inf, -1
    for b in range(game.actions[k]):
        if b != a:
            m = dominance_margin(game, k, a, b)
            if m > best:
                best, arg = m, b
    if best <= 0:
        raise CheckError(f"action {a} of player {k} is not strictly dominated by a pure action")
    return best, arg


def _pair_scale(scen, i: int, j: int) -> float:
    noise = scen.system.noise
    if noise.mode == "correlated":
        c = noise.cov
        return math.sqrt(0.5 * (c[i, i] + c[j, j]))
    if noise.mode == "none":
        return 0.0
    rng = np.random.default_rng(0)
    pts = [np.concatenate([rng.dirichlet(np.ones(n)) for n in scen.system.actions])
           for _ in range(256)]
    for prof in np.ndindex(*scen.system.actions):
        pts.append(np.concatenate([np.eye(n)[p] for p, n in zip(prof, scen.system.actions)]))
    s2 = noise.coefficients(np.array(pts)) ** 2
    return math.sqrt(0.5 * float(np.max(s2[:, i] + s2[:, j])))


def _extinction_setup(scen, spec):
    k, a, i = _flat(scen, spec)
    m, b = _dominance(scen, k, a)
    j = int(scen.system.offsets[k]) + b
    kern, sched = scen.system.kernels[k], scen.system.schedules[k]
    C = initial_offset(kern, sched.eta(0.0), scen.Y0[i], scen.Y0[j])
    return dict(k=k, i=i, j=j, m=m, C=C, kernel=kern, schedule=sched, sigma=_pair_scale(scen, i, j))


# --------------------------------------------------------------------------
# checks evaluated on a shared ensemble

class Check:
    kind = ""
    standalone = False

    def monitors(self, scen, spec, tag) -> list:
        return []

    def store(self, scen, spec) -> dict:
        return {}

    def evaluate(self, scen, spec, res, tag) -> Verdict:
        raise NotImplementedError

    def run(self, scen, spec, workers) -> Verdict:
        raise NotImplementedError


class EquilibriumConvergence(Check):
    kind = "equilibrium-convergence"

    def evaluate(self, scen, spec, res, tag):
        tol, frac = float(spec.get("tol", 1e-3)), float(spec.get("fraction", 0.9))
        gaps = nash_gap_batch(scen.game, scen.game.split(res.final_X))
        ok = int(np.sum(gaps <= tol))
        stat = ok / res.n_runs
        return Verdict(self.kind, stat >= frac, stat, frac, res.n_runs,
                       list(wilson_interval(ok, res.n_runs)), {"tol": tol})


class TimeAverageCheck(Check):
    kind = "time-average"

    def evaluate(self, scen, spec, res, tag):
        tol, frac = float(spec.get("tol", 0.05)), float(spec.get("fraction", 0.9))
        target = np.asarray(spec.get("target") or np.concatenate(
            [np.full(n, 1.0 / n) for n in scen.system.actions]), dtype=float)
        Xbar = res.X_integral / res.T
        dist = np.max(np.abs(Xbar - target), axis=1)
        ok = int(np.sum(dist <= tol))
        stat = ok / res.n_runs
        return Verdict(self.kind, stat >= frac, stat, frac, res.n_runs,
                       list(wilson_interval(ok, res.n_runs)),
                       {"tol": tol, "T": res.T, "median_distance": float(np.median(dist))})


class GapDecrease(Check):
    kind = "gap-decrease"

    def monitors(self, scen, spec, tag):
        return [Snapshot(times=(float(spec.get("early", 1e3)),), dt=scen.dt, name=tag)]

    def evaluate(self, scen, spec, res, tag):
        early = float(spec.get("early", 1e3))
        ratio = float(spec.get("ratio", 0.5))
        game = scen.game
        x_early = res.monitors[tag]["Xint"][:, 0] / early
        x_late = res.X_integral / res.T
        g_early = float(np.median(nash_gap_batch(game, game.split(x_early))))
        g_late = float(np.median(nash_gap_batch(game, game.split(x_late))))
        stat = g_late / g_early if g_early > 0 else math.inf
        return Verdict(self.kind, stat < ratio, stat, ratio, res.n_runs, None,
                       {"median_gap_early": g_early, "median_gap_late": g_late,
                        "early": early, "late": res.T})


def _regret_inputs(scen, spec):
    sched, kern = scen.system.schedules[0], scen.system.kernels[0]
    n = scen.system.dim
    noise = scen.system.noise
    smax = 0.0 if noise.mode == "none" else float(noise.check_bounds((n,)))
    return dict(omega=penalty_range(kern, n), K=kern.K, sigma_max=smax, n_actions=n,
                schedule=sched, c=float(spec.get("c", 3.0)))


class RegretBoundCheck(Check):
    kind = "regret-bound"

    def store(self, scen, spec):
        return {"Vint": None, "PVint": None}

    def evaluate(self, scen, spec, res, tag):
        t = res.times
        lo, hi = float(spec.get("t_min", 100.0)), float(spec.get("t_max", res.T))
        frac = float(spec.get("fraction", 0.95))
        sel = (t >= lo) & (t <= hi)
        if not sel.any():
            raise CheckError("no stored times inside the regret window")
        reg = regret_from_integrals(res.stored["Vint"], res.stored["PVint"][..., 0])[:, sel]
        bound = regret_bound(t=t[sel], **_regret_inputs(scen, spec))
        ok = int(np.sum(np.all(reg <= bound, axis=1)))
        stat = ok / res.n_runs
        return Verdict(self.kind, stat >= frac, stat, frac, res.n_runs,
                       list(wilson_interval(ok, res.n_runs)),
                       {"window": [lo, hi], "max_ratio": float(np.max(reg / bound))})


class RegretSlopeCheck(Check):
    kind = "regret-slope"

    def store(self, scen, spec):
        return {"Vint": None, "PVint": None}

    def evaluate(self, scen, spec, res, tag):
        t = res.times
        low, high = float(spec.get("low", 0.45)), float(spec.get("high", 0.65))
        sel = (t >= res.T / 10) & (t > 0)
        reg = regret_from_integrals(res.stored["Vint"], res.stored["PVint"][..., 0])[:, sel]
        med = np.median(reg, axis=0)
        slope = loglog_slope(t[sel], med)
        return Verdict(self.kind, low <= slope <= high, slope, high, res.n_runs, [low, high],
                       {"points": int(sel.sum()), "window": [res.T / 10, res.T]})


class RegretNoiselessCheck(Check):
    kind = "regret-noiseless"

    def store(self, scen, spec):
        return {"Vint": None, "PVint": None}

    def evaluate(self, scen, spec, res, tag):
        if scen.system.noise.mode != "none" or not scen.system.schedules[0].is_constant:
            raise CheckError("noiseless regret check needs sigma = 0 and a constant learning rate")
        kern, sched = scen.system.kernels[0], scen.system.schedules[0]
        bound = penalty_range(kern, scen.system.dim) / sched.eta0
        reg = regret_from_integrals(res.stored["Vint"], res.stored["PVint"][..., 0])
        worst = float(reg.max())
        ok = int(np.sum(np.all(reg <= bound + 1e-9, axis=1)))
        return Verdict(self.kind, ok == res.n_runs, worst, bound, res.n_runs, None,
                       {"runs_within": ok})


class EnvelopeCheck(Check):
    kind = "extinction-envelope"

    def monitors(self, scen, spec, tag):
        s = _extinction_setup(scen, spec)
        eps = float(spec.get("eps", 0.5))
        env = lambda t: extinction_envelope(s["kernel"], s["m"], s["sigma"], s["C"], s["schedule"], eps, t)
        return [EnvelopeWatch(index=s["i"], envelope=env, after=float(spec.get("after", 100.0)),
                              name=tag)]

    def evaluate(self, scen, spec, res, tag):
        frac = float(spec.get("fraction", 0.95))
        bad = res.monitors[tag]["violated"]
        ok = int(np.sum(~bad))
        stat = ok / res.n_runs
        s = _extinction_setup(scen, spec)
        return Verdict(self.kind, stat >= frac, stat, frac, res.n_runs,
                       list(wilson_interval(ok, res.n_runs)),
                       {"m": s["m"], "C": s["C"], "sigma_ab": s["sigma"],
                        "after": float(spec.get("after", 100.0)), "horizon": res.T})


class ExceedanceCheck(Check):
    kind = "exceedance"

    def monitors(self, scen, spec, tag):
        return [Snapshot(times=tuple(float(t) for t in spec["times"]), dt=scen.dt, name=tag)]

    def evaluate(self, scen, spec, res, tag):
        s = _extinction_setup(scen, spec)
        delta = float(spec["delta"])
        times = [float(t) for t in spec["times"]]
        X = res.monitors[tag]["X"][:, :, s["i"]]
        rows, worst = [], -math.inf
        for q, t in enumerate(times):
            cnt = int(np.sum(X[:, q] > delta))
            p = cnt / res.n_runs
            b = exceedance_bound(s["kernel"], s["m"], s["sigma"], s["C"], s["schedule"], delta, t)
            hw = wilson_halfwidth(cnt, res.n_runs)
            worst = max(worst, p - (b + hw))
            rows.append({"t": t, "empirical": p, "bound": b, "halfwidth": hw})
        return Verdict(self.kind, worst <= 0, worst, 0.0, res.n_runs, None,
                       {"delta": delta, "per_time": rows, "sigma_ab": s["sigma"]})


class HittingTimeCheck(Check):
    kind = "hitting-time"

    def monitors(self, scen, spec, tag):
        k, a, i = _flat(scen, spec)
        return [FirstPassage(index=i, delta=float(spec["delta"]), name=tag)]

    def evaluate(self, scen, spec, res, tag):
        s = _extinction_setup(scen, spec)
        if not s["schedule"].is_constant:
            raise CheckError("the hitting-time bound needs a constant learning rate")
        delta = float(spec["delta"])
        fp = res.monitors[tag]
        ht = hitting_times_from_monitor(fp, delta, res.seed)
        bound = hitting_time_bound(s["kernel"], s["m"], s["schedule"].eta0, delta, s["C"])
        mean = ht.mean
        return Verdict(self.kind, bool(mean <= bound and not ht.flagged), mean, bound, res.n_runs,
                       [mean - 1.96 * ht.stderr, mean + 1.96 * ht.stderr],
                       {"delta": delta, "stderr": ht.stderr, "censored_fraction": ht.censored_fraction,
                        "dt": res.dt})


# --------------------------------------------------------------------------
# standalone checks

class StabilityCheck(Check):
    kind = "stability"
    standalone = True

    def run(self, scen, spec, workers):
        eq = tuple(int(a) for a in spec["equilibrium"])
        thr = stability_threshold(scen.system, eq, float(spec.get("eps", 0.1)),
                                  radius=float(spec.get("radius", 0.1)))
        M = float(spec.get("M", thr.M))
        res = stability_experiment(scen.system, eq, M, dt=scen.dt, T=scen.T, n_runs=scen.n_runs,
                                   seed=scen.seed, tol=float(spec.get("tol", 1e-3)),
                                   batch_size=scen.batch_size, workers=workers)
        lo, hi = res.escape_ci
        max_escape = float(spec.get("max_escape", 0.1))
        frac = float(spec.get("fraction", 0.9))
        passed = hi <= max_escape and res.converged_fraction >= frac
        return Verdict(self.kind, passed, hi, max_escape, res.n_runs, [lo, hi],
                       {"M": M, "M_noise": thr.M_noise, "M_neighbourhood": thr.M_neighbourhood,
                        "margins": thr.margins, "escape_fraction": res.escape_fraction,
                        "converged_fraction": res.converged_fraction, "fraction": frac})


class CovarianceCheck(Check):
    kind = "covariance"
    standalone = True

    def run(self, scen, spec, workers):
        steps = int(spec.get("steps", 10 ** 6))
        runs = int(spec.get("runs", 100))
        per_run = -(-steps // runs)
        res = simulate_ensemble(scen.system, scen.dt, per_run * scen.dt, runs, seed=scen.seed,
                                Y0=scen.Y0, batch_size=scen.batch_size, workers=workers,
                                store={"Y": None})
        dY = np.diff(res.stored["Y"], axis=1).reshape(-1, scen.system.dim)
        N = dY.shape[0]
        c = dY - dY.mean(axis=0)
        emp = c.T @ c / (N - 1) / scen.dt
        prods = c[:, :, None] * c[:, None, :] / scen.dt
        se = prods.std(axis=0, ddof=1) / math.sqrt(N)
        noise = scen.system.noise
        if noise.mode == "correlated":
            target = noise.cov
        elif noise.mode == "diagonal" and noise.is_constant:
            target = np.diag(np.asarray(noise.sigma) ** 2)
        else:
            raise CheckError("covariance check needs a constant noise covariance")
        z = np.abs(emp - target) / se
        n_se = float(spec.get("n_se", 3.0))
        stat = float(z.max())
        return Verdict(self.kind, stat <= n_se, stat, n_se, runs, None,
                       {"increments": N, "empirical": emp, "target": target, "stderr": se})


CHECKS = {c.kind: c() for c in (EquilibriumConvergence, TimeAverageCheck, GapDecrease,
                                RegretBoundCheck, RegretSlopeCheck, RegretNoiselessCheck,
                                EnvelopeCheck, ExceedanceCheck, HittingTimeCheck,
                                StabilityCheck, CovarianceCheck)}


def get_check(kind: str) -> Check:
    try:
        return CHECKS[kind]
    except KeyError:
        raise CheckError(f"unknown check {kind!r}; known: {sorted(CHECKS)}") from None
