"""Batched Euler-Maruyama integration of many independent runs.

Runs are integrated in fixed-size batches.  Each run draws its Gaussian
increments from its own Philox stream, in blocks of ``NOISE_BLOCK`` steps, so
the numbers a run sees depend only on (master seed, run index) and never on
the batch it lands in or on how many worker processes are used.  Batches are
merged by run index.
"""
from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .rng import NOISE, check_seed, run_generator
from .system import DynamicsError, LearningSystem

MAX_STEPS = 10 ** 8
NOISE_BLOCK = 256
STORE_KEYS = ("Y", "X", "Xint", "Vint", "PVint")


# --------------------------------------------------------------------------
# monitors: streaming statistics evaluated at every step

class Monitor:
    """Factory for per-batch monitor state; ``result`` arrays have the runs on axis 0."""

    name = "monitor"

    def start(self, system: LearningSystem, t0: float, Y: np.ndarray, X: np.ndarray, Xint):
        raise NotImplementedError

    def update(self, state, n: int, t: float, Y, X, Xint):
        raise NotImplementedError

    def finish(self, state) -> dict:
        raise NotImplementedError

    def done(self, state) -> bool:
        return False


@dataclass
class FirstPassage(Monitor):
    """First time coordinate ``index`` of X drops to ``delta`` or below."""

    index: int
    delta: float
    name: str = "first_passage"

    def start(self, system, t0, Y, X, Xint):
        tau = np.full(len(X), np.nan)
        tau[X[:, self.index] <= self.delta] = t0
        return tau

    def update(self, tau, n, t, Y, X, Xint):
        hit = np.isnan(tau) & (X[:, self.index] <= self.delta)
        tau[hit] = t

    def finish(self, tau):
        return {"tau": tau, "censored": np.isnan(tau)}

    def done(self, tau):
        return not np.isnan(tau).any()


@dataclass
class ScoreGapMax(Monitor):
    """Running maximum of eta_k(t) (Y_a - Y_b) over the given coordinate pairs.

    ``pairs`` holds flat (a, b, player) triples.  Used for the escape test of
    the stability experiment.
    """

    pairs: tuple
    after: float = 0.0
    name: str = "score_gap"

    def _gap(self, system, t, Y):
        g = np.full(len(Y), -np.inf)
        for a, b, k in self.pairs:
            g = np.maximum(g, system.schedules[k].eta(t) * (Y[:, a] - Y[:, b]))
        return g

    def start(self, system, t0, Y, X, Xint):
        self._system = system
        return {"max": self._gap(system, t0, Y), "final": None}

    def update(self, st, n, t, Y, X, Xint):
        if t >= self.after:
            np.maximum(st["max"], self._gap(self._system, t, Y), out=st["max"])

    def finish(self, st):
        return {"max_gap": st["max"]}


@dataclass
class Snapshot(Monitor):
    """Copies of Y, X and the running integral of X at fixed times."""

    times: tuple
    dt: float
    name: str = "snapshot"

    def _steps(self):
        return [int(round(t / self.dt)) for t in self.times]

    def start(self, system, t0, Y, X, Xint):
        st = {"Y": [None] * len(self.times), "X": [None] * len(self.times),
              "Xint": [None] * len(self.times), "steps": self._steps()}
        self.update(st, 0, t0, Y, X, Xint)
        return st

    def update(self, st, n, t, Y, X, Xint):
        for i, s in enumerate(st["steps"]):
            if s == n:
                st["Y"][i], st["X"][i], st["Xint"][i] = Y.copy(), X.copy(), Xint.copy()

    def finish(self, st):
        if any(v is None for v in st["X"]):
            raise DynamicsError("snapshot time beyond the integration horizon")
        return {k: np.stack(st[k], axis=1) for k in ("Y", "X", "Xint")}


@dataclass
class EnvelopeWatch(Monitor):
    """Flags runs where X[:, index] ever exceeds ``envelope(t)`` for t >= ``after``."""

    index: int
    envelope: object
    after: float
    name: str = "envelope"

    def start(self, system, t0, Y, X, Xint):
        return {"violated": np.zeros(len(X), dtype=bool), "last": np.full(len(X), np.nan)}

    def update(self, st, n, t, Y, X, Xint):
        if t < self.after:
            return
        bad = X[:, self.index] > self.envelope(t)
        st["violated"] |= bad
        st["last"][bad] = t

    def finish(self, st):
        return {"violated": st["violated"], "last_violation": st["last"]}


# --------------------------------------------------------------------------
# results

@dataclass
class Trajectory:
    """One stored run: thinned time grid, scores and strategies."""

    times: np.ndarray
    Y: np.ndarray
    X: np.ndarray
    noise_seed: int
    run: int = 0
    meta: dict = field(default_factory=dict)
    Xint: np.ndarray | None = None
    Vint: np.ndarray | None = None
    PVint: np.ndarray | None = None


@dataclass
class EnsembleResult:
    times: np.ndarray
    n_runs: int
    seed: int
    dt: float
    T: float
    final_Y: np.ndarray
    final_X: np.ndarray
    X_integral: np.ndarray
    payoff_integral: np.ndarray
    policy_payoff_integral: np.ndarray
    stored: dict
    monitors: dict
    meta: dict = field(default_factory=dict)

    def trajectory(self, i: int) -> Trajectory:
        if "Y" not in self.stored or "X" not in self.stored:
            raise DynamicsError("scores and strategies were not stored for this ensemble")
        get = lambda k: self.stored[k][i] if k in self.stored else None
        return Trajectory(times=self.times, Y=self.stored["Y"][i], X=self.stored["X"][i],
                          noise_seed=self.seed, run=i, meta=dict(self.meta),
                          Xint=get("Xint"), Vint=get("Vint"), PVint=get("PVint"))

    def trajectories(self):
        return [self.trajectory(i) for i in range(self.n_runs)]


# --------------------------------------------------------------------------
# integration

def _initial_scores(Y0, runs, dim):
    if Y0 is None:
        return np.zeros((len(runs), dim))
    Y0 = np.asarray(Y0, dtype=float)
    if Y0.ndim == 1:
        if Y0.size != dim:
            raise DynamicsError(f"initial scores need {dim} entries")
        return np.tile(Y0, (len(runs), 1))
    if Y0.shape[1] != dim:
        raise DynamicsError(f"initial scores need {dim} entries")
    return Y0[runs].copy()


def _integrate_batch_raw(system: LearningSystem, runs: np.ndarray, dt: float, n_steps: int,
                     seed: int, thinning: int, Y0, store, monitors, stop_early: bool,
                     store_runs: int | None = None):
    B, d = len(runs), system.dim
    nd = system.noise.noise_dim
    gens = [run_generator(seed, int(r), NOISE) for r in runs] if nd else []
    if system.stream is not None:
        system.stream.prepare(runs, n_steps * dt)

    Y = _initial_scores(Y0, runs, d)
    X = system.strategies(0.0, Y)
    Xint = np.zeros_like(X)
    Vint = np.zeros_like(X)
    PVint = np.zeros((B, system.n_players))
    blocks = system.blocks

    n_store = n_steps // thinning + 1
    if not isinstance(store, dict):
        store = {k: store_runs for k in store}
    keep = {k: (np.flatnonzero(runs < lim) if lim is not None else np.arange(B))
            for k, lim in store.items()}
    keep = {k: v for k, v in keep.items() if v.size}
    out = {k: np.empty((v.size, n_store, PVint.shape[1] if k == "PVint" else d))
           for k, v in keep.items()}
    cur = {"Y": Y, "X": X, "Xint": Xint, "Vint": Vint, "PVint": PVint}
    for k in out:
        out[k][:, 0] = cur[k][keep[k]]
    states = [m.start(system, 0.0, Y, X, Xint) for m in monitors]

    sqdt = math.sqrt(dt)
    noisy = system.noise.mode != "none"
    xi_block = None
    n_done = n_steps
    for n in range(n_steps):
        j = n % NOISE_BLOCK
        if noisy and j == 0:
            xi_block = np.stack([g.standard_normal((NOISE_BLOCK, nd)) for g in gens], axis=1)
            if n and not np.all(np.isfinite(Y)):
                raise DynamicsError("score vector became non-finite; check payoffs and noise levels")
        t = n * dt
        V = system.payoffs(t, X, runs)
        Y_prev = Y
        Y = Y + V * dt
        if noisy:
            Y = Y + system.noise.increment(X, xi_block[j], sqdt)
        t1 = (n + 1) * dt
        X1 = system.strategies(t1, Y)
        Xint = Xint + (0.5 * dt) * (X + X1)
        Vint = Vint + V * dt
        # Simpson along the chord Y_prev -> Y; trapezoid error accumulates past log(n)/eta
        # in long noiseless runs
        mid = (X + X1 + 4.0 * system.strategies(t + 0.5 * dt, 0.5 * (Y_prev + Y))) / 6.0
        PVint = PVint + dt * np.stack([np.einsum("ij,ij->i", v, x)
                                       for v, x in zip(blocks(V), blocks(mid))], axis=1)
        X = X1
        for m, st in zip(monitors, states):
            m.update(st, n + 1, t1, Y, X, Xint)
        if (n + 1) % thinning == 0 and out:
            cur = {"Y": Y, "X": X, "Xint": Xint, "Vint": Vint, "PVint": PVint}
            for k in out:
                out[k][:, (n + 1) // thinning] = cur[k][keep[k]]
        if stop_early and monitors and all(m.done(st) for m, st in zip(monitors, states)):
            n_done = n + 1
            break
    if not np.all(np.isfinite(Y)):
        raise DynamicsError("score vector became non-finite; check payoffs and noise levels")
    results = [m.finish(st) for m, st in zip(monitors, states)]
    return {"Y": Y, "X": X, "Xint": Xint, "Vint": Vint, "PVint": PVint,
            "stored": out, "monitors": results, "steps": n_done}

def _integrate_batch(*args, **kwargs):
    # overflow shows up as non-finite scores, which are turned into DynamicsError
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate_batch_raw(*args, **kwargs)


_JOB = None


def _run_job(chunk):
    job = _JOB
    return _integrate_batch(job["system"], chunk, **job["kwargs"])


def simulate_ensemble(system: LearningSystem, dt: float, T: float, n_runs: int, seed: int = 0,
                      thinning: int = 1, Y0=None, batch_size: int = 100, workers: int = 1,
                      monitors=(), store=("Y", "X"), store_runs: int | None = None,
                      stop_early: bool = False) -> EnsembleResult:
    """Integrate ``n_runs`` independent copies of ``system`` over [0, T].

    Parameters
    ----------
    dt, T : step size and horizon; ``T / dt`` is rounded to a whole number of steps.
    seed : 64-bit master seed; run ``i`` uses the Philox stream keyed by (seed, i).
    thinning : store every ``thinning``-th step (plus t = 0).
    Y0 : initial scores, shape ``(d,)`` or ``(n_runs, d)``; zeros by default.
    batch_size : runs integrated together; part of the reproducibility contract.
    workers : processes used; has no effect on the numbers produced.
    monitors : :class:`Monitor` instances evaluated after every step.
    store : which per-step series to keep (subset of ``STORE_KEYS``), or a mapping
        from series name to the number of leading runs to keep it for (None = all).
    store_runs : with a plain ``store``, keep series only for runs ``0 .. store_runs - 1``.
    stop_early : end a batch once every monitor reports done (no stored series then).
    """
    seed = check_seed(seed)
    if not dt > 0:
        raise DynamicsError("time step must be positive")
    if not T >= dt:
        raise DynamicsError("horizon must be at least one time step")
    n_steps = int(round(T / dt))
    if n_steps > MAX_STEPS:
        raise DynamicsError(f"{n_steps} steps exceed the budget of {MAX_STEPS}")
    if n_runs < 1 or batch_size < 1 or thinning < 1:
        raise DynamicsError("n_runs, batch_size and thinning must be positive")
    store = dict(store) if isinstance(store, dict) else {k: store_runs for k in (store or ())}
    unknown = set(store) - set(STORE_KEYS)
    if unknown:
        raise DynamicsError(f"unknown stored series {sorted(unknown)}")
    if stop_early and store:
        raise DynamicsError("early stopping cannot be combined with stored series")

    chunks = [np.arange(i, min(i + batch_size, n_runs)) for i in range(0, n_runs, batch_size)]
    kwargs = dict(dt=dt, n_steps=n_steps, seed=seed, thinning=thinning, Y0=Y0, store=store,
                  monitors=tuple(monitors), stop_early=stop_early, store_runs=store_runs)
    global _JOB
    if workers <= 1 or len(chunks) == 1:
        parts = [_integrate_batch(system, c, **kwargs) for c in chunks]
    else:
        _JOB = {"system": system, "kwargs": kwargs}
        try:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=min(workers, len(chunks)), mp_context=ctx) as ex:
                parts = list(ex.map(_run_job, chunks))
        finally:
            _JOB = None

    cat = lambda key: np.concatenate([p[key] for p in parts], axis=0)
    stored = {k: np.concatenate([p["stored"][k] for p in parts if k in p["stored"]], axis=0)
              for k in store if any(k in p["stored"] for p in parts)}
    mons = {}
    for i, m in enumerate(monitors):
        keys = parts[0]["monitors"][i].keys()
        mons[m.name] = {k: np.concatenate([p["monitors"][i][k] for p in parts], axis=0)
                        for k in keys}
    times = np.arange(n_steps // thinning + 1) * (thinning * dt)
    return EnsembleResult(times=times, n_runs=n_runs, seed=seed, dt=dt, T=n_steps * dt,
                          final_Y=cat("Y"), final_X=cat("X"), X_integral=cat("Xint"),
                          payoff_integral=cat("Vint"), policy_payoff_integral=cat("PVint"),
                          stored=stored, monitors=mons,
                          meta={"batch_size": batch_size, "thinning": thinning,
                                "steps": [p["steps"] for p in parts]})


def simulate_path(system: LearningSystem, dt: float, T: float, seed: int = 0, run: int = 0,
                  thinning: int = 1, Y0=None, store=("Y", "X")) -> Trajectory:
    """A single stored trajectory (run ``run`` of the ensemble with this seed)."""
    if Y0 is not None and np.ndim(Y0) == 1:
        Y0 = np.tile(np.asarray(Y0, dtype=float), (run + 1, 1))
    res = _integrate_batch(system, np.array([run]), dt=dt, n_steps=int(round(T / dt)), seed=check_seed(seed),
                           thinning=thinning, Y0=Y0, store=tuple(store), monitors=(),
                           stop_early=False)
    n_steps = int(round(T / dt))
    times = np.arange(n_steps // thinning + 1) * (thinning * dt)
    s = res["stored"]
    return Trajectory(times=times, Y=s["Y"][0], X=s["X"][0], noise_seed=seed, run=run,
                      Xint=s["Xint"][0] if "Xint" in s else None,
                      Vint=s["Vint"][0] if "Vint" in s else None,
                      PVint=s["PVint"][0] if "PVint" in s else None)
