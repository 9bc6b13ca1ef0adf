"""Exogenous payoff streams for a single learner facing an arbitrary environment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import PAYOFF_STREAM, run_generator


_BLOCK = 1024


class StreamError(ValueError):
    pass


class PayoffStream:
    """Base class: ``values(t, runs)`` returns a ``(len(runs), n_actions)`` array."""

    n_actions: int
    cap: float = math.inf

    def values(self, t: float, runs) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float, run: int = 0) -> np.ndarray:
        return self.values(t, np.array([run]))[0]

    def prepare(self, runs, horizon: float) -> None:
        """Hook for streams that precompute per-run data."""

    def checked(self, v: np.ndarray) -> np.ndarray:
        if np.any(np.abs(v) > self.cap):
            raise StreamError(f"payoff stream exceeds its declared cap {self.cap}")
        return v

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class ConstantStream(PayoffStream):
    payoff: tuple
    cap: float = math.inf

    def __post_init__(self):
        self._v = np.asarray(self.payoff, dtype=float)
        self.n_actions = self._v.size
        self.checked(self._v)

    def values(self, t, runs):
        return np.broadcast_to(self._v, (len(runs), self.n_actions)).copy()

    def to_dict(self):
        return {"kind": "constant", "payoff": list(map(float, self._v))}


@dataclass
class FunctionStream(PayoffStream):
    """Wrap a deterministic callable ``t -> payoff vector`` (same for every run)."""

    fn: object
    n_actions: int
    cap: float = math.inf

    def values(self, t, runs):
        v = self.checked(np.asarray(self.fn(t), dtype=float))
        return np.broadcast_to(v, (len(runs), self.n_actions)).copy()

    def to_dict(self):
        raise StreamError("function streams cannot be serialized")


@dataclass
class SquareWaveStream(PayoffStream):
    """One action pays ``amplitude`` per period, the others pay nothing.

    With ``random_signs`` the paying action of every period is drawn
    uniformly at random from the run's own stream (an oblivious adversary);
    otherwise it cycles through the actions in order.
    """

    n_actions: int = 2
    period: float = 1.0
    amplitude: float = 1.0
    random_signs: bool = True
    seed: int = 0
    cap: float = math.inf
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.period <= 0:
            raise StreamError("square wave period must be positive")
        if self.n_actions < 2:
            raise StreamError("square wave needs at least two actions")
        if abs(self.amplitude) > self.cap:
            raise StreamError("square wave amplitude exceeds the declared cap")

    def _index(self, t):
        return int(math.floor(t / self.period + 1e-9))

    def _table(self, run: int, n: int) -> np.ndarray:
        # drawn in fixed blocks so a run's sequence never depends on the horizon
        table, gen = self._tables.get(run, (np.empty(0, dtype=np.int64), None))
        if gen is None:
            gen = run_generator(self.seed, run, PAYOFF_STREAM)
        while table.size < n:
            table = np.concatenate([table, gen.integers(0, self.n_actions, size=_BLOCK)])
        self._tables[run] = (table, gen)
        return table

    def prepare(self, runs, horizon):
        if not self.random_signs:
            return
        runs = np.asarray(runs)
        n = self._index(horizon) + 2
        self._matrix = np.stack([self._table(int(r), n)[:n] for r in runs])
        self._matrix_runs = runs

    def winners(self, t, runs) -> np.ndarray:
        j = self._index(t)
        if not self.random_signs:
            return np.full(len(runs), j % self.n_actions)
        m = getattr(self, "_matrix", None)
        if m is not None and runs is self._matrix_runs and j < m.shape[1]:
            return m[:, j]
        return np.array([self._table(int(r), j + 1)[j] for r in runs])

    def values(self, t, runs):
        w = self.winners(t, runs)
        v = np.zeros((len(runs), self.n_actions))
        v[np.arange(len(runs)), w] = self.amplitude
        return v

    def to_dict(self):
        return {"kind": "square-wave", "n_actions": self.n_actions, "period": self.period,
                "amplitude": self.amplitude, "random_signs": self.random_signs,
                "seed": self.seed}


def stream_from_dict(spec: dict, seed: int = 0) -> PayoffStream:
    kind = spec.get("kind", "square-wave")
    cap = float(spec.get("cap", math.inf))
    if kind == "constant":
        return ConstantStream(payoff=tuple(spec["payoff"]), cap=cap)
    if kind == "square-wave":
        return SquareWaveStream(n_actions=int(spec.get("n_actions", 2)),
                                period=float(spec.get("period", 1.0)),
                                amplitude=float(spec.get("amplitude", 1.0)),
                                random_signs=bool(spec.get("random_signs", True)),
                                seed=int(spec.get("seed", seed)), cap=cap)
    raise StreamError(f"unknown stream kind {kind!r}")
