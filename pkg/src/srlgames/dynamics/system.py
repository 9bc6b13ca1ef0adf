"""The stochastic learning system and its single-step integrators.

Scores Y are integrated by Euler-Maruyama; strategies are always recomputed
as X_k = Q_k(eta_k(t) Y_k) and never advanced on their own.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..games import Game, as_profile, flatten, payoff_vectors_batch
from ..regularizers import PenaltyKernel, choice_map_batch
from .noise import NoiseModel
from .schedules import LearningSchedule
from .streams import PayoffStream


class DynamicsError(RuntimeError):
    pass


@dataclass
class LearningSystem:
    """Everything the integrator needs besides the step size and seed.

    Exactly one of ``game`` and ``stream`` is set: a game gives the usual
    multi-player dynamics, a stream gives a single learner facing exogenous
    payoffs.
    """

    kernels: Sequence[PenaltyKernel]
    schedules: Sequence[LearningSchedule]
    noise: NoiseModel
    game: Game | None = None
    stream: PayoffStream | None = None

    def __post_init__(self):
        if (self.game is None) == (self.stream is None):
            raise DynamicsError("exactly one of game and stream must be given")
        self.actions = self.game.actions if self.game is not None else (self.stream.n_actions,)
        n = len(self.actions)
        if len(self.kernels) != n or len(self.schedules) != n:
            raise DynamicsError(f"need one kernel and one schedule per player ({n})")
        self.offsets = np.concatenate([[0], np.cumsum(self.actions)])
        self.dim = int(self.offsets[-1])
        if self.noise.mode != "none" and self.noise.dim != self.dim:
            raise DynamicsError(f"noise dimension {self.noise.dim} != state dimension {self.dim}")

    @property
    def n_players(self) -> int:
        return len(self.actions)

    @property
    def unilateral(self) -> bool:
        return self.stream is not None

    def blocks(self, Z):
        return [Z[..., self.offsets[k]:self.offsets[k + 1]] for k in range(self.n_players)]

    def strategies(self, t: float, Y: np.ndarray) -> np.ndarray:
        """X = Q(eta(t) Y) for a ``(B, d)`` batch of score vectors."""
        Y = np.atleast_2d(Y)
        parts = []
        for k, Yk in enumerate(self.blocks(Y)):
            parts.append(choice_map_batch(self.kernels[k], self.schedules[k].eta(t) * Yk))
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)

    def payoffs(self, t: float, X: np.ndarray, runs) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.stream is not None:
            return self.stream.values(t, runs)
        vs = payoff_vectors_batch(self.game, self.blocks(X))
        return vs[0] if len(vs) == 1 else np.concatenate(vs, axis=1)

    def step(self, Y: np.ndarray, t: float, dt: float, xi: np.ndarray | None, runs,
             X: np.ndarray | None = None):
        """One Euler-Maruyama step for a batch; returns (Y', X', payoff used)."""
        if X is None:
            X = self.strategies(t, Y)
        V = self.payoffs(t, X, runs)
        Y_new = Y + V * dt
        if self.noise.mode != "none" and dt > 0:
            Y_new = Y_new + self.noise.increment(X, xi, np.sqrt(dt))
        return Y_new, self.strategies(t + dt, Y_new), V


def _as_flat(Y, dim):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 1 or Y.size != dim:
        if isinstance(Y, np.ndarray) and Y.dtype == object:
            Y = np.concatenate(list(Y))
        else:
            raise DynamicsError(f"score vector must have {dim} entries")
    return Y


def step_srl(Y, t: float, game: Game, kernels, schedules, noise: NoiseModel, dt: float,
             rng: np.random.Generator) -> np.ndarray:
    """Advance the flat score vector ``Y`` of the game dynamics by one step."""
    system = LearningSystem(kernels=kernels, schedules=schedules, noise=noise, game=game)
    return _single_step(system, Y, t, dt, rng)


def step_unilateral(Y, t: float, stream, kernel: PenaltyKernel, schedule: LearningSchedule,
                    sigma, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Advance a single learner facing ``stream``.

    ``stream`` is a :class:`PayoffStream` or a callable ``t -> payoffs``;
    ``sigma`` is a scalar, a vector, or a callable of t.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if not isinstance(stream, PayoffStream):
        from .streams import FunctionStream
        stream = FunctionStream(fn=stream, n_actions=n)
    sig = sigma(t) if callable(sigma) else sigma
    noise = NoiseModel.diagonal(np.broadcast_to(np.asarray(sig, dtype=float), (n,)).copy())
    system = LearningSystem(kernels=[kernel], schedules=[schedule], noise=noise, stream=stream)
    return _single_step(system, Y, t, dt, rng)


def _single_step(system: LearningSystem, Y, t, dt, rng):
    if dt < 0:
        raise DynamicsError("time step must be nonnegative")
    Y = _as_flat(Y, system.dim)
    if dt == 0:
        return Y.copy()
    xi = None
    if system.noise.mode != "none":
        xi = rng.standard_normal((1, system.noise.noise_dim))
    Y_new, _, _ = system.step(Y[None, :], t, dt, xi, np.array([0]))
    Y_new = Y_new[0]
    if not np.all(np.isfinite(Y_new)):
        raise DynamicsError("score vector became non-finite; check payoffs and noise levels")
    return Y_new


# --------------------------------------------------------------------------
# drift/diffusion decomposition of the induced strategy dynamics

@dataclass
class DriftTerms:
    """Per-player drift contributions and diffusion magnitudes of dX."""

    payoff: list
    rate: list
    ito: list
    diffusion_sq: list

    def total(self) -> list:
        return [a + b + c for a, b, c in zip(self.payoff, self.rate, self.ito)]

    def flat_total(self) -> np.ndarray:
        return np.concatenate(self.total())


def drift_terms(X, game: Game, kernels, schedules, noise: NoiseModel, t: float) -> DriftTerms:
    """Decompose the drift of X = Q(eta Y) on its current support.

    Uses theta', theta'', theta''' at X and the aggregate
    Theta'' = (sum_b 1/theta''_b)^-1.  Coordinates off the support get zero.
    """
    X = as_profile(game, X)
    if noise.mode == "correlated":
        raise DynamicsError("drift decomposition is defined for independent noise only")
    flatX = flatten(X)
    sig = noise.coefficients(flatX) if noise.mode != "none" else np.zeros_like(flatX)
    sig_blocks = game.split(sig)
    vs = payoff_vectors_batch(game, [x[None, :] for x in X])
    out = DriftTerms([], [], [], [])
    for k, xk in enumerate(X):
        kern, sched = kernels[k], schedules[k]
        if kern.steep and np.any(xk <= 0):
            raise DynamicsError("strategy on the boundary: steep kernel has no finite curvature there")
        S = xk > 0
        x = xk[S]
        eta, eta_dot = sched.eta(t), sched.eta_dot(t)
        d1, d2, d3 = kern.dtheta(x), kern.d2theta(x), kern.d3theta(x)
        v = vs[k][0][S]
        s2 = sig_blocks[k][S] ** 2
        Theta = 1.0 / np.sum(1.0 / d2)
        a = eta / d2 * (v - Theta * np.sum(v / d2))
        c = (eta_dot / eta) / d2 * (d1 - Theta * np.sum(d1 / d2))
        r = Theta / d2
        U2 = (eta / d2) ** 2 * (s2 * (1 - r) ** 2 + (np.sum(r ** 2 * s2) - r ** 2 * s2))
        ito = -0.5 / d2 * (d3 * U2 - Theta * np.sum(d3 / d2 * U2))
        for store, vals in zip((out.payoff, out.rate, out.ito, out.diffusion_sq), (a, c, ito, U2)):
            full = np.zeros_like(xk)
            full[S] = vals
            store.append(full)
    return out


# --------------------------------------------------------------------------
# comparison dynamics

def _constant_sigma(noise: NoiseModel, dim: int) -> np.ndarray:
    if noise.mode == "none":
        return np.zeros(dim)
    if noise.mode != "diagonal" or not noise.is_constant:
        raise DynamicsError("aggregate-shock dynamics need constant independent noise")
    return np.asarray(noise.sigma, dtype=float)


def asrd_drift(X, game: Game, noise: NoiseModel) -> list[np.ndarray]:
    """Drift of the replicator dynamics with aggregate shocks at X."""
    X = as_profile(game, X)
    sig = game.split(_constant_sigma(noise, game.dim))
    vs = payoff_vectors_batch(game, [x[None, :] for x in X])
    out = []
    for x, v, s in zip(X, vs, sig):
        v = v[0]
        s2 = s ** 2
        out.append(x * (v - x @ v) - x * (s2 * x - np.sum(s2 * x ** 2)))
    return out


def step_asrd(X, game: Game, noise: NoiseModel, dt: float, rng: np.random.Generator):
    """Euler-Maruyama step of the aggregate-shocks replicator dynamics in X-space."""
    X = as_profile(game, X)
    if any(np.any(x <= 0) for x in X):
        raise DynamicsError("aggregate-shocks step needs an interior state")
    sig = game.split(_constant_sigma(noise, game.dim))
    drift = asrd_drift(X, game, noise)
    sq = np.sqrt(dt)
    out = []
    for x, b, s in zip(X, drift, sig):
        dW = rng.standard_normal(x.size) * sq
        new = x + b * dt + x * (s * dW - np.sum(s * x * dW))
        new = np.clip(new, 0.0, None)
        out.append(new / new.sum())
    return out


def best_response(v: np.ndarray) -> int:
    """Pure best response; ties go to the lowest action index."""
    return int(np.argmax(v))


def step_brd(x, game: Game, dt: float):
    """Euler step of the best response dynamics; returns (x', chosen best responses)."""
    x = as_profile(game, x)
    vs = payoff_vectors_batch(game, [xk[None, :] for xk in x])
    out, chosen = [], []
    for xk, v in zip(x, vs):
        b = best_response(v[0])
        target = np.zeros_like(xk)
        target[b] = 1.0
        out.append(xk + dt * (target - xk))
        chosen.append(b)
    return out, tuple(chosen)
