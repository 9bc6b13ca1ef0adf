"""Stochastic stability of strict equilibria: thresholds and escape experiments."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..dynamics.ensemble import ScoreGapMax, simulate_ensemble
from ..dynamics.system import LearningSystem
from ..games import Game, pure_actions, is_strict_nash, payoff_vector
from ..regularizers import choice_map
from .stats import wilson_interval


class StabilityError(ValueError):
    pass


def neighbourhood_margin(game: Game, eq, radius: float) -> np.ndarray:
    """Per-player minimum payoff advantage of the equilibrium action over the box
    ``x_{k, a*} >= 1 - radius``.  Payoffs are multilinear, so vertices suffice."""
    eq = pure_actions(game, eq)
    verts = []
    for k, n in enumerate(game.actions):
        e = np.eye(n)
        vk = [e[eq[k]]] + [(1 - radius) * e[eq[k]] + radius * e[b] for b in range(n) if b != eq[k]]
        verts.append(vk)
    m = np.full(game.n_players, np.inf)
    for prof in itertools.product(*verts):
        for k in range(game.n_players):
            v = payoff_vector(game, k, list(prof))
            others = np.delete(v, eq[k])
            if others.size:
                m[k] = min(m[k], float(v[eq[k]] - others.max()))
    return m


def _score_gap_for_radius(kernel, n: int, radius: float) -> float:
    # smallest M with Q(0, -M, ..., -M)[0] >= 1 - radius
    if n == 1:
        return 0.0
    lo, hi = 0.0, 1.0
    while choice_map(kernel, np.r_[0.0, np.full(n - 1, -hi)])[0] < 1 - radius:
        hi *= 2
        if hi > 1e6:
            raise StabilityError("cannot reach the neighbourhood with finite scores")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if choice_map(kernel, np.r_[0.0, np.full(n - 1, -mid)])[0] >= 1 - radius:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class StabilityThreshold:
    M: float
    M_noise: float
    M_neighbourhood: float
    margins: np.ndarray
    radius: float
    eps: float


def stability_threshold(system: LearningSystem, eq, eps: float, radius: float = 0.1,
                        headroom: float = 0.01) -> StabilityThreshold:
    """Score-gap level M for the escape experiment.

    M has to beat ``eta_k(0) sigma_max^2 log(N / eps) / m_k`` for every
    player, where m_k is the payoff margin of the equilibrium action over the
    neighbourhood, and has to be large enough that scores at -M already place
    the strategies inside that neighbourhood.  ``headroom`` turns the strict
    inequality into a concrete number.
    """
    game = system.game
    if game is None:
        raise StabilityError("stability needs a game")
    if not 0 < eps < 1:
        raise StabilityError("eps must lie in (0, 1)")
    m = neighbourhood_margin(game, eq, radius)
    if np.any(m <= 0):
        raise StabilityError(f"equilibrium action does not dominate on the neighbourhood (m = {m})")
    N = game.n_players
    smax = float(system.noise.check_bounds(game.actions)) if system.noise.mode == "diagonal" \
        else float(system.noise.sigma_max or 0.0)
    eta0 = np.array([s.eta(0.0) for s in system.schedules])
    M_noise = float(np.max(eta0 * smax ** 2 * math.log(N / eps) / m))
    M_nb = max(_score_gap_for_radius(system.kernels[k], n, radius)
               for k, n in enumerate(game.actions))
    return StabilityThreshold(M=(1.0 + headroom) * max(M_noise, M_nb), M_noise=M_noise,
                              M_neighbourhood=M_nb, margins=m, radius=radius, eps=eps)


def initial_scores_below(system: LearningSystem, eq, level: float) -> np.ndarray:
    """Scores with eta_k(0) (Y_ka - Y_ka*) = -level for every non-equilibrium action."""
    eq = pure_actions(system.game, eq)
    Y = np.zeros(system.dim)
    for k, n in enumerate(system.actions):
        off = system.offsets[k]
        eta0 = system.schedules[k].eta(0.0)
        for a in range(n):
            if a != eq[k]:
                Y[off + a] = -level / eta0
    return Y


@dataclass
class StabilityResult:
    M: float
    n_runs: int
    escaped: np.ndarray
    distance: np.ndarray
    tol: float

    @property
    def escape_fraction(self) -> float:
        return float(self.escaped.mean())

    @property
    def escape_ci(self) -> tuple[float, float]:
        return wilson_interval(int(self.escaped.sum()), self.n_runs)

    @property
    def converged_fraction(self) -> float:
        return float(np.mean(self.distance <= self.tol))


def stability_experiment(system: LearningSystem, eq, M: float, *, dt: float, T: float,
                         n_runs: int, seed: int, tol: float = 1e-3, batch_size: int = 100,
                         workers: int = 1) -> StabilityResult:
    """Start every run at score gap -2M and record whether any gap ever exceeds -M."""
    game = system.game
    eq = pure_actions(game, eq)
    if not is_strict_nash(game, eq):
        raise StabilityError(f"{eq} is not a strict Nash equilibrium")
    pairs = []
    for k, n in enumerate(game.actions):
        off = int(system.offsets[k])
        pairs += [(off + a, off + eq[k], k) for a in range(n) if a != eq[k]]
    mon = ScoreGapMax(pairs=tuple(pairs))
    Y0 = initial_scores_below(system, eq, 2.0 * M)
    res = simulate_ensemble(system, dt, T, n_runs, seed=seed, Y0=Y0, batch_size=batch_size,
                            workers=workers, monitors=[mon], store=())
    target = np.concatenate([np.eye(n)[eq[k]] for k, n in enumerate(game.actions)])
    distance = np.max(np.abs(res.final_X - target), axis=1)
    return StabilityResult(M=M, n_runs=n_runs, escaped=res.monitors[mon.name]["max_gap"] > -M,
                           distance=distance, tol=tol)
