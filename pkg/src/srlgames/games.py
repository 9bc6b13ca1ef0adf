"""Finite normal-form games, payoff evaluation and equilibrium predicates.

Mixed profiles are represented as lists of 1-D arrays, one per player.
Batched profiles (used by the integrators) carry a leading run axis.
"""
from __future__ import annotations

import itertools
import string
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12
CLAMP_TOL = 1e-15


class GameError(ValueError):
    pass


class DegenerateComparison(UserWarning):
    """Raised as a warning when a dominance query compares an action with itself."""


@dataclass(frozen=True)
class Game:
    """A finite game in normal form.

    ``payoffs[k]`` is a tensor of shape ``actions`` holding player k's payoff
    at every pure profile.
    """

    payoffs: tuple
    labels: tuple | None = None
    zero_sum: bool = False
    name: str = ""
    actions: tuple = field(init=False)

    def __post_init__(self):
        tensors = tuple(np.array(u, dtype=float) for u in self.payoffs)
        if not tensors:
            raise GameError("a game needs at least one player")
        shape = tensors[0].shape
        if len(shape) != len(tensors):
            raise GameError(
                f"payoff tensors must have one axis per player: got {len(shape)} axes "
                f"for {len(tensors)} players")
        for k, u in enumerate(tensors):
            if u.shape != shape:
                raise GameError(f"payoff tensor of player {k} has shape {u.shape}, expected {shape}")
            if not np.all(np.isfinite(u)):
                raise GameError(f"payoff tensor of player {k} has non-finite entries")
            u.setflags(write=False)
        if min(shape) < 1:
            raise GameError("every player needs at least one action")
        if self.zero_sum:
            if len(tensors) != 2:
                raise GameError("zero-sum flag only applies to 2-player games")
            if not np.allclose(tensors[0] + tensors[1], 0.0, atol=1e-12):
                raise GameError("game flagged zero-sum but u_1 + u_2 != 0")
        labels = self.labels
        if labels is not None:
            labels = tuple(tuple(str(a) for a in lab) for lab in labels)
            if tuple(len(lab) for lab in labels) != shape:
                raise GameError("labels do not match action counts")
        object.__setattr__(self, "payoffs", tensors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "actions", tuple(int(n) for n in shape))

    @property
    def n_players(self) -> int:
        return len(self.actions)

    @property
    def dim(self) -> int:
        """Total number of (player, action) coordinates."""
        return sum(self.actions)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.actions)])

    def split(self, flat):
        """Split a player-major flat vector (or batch of them) into per-player blocks."""
        off = self.offsets
        flat = np.asarray(flat)
        return [flat[..., off[k]:off[k + 1]] for k in range(self.n_players)]

    def pure_profiles(self):
        return itertools.product(*(range(n) for n in self.actions))

    def to_dict(self) -> dict:
        out = {"payoffs": [u.tolist() for u in self.payoffs]}
        if self.labels is not None:
            out["labels"] = [list(lab) for lab in self.labels]
        if self.zero_sum:
            out["zero_sum"] = True
        if self.name:
            out["name"] = self.name
        return out


# --------------------------------------------------------------------------
# profiles

def normalize_strategy(x, n: int | None = None) -> np.ndarray:
    """Validate a probability vector, clamping tiny negative entries to zero."""
    x = np.array(x, dtype=float)
    if x.ndim != 1 or (n is not None and x.shape[0] != n):
        raise GameError(f"strategy has shape {x.shape}, expected ({n},)")
    if not np.all(np.isfinite(x)):
        raise GameError("strategy has non-finite entries")
    if np.any(x < -CLAMP_TOL):
        raise GameError(f"strategy has negative entries: {x}")
    if abs(x.sum() - 1.0) > PROB_TOL:
        raise GameError(f"strategy sums to {x.sum()!r}, not 1")
    if np.any(x < 0):
        x = np.clip(x, 0.0, None)
        x /= x.sum()
    return x


def as_profile(game: Game, x) -> list[np.ndarray]:
    """Coerce ``x`` (list of per-player vectors or a flat vector) to a mixed profile."""
    if isinstance(x, np.ndarray) and x.ndim == 1 and x.shape[0] == game.dim:
        x = game.split(x)
    if len(x) != game.n_players:
        raise GameError(f"profile has {len(x)} players, game has {game.n_players}")
    return [normalize_strategy(xk, n) for xk, n in zip(x, game.actions)]


def uniform_profile(game: Game) -> list[np.ndarray]:
    return [np.full(n, 1.0 / n) for n in game.actions]


def pure_profile(game: Game, actions: Sequence[int]) -> list[np.ndarray]:
    if len(actions) != game.n_players:
        raise GameError("pure profile needs one action per player")
    out = []
    for a, n in zip(actions, game.actions):
        if not 0 <= a < n:
            raise GameError(f"action {a} out of range for {n} actions")
        e = np.zeros(n)
        e[a] = 1.0
        out.append(e)
    return out


def flatten(profile) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=float) for p in profile])


# --------------------------------------------------------------------------
# payoffs

_LETTERS = string.ascii_lowercase


def _contract(tensor: np.ndarray, xs, skip: int, batched: bool) -> np.ndarray:
    n = tensor.ndim
    axes = _LETTERS[:n]
    b = "Z" if batched else ""
    operands = [tensor]
    subs = [axes]
    for j in range(n):
        if j == skip:
            continue
        operands.append(xs[j])
        subs.append(b + axes[j])
    spec = ",".join(subs) + "->" + b + axes[skip]
    return np.einsum(spec, *operands)


def payoff_vector(game: Game, k: int, x) -> np.ndarray:
    """Payoff of each pure action of player ``k`` against the opponents in ``x``."""
    x = as_profile(game, x)
    return _contract(game.payoffs[k], x, k, batched=False)


def payoff_vectors_batch(game: Game, xs) -> list[np.ndarray]:
    """Payoff vectors of all players for a batch of profiles.

    ``xs[k]`` has shape ``(B, n_k)``; no validation is done (hot path).
    """
    if game.n_players == 1:
        # nothing to contract; broadcast the payoff vector over the batch
        return [np.broadcast_to(game.payoffs[0], np.shape(xs[0])).copy()]
    return [_contract(game.payoffs[k], xs, k, batched=True) for k in range(game.n_players)]


def expected_payoff(game: Game, k: int, x) -> float:
    x = as_profile(game, x)
    v = _contract(game.payoffs[k], x, k, batched=False)
    return float(v @ x[k])


def nash_gap(game: Game, x) -> float:
    """Largest gain any player can get by a unilateral pure deviation.

    Zero exactly at Nash equilibria; always nonnegative.
    """
    x = as_profile(game, x)
    gap = 0.0
    for k in range(game.n_players):
        v = _contract(game.payoffs[k], x, k, batched=False)
        gap = max(gap, float(v.max() - v @ x[k]))
    return gap


def nash_gap_batch(game: Game, xs) -> np.ndarray:
    vs = payoff_vectors_batch(game, xs)
    gaps = [v.max(axis=-1) - np.einsum("ij,ij->i", v, x) for v, x in zip(vs, xs)]
    return np.maximum(np.max(gaps, axis=0), 0.0)


def is_strict_nash(game: Game, actions) -> bool:
    """True iff every unilateral pure deviation from ``actions`` strictly loses."""
    actions = _as_pure(game, actions)
    for k in range(game.n_players):
        u = game.payoffs[k]
        here = u[actions]
        for b in range(game.actions[k]):
            if b == actions[k]:
                continue
            dev = list(actions)
            dev[k] = b
            if not u[tuple(dev)] < here:
                return False
    return True


def _as_pure(game: Game, actions) -> tuple:
    # accept either action indices or a vertex profile
    if len(actions) and not np.isscalar(actions[0]):
        idx = []
        for xk, n in zip(actions, game.actions):
            xk = np.asarray(xk, dtype=float)
            hits = np.flatnonzero(np.isclose(xk, 1.0))
            if xk.shape != (n,) or hits.size != 1 or not np.allclose(np.delete(xk, hits), 0.0):
                raise GameError("profile is not a vertex of the strategy space")
            idx.append(int(hits[0]))
        actions = idx
    actions = tuple(int(a) for a in actions)
    if len(actions) != game.n_players:
        raise GameError("pure profile needs one action per player")
    for a, n in zip(actions, game.actions):
        if not 0 <= a < n:
            raise GameError(f"action {a} out of range for {n} actions")
    return actions


pure_actions = _as_pure


def _opponent_profiles(game: Game, k: int):
    ranges = [range(n) if j != k else [None] for j, n in enumerate(game.actions)]
    return itertools.product(*ranges)


def dominance_margin(game: Game, k: int, a: int, b: int) -> float:
    """Smallest payoff advantage of action ``b`` over action ``a`` for player ``k``.

    The minimum of a multilinear function over the strategy space is attained
    at a vertex, so enumerating opponents' pure profiles is exact.  ``a`` is
    strictly dominated by ``b`` iff the margin is positive.
    """
    n = game.actions[k]
    if not (0 <= a < n and 0 <= b < n):
        raise GameError("action index out of range")
    if a == b:
        warnings.warn("dominance margin of an action against itself", DegenerateComparison,
                      stacklevel=2)
        return 0.0
    u = game.payoffs[k]
    diff = np.take(u, b, axis=k) - np.take(u, a, axis=k)
    return float(diff.min())


def mixed_dominance_margin(game: Game, k: int, p, q) -> float:
    """min over opponent profiles of <v_k, q - p>; positive iff p is dominated by q."""
    n = game.actions[k]
    p = normalize_strategy(p, n)
    q = normalize_strategy(q, n)
    u = np.moveaxis(game.payoffs[k], k, -1)
    return float((u @ (q - p)).min())


def iterated_dominance(game: Game) -> list[list[int]]:
    """Surviving actions after repeated elimination of pure strategies
    strictly dominated by other pure strategies."""
    alive = [list(range(n)) for n in game.actions]
    changed = True
    while changed:
        changed = False
        sub = game.payoffs
        for k in range(game.n_players):
            idx = np.ix_(*alive)
            u = sub[k][idx]
            for a_pos in range(len(alive[k]) - 1, -1, -1):
                ua = np.take(u, a_pos, axis=k)
                for b_pos in range(len(alive[k])):
                    if b_pos != a_pos and (np.take(u, b_pos, axis=k) - ua).min() > 0:
                        del alive[k][a_pos]
                        u = np.delete(u, a_pos, axis=k)
                        changed = True
                        break
    return alive


# --------------------------------------------------------------------------
# standard games

def matching_pennies() -> Game:
    a = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Game(payoffs=(a, -a), labels=(("H", "T"), ("H", "T")), zero_sum=True,
                name="matching-pennies")


def coordination_game(high: float = 2.0, low: float = 1.0) -> Game:
    a = np.array([[high, 0.0], [0.0, low]])
    return Game(payoffs=(a, a.copy()), labels=(("A", "B"), ("A", "B")), name="coordination")


def prisoners_dilemma(T=5.0, R=3.0, P=1.0, S=0.0) -> Game:
    u1 = np.array([[R, S], [T, P]])
    return Game(payoffs=(u1, u1.T.copy()), labels=(("C", "D"), ("C", "D")),
                name="prisoners-dilemma")


def single_player(payoffs) -> Game:
    return Game(payoffs=(np.asarray(payoffs, dtype=float),), name="single-player")


def random_game(actions: Sequence[int], rng: np.random.Generator, scale: float = 1.0) -> Game:
    return Game(payoffs=tuple(scale * rng.standard_normal(tuple(actions))
                              for _ in actions))
