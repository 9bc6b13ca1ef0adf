"""Atomic congestion games on networks with edge-level observation noise.

Each player picks one path; a path's cost is the sum of affine edge delays
evaluated at the number of players using each edge.  Noise on an edge is
shared by every path through it, so the score perturbations of two paths are
correlated over their common edges.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .games import Game, GameError


@dataclass(frozen=True)
class Edge:
    name: str
    a: float = 0.0       # free-flow delay
    b: float = 0.0       # delay per unit of load
    sigma: float = 0.0   # observation noise level

    def delay(self, load: int) -> float:
        return self.a + self.b * load


@dataclass(frozen=True)
class CongestionNetwork:
    edges: tuple
    paths: tuple   # paths[k][alpha] is a tuple of edge names
    player_names: tuple | None = None

    def __post_init__(self):
        edges = tuple(e if isinstance(e, Edge) else Edge(**e) for e in self.edges)
        names = [e.name for e in edges]
        if len(set(names)) != len(names):
            raise GameError("duplicate edge names")
        for e in edges:
            if e.sigma < 0:
                raise GameError(f"edge {e.name} has negative noise level")
        paths = tuple(tuple(tuple(p) for p in player) for player in self.paths)
        if not paths:
            raise GameError("network has no players")
        for k, player in enumerate(paths):
            if not player:
                raise GameError(f"player {k} has no paths")
            for p in player:
                if not p:
                    raise GameError(f"player {k} has an empty path")
                unknown = set(p) - set(names)
                if unknown:
                    raise GameError(f"path uses unknown edges {sorted(unknown)}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "paths", paths)

    @property
    def edge_index(self) -> dict:
        return {e.name: i for i, e in enumerate(self.edges)}

    def incidence(self) -> np.ndarray:
        """Edge-path incidence matrix over all (player, path) coordinates, player-major."""
        idx = self.edge_index
        cols = [p for player in self.paths for p in player]
        P = np.zeros((len(self.edges), len(cols)))
        for c, p in enumerate(cols):
            for name in p:
                P[idx[name], c] = 1.0
        return P

    @classmethod
    def from_dict(cls, spec: dict) -> "CongestionNetwork":
        edges = [Edge(name=str(e["name"]), a=float(e.get("a", 0.0)), b=float(e.get("b", 0.0)),
                      sigma=float(e.get("sigma", 0.0))) for e in spec["edges"]]
        players = spec["players"]
        paths = [[list(p) for p in pl["paths"]] if isinstance(pl, dict) else pl for pl in players]
        return cls(edges=tuple(edges), paths=tuple(paths))

    def to_dict(self) -> dict:
        return {
            "edges": [{"name": e.name, "a": e.a, "b": e.b, "sigma": e.sigma} for e in self.edges],
            "players": [{"paths": [list(p) for p in player]} for player in self.paths],
        }


def build_congestion_game(network: CongestionNetwork) -> tuple[Game, np.ndarray]:
    """Payoff game (negated path delays) and the state-independent noise covariance.

    The covariance between coordinates (k, alpha) and (j, beta) is the sum of
    sigma_r^2 over edges r common to both paths.
    """
    idx = network.edge_index
    shape = tuple(len(player) for player in network.paths)
    n = len(shape)
    payoffs = [np.zeros(shape) for _ in range(n)]
    for profile in itertools.product(*(range(s) for s in shape)):
        load = np.zeros(len(network.edges))
        for k, a in enumerate(profile):
            for name in network.paths[k][a]:
                load[idx[name]] += 1
        for k, a in enumerate(profile):
            cost = sum(network.edges[idx[name]].delay(load[idx[name]])
                       for name in network.paths[k][a])
            payoffs[k][profile] = -cost
    P = network.incidence()
    sig2 = np.array([e.sigma ** 2 for e in network.edges])
    cov = P.T @ (sig2[:, None] * P)
    labels = tuple(tuple("+".join(p) for p in player) for player in network.paths)
    return Game(payoffs=tuple(payoffs), labels=labels, name="congestion"), cov


def two_route_network(shared_sigma: float = 1.0, route_sigma: float = 1.0,
                      extra_delay: float = 1.0) -> CongestionNetwork:
    """One traveller, two routes that share their first edge; the second route is slower."""
    edges = (
        Edge("s", a=1.0, sigma=shared_sigma),
        Edge("fast", a=1.0, sigma=route_sigma),
        Edge("slow", a=1.0 + extra_delay, sigma=route_sigma),
    )
    return CongestionNetwork(edges=edges, paths=((("s", "fast"), ("s", "slow")),))


def parallel_links(n_players: int = 2, delays: Sequence[tuple] = ((1.0, 2.0), (1.5, 2.0)),
                   sigma: float = 0.0) -> CongestionNetwork:
    """Players share a set of parallel links with affine delays ``a + b * load``."""
    edges = tuple(Edge(f"link{i}", a=a, b=b, sigma=sigma) for i, (a, b) in enumerate(delays))
    paths = tuple(tuple((e.name,) for e in edges) for _ in range(n_players))
    return CongestionNetwork(edges=edges, paths=paths)
