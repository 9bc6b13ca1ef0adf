"""Built-in scenarios.  Each one is a complete config; checks carry their own overrides."""
from __future__ import annotations

import copy
import math

_CONGESTION_NET = {"network": "parallel-links", "n_players": 2,
                   "delays": [[1.0, 2.0], [1.5, 2.0]]}

_CONGESTION_CHECKS = [
    {"check": "equilibrium-convergence", "tol": 1e-3, "fraction": 0.9},
]

_CATALOG = {
    "congestion-2x2-logit": {
        "description": "two players on two parallel links, logit choice, unit noise",
        "game": {"congestion": _CONGESTION_NET},
        "kernels": "entropy",
        "schedules": {"form": "constant", "eta0": 1.0},
        "noise": {"mode": "diagonal", "sigma": 1.0},
        "integration": {"dt": 0.01, "T": 50.0, "thinning": 10},
        "ensemble": {"n_runs": 100, "seed": 20240611},
        "outputs": {"series": ["trajectories", "final-states"], "trajectories": 2},
        "analysis": _CONGESTION_CHECKS,
    },
    "congestion-2x2-projection": {
        "description": "two players on two parallel links, projection choice, unit noise",
        "game": {"congestion": _CONGESTION_NET},
        "kernels": "quadratic",
        "schedules": {"form": "constant", "eta0": 1.0},
        "noise": {"mode": "diagonal", "sigma": 1.0},
        "integration": {"dt": 0.01, "T": 50.0, "thinning": 10},
        "ensemble": {"n_runs": 100, "seed": 20240612},
        "outputs": {"series": ["trajectories", "final-states"], "trajectories": 2},
        "analysis": _CONGESTION_CHECKS,
    },
    "matching-pennies-timeavg": {
        "description": "time averages of noisy exponential weights in Matching Pennies",
        "game": {"preset": "matching-pennies"},
        "kernels": "entropy",
        "schedules": {"form": "power", "eta0": 1.0, "gamma": 0.5, "t0": 1.0},
        "noise": {"mode": "diagonal", "sigma": 1.0},
        "integration": {"dt": 0.01, "T": 1.0e4, "thinning": 100},
        "ensemble": {"n_runs": 100, "seed": 20240613},
        "outputs": {"series": ["trajectories", "time-average"], "trajectories": 1},
        "analysis": [
            {"check": "time-average", "tol": 0.05, "fraction": 0.9},
            {"check": "gap-decrease", "early": 1.0e3, "ratio": 0.5},
        ],
    },
    "dominated-single-player": {
        "description": "one learner, action 0 strictly dominated by a unit margin",
        "game": {"preset": "dominated", "values": [0.0, 1.0]},
        "kernels": "entropy",
        "schedules": {"form": "constant", "eta0": 1.0},
        "noise": {"mode": "diagonal", "sigma": 1.0},
        "integration": {"dt": 0.01, "T": 1.0e3, "thinning": 10},
        "ensemble": {"n_runs": 200, "seed": 20240614},
        "outputs": {"series": ["trajectories", "final-states"], "trajectories": 1},
        "analysis": [
            {"check": "extinction-envelope", "action": 0, "eps": 0.5, "after": 100.0,
             "fraction": 0.95},
            {"check": "exceedance", "action": 0, "delta": 1e-20, "times": [50.0, 100.0, 200.0],
             "n_runs": 1000, "T": 200.0},
            {"check": "hitting-time", "action": 0, "delta": math.exp(-3.0), "n_runs": 1000,
             "dt": 1e-4, "T": 40.0},
        ],
    },
    "coordination-stability": {
        "description": "escape from the payoff-dominant strict equilibrium of a 2x2 coordination game",
        "game": {"preset": "coordination", "high": 2.0, "low": 1.0},
        "kernels": "entropy",
        "schedules": {"form": "constant", "eta0": 1.0},
        "noise": {"mode": "diagonal", "sigma": 1.0},
        "integration": {"dt": 0.01, "T": 1.0e3, "thinning": 100},
        "ensemble": {"n_runs": 1000, "seed": 20240615},
        "outputs": {"series": ["trajectories"], "trajectories": 1},
        "analysis": [
            {"check": "stability", "equilibrium": [0, 0], "eps": 0.1, "radius": 0.1,
             "tol": 1e-3, "max_escape": 0.1, "fraction": 0.9},
        ],
    },
    "adversarial-regret": {
        "description": "one learner against a random square-wave payoff stream",
        "game": {"stream": {"kind": "square-wave", "n_actions": 2, "period": 1.0,
                            "amplitude": 1.0, "random_signs": True}},
        "kernels": "entropy",
        "schedules": {"form": "power", "eta0": 1.0, "gamma": 0.5, "t0": 1.0},
        "noise": {"mode": "diagonal", "sigma": 1.0},
        "integration": {"dt": 0.01, "T": 1.0e4, "thinning": 100},
        "ensemble": {"n_runs": 200, "seed": 20240616},
        "outputs": {"series": ["trajectories", "regret"], "trajectories": 1},
        "analysis": [
            {"check": "regret-bound", "c": 3.0, "t_min": 100.0, "t_max": 1.0e4, "fraction": 0.95},
            {"check": "regret-slope", "low": 0.45, "high": 0.65},
            {"check": "regret-noiseless", "n_runs": 20, "T": 1.0e3,
             "overrides": {"noise": {"mode": "none"},
                           "schedules": {"form": "constant", "eta0": 1.0}}},
        ],
    },
    "correlated-congestion": {
        "description": "two routes sharing an edge; correlated noise from the shared edge",
        "game": {"congestion": {"network": "two-route", "shared_sigma": 1.0, "route_sigma": 1.0,
                                "extra_delay": 1.0}},
        "kernels": "entropy",
        "schedules": {"form": "constant", "eta0": 1.0},
        "noise": {"mode": "correlated"},
        "integration": {"dt": 0.01, "T": 200.0, "thinning": 10},
        "ensemble": {"n_runs": 1000, "seed": 20240617},
        "outputs": {"series": ["trajectories", "final-states"], "trajectories": 1},
        "analysis": [
            {"check": "covariance", "steps": 1000000, "n_se": 3.0},
            {"check": "exceedance", "action": 1, "delta": 1e-20, "times": [50.0, 100.0, 200.0]},
            {"check": "hitting-time", "action": 1, "delta": math.exp(-3.0), "dt": 1e-4,
             "T": 40.0},
        ],
    },
}


def preset_names() -> list[str]:
    return list(_CATALOG)


def get_preset(name: str) -> dict:
    try:
        cfg = copy.deepcopy(_CATALOG[name])
    except KeyError:
        from .config import ConfigError
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(_CATALOG)}") from None
    cfg["name"] = name
    return cfg


def list_presets() -> list[dict]:
    """Catalog entries: name, description, kernels and checks."""
    return [{"name": n, "description": c["description"], "kernels": c["kernels"],
             "checks": [a["check"] for a in c["analysis"]]} for n, c in _CATALOG.items()]
