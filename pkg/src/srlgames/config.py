"""Experiment configuration: parsing, validation, preset merging and system assembly.

A config is a nested mapping (YAML or JSON on disk) with sections ``game``,
``kernels``, ``schedules``, ``noise``, ``initial``, ``integration``,
``ensemble``, ``outputs`` and ``analysis``.  A top-level ``preset`` key pulls
in a built-in scenario and deep-merges the remaining keys over it.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .congestion import CongestionNetwork, build_congestion_game, parallel_links, two_route_network
from .dynamics.noise import NoiseError, NoiseModel
from .dynamics.schedules import LearningSchedule, ScheduleError
from .dynamics.streams import StreamError, stream_from_dict
from .dynamics.system import LearningSystem
from .games import (Game, GameError, coordination_game, matching_pennies, prisoners_dilemma,
                    single_player)
from .regularizers import get_kernel

SECTIONS = ("name", "description", "preset", "game", "kernels", "schedules", "noise", "initial",
            "integration", "ensemble", "outputs", "analysis")

DEFAULTS = {
    "kernels": "entropy",
    "schedules": {"form": "constant", "eta0": 1.0},
    "noise": {"mode": "none"},
    "integration": {"dt": 1e-3, "T": 10.0, "thinning": 1, "batch_size": 100},
    "ensemble": {"n_runs": 1, "seed": 0},
    "outputs": {"series": ["trajectories"], "trajectories": 1},
    "analysis": [],
}


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_document(path) -> dict:
    """Read a YAML or JSON document; a run manifest yields its embedded config."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    if "manifest_version" in doc and "config" in doc:
        doc = doc["config"]
    return doc


def resolve(doc: dict) -> dict:
    """Apply the preset (if any) and the defaults; returns a full, plain config dict."""
    from .presets import get_preset
    doc = dict(doc)
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    name = doc.pop("preset", None)
    base = get_preset(name) if name is not None else {}
    merged = deep_merge(base, doc)
    if name is not None:
        merged.setdefault("name", name)
    full = deep_merge(DEFAULTS, merged)
    if "analysis" in merged:
        full["analysis"] = copy.deepcopy(merged["analysis"])
    return full


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# --------------------------------------------------------------------------
# assembly

_GAMES = {
    "matching-pennies": lambda **kw: matching_pennies(),
    "coordination": lambda high=2.0, low=1.0: coordination_game(high, low),
    "prisoners-dilemma": lambda **kw: prisoners_dilemma(**kw),
    "dominated": lambda values=(0.0, 1.0): single_player(values),
}

_NETWORKS = {
    "two-route": two_route_network,
    "parallel-links": lambda **kw: parallel_links(
        **{k: (tuple(map(tuple, v)) if k == "delays" else v) for k, v in kw.items()}),
}


@dataclass
class Scenario:
    """Everything built from a resolved config."""

    config: dict
    system: LearningSystem
    game: Game | None
    network: CongestionNetwork | None
    Y0: np.ndarray
    dt: float
    T: float
    thinning: int
    batch_size: int
    n_runs: int
    seed: int

    @property
    def name(self) -> str:
        return str(self.config.get("name", "experiment"))


def _per_player(spec, n, what):
    if isinstance(spec, list):
        if len(spec) != n:
            raise ConfigError(f"{what}: expected {n} entries, got {len(spec)}")
        return spec
    return [spec] * n


def _build_game(spec: dict, seed: int):
    if not isinstance(spec, dict):
        raise ConfigError("game must be a mapping")
    keys = {"preset", "payoffs", "congestion", "stream"} & set(spec)
    if len(keys) != 1:
        raise ConfigError("game needs exactly one of preset, payoffs, congestion, stream")
    kind = keys.pop()
    params = {k: v for k, v in spec.items() if k not in ("preset", "payoffs", "congestion", "stream")}
    if kind == "preset":
        try:
            factory = _GAMES[spec["preset"]]
        except KeyError:
            raise ConfigError(f"unknown game preset {spec['preset']!r}; known: {sorted(_GAMES)}") from None
        return factory(**params), None, None, None
    if kind == "payoffs":
        return Game(payoffs=tuple(spec["payoffs"]), zero_sum=bool(spec.get("zero_sum", False)),
                    name=str(spec.get("name", ""))), None, None, None
    if kind == "congestion":
        net = spec["congestion"]
        if "network" in net:
            nparams = {k: v for k, v in net.items() if k != "network"}
            try:
                network = _NETWORKS[net["network"]](**nparams)
            except KeyError:
                raise ConfigError(f"unknown network {net['network']!r}; known: {sorted(_NETWORKS)}") from None
        else:
            network = CongestionNetwork.from_dict(net)
        game, cov = build_congestion_game(network)
        return game, network, cov, None
    return None, None, None, stream_from_dict(spec["stream"], seed=seed)


def _build_noise(spec: dict, dim: int, cov) -> NoiseModel:
    mode = spec.get("mode", "none")
    if mode == "none":
        return NoiseModel.none(dim)
    if mode == "diagonal":
        sigma = spec.get("sigma", 1.0)
        slope = spec.get("slope")
        noise = NoiseModel.diagonal(sigma if np.ndim(sigma) else float(sigma), slope=slope, dim=dim,
                                    sigma_max=spec.get("sigma_max"))
        return noise
    if mode == "correlated":
        if "covariance" in spec:
            return NoiseModel.correlated(spec["covariance"])
        if cov is None:
            raise ConfigError("correlated noise needs a covariance or a congestion network")
        return NoiseModel.correlated(cov)
    raise ConfigError(f"unknown noise mode {mode!r}")


def build(cfg: dict) -> Scenario:
    """Validate a resolved config and assemble the learning system."""
    try:
        return _build(cfg)
    except (GameError, NoiseError, ScheduleError, StreamError, KeyError, TypeError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise ConfigError(f"{type(exc).__name__}: {msg}") from None


def _build(cfg: dict) -> Scenario:
    integ = cfg["integration"]
    ens = cfg["ensemble"]
    dt = float(integ["dt"])
    T = float(integ["T"])
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigError("integration.dt must be positive")
    if not T >= dt:
        raise ConfigError("integration.T must be at least dt")
    n_runs = int(ens["n_runs"])
    if n_runs < 1:
        raise ConfigError("ensemble.n_runs must be at least 1")
    seed = int(ens.get("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("ensemble.seed must be a 64-bit unsigned integer")
    thinning = int(integ.get("thinning", 1))
    batch = int(integ.get("batch_size", 100))
    if thinning < 1 or batch < 1:
        raise ConfigError("thinning and batch_size must be positive")

    if "game" not in cfg:
        raise ConfigError("config has no game")
    game, network, cov, stream = _build_game(cfg["game"], seed)
    n = game.n_players if game is not None else 1
    kernels = [get_kernel(k) for k in _per_player(cfg["kernels"], n, "kernels")]
    schedules = [LearningSchedule.from_dict(s) for s in _per_player(cfg["schedules"], n, "schedules")]
    dim = game.dim if game is not None else stream.n_actions
    noise = _build_noise(cfg["noise"], dim, cov)
    if noise.mode == "diagonal":
        noise.check_bounds(game.actions if game is not None else (dim,))
    system = LearningSystem(kernels=kernels, schedules=schedules, noise=noise, game=game,
                            stream=stream)
    init = cfg.get("initial") or {}
    Y0 = np.asarray(init.get("scores", np.zeros(dim)), dtype=float)
    if Y0.shape != (dim,):
        raise ConfigError(f"initial.scores needs {dim} entries")
    n_steps = round(T / dt)
    if n_steps > 10 ** 8:
        raise ConfigError(f"{n_steps} steps exceed the budget of 1e8")
    return Scenario(config=cfg, system=system, game=game, network=network, Y0=Y0, dt=dt, T=T,
                    thinning=thinning, batch_size=batch, n_runs=n_runs, seed=seed)


def load(path_or_doc) -> Scenario:
    doc = path_or_doc if isinstance(path_or_doc, dict) else load_document(path_or_doc)
    return build(resolve(doc))
