"""Run a resolved config: simulate, evaluate checks, write outputs."""
from __future__ import annotations

import copy
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis.averaging import time_average
from .analysis.checks import ENSEMBLE_KEYS, Verdict, get_check
from .analysis.regret import regret_bound, regret_from_integrals
from .analysis.stats import EnsembleSummary
from .config import ConfigError, Scenario, build, config_hash, deep_merge
from .dynamics.ensemble import FirstPassage, simulate_ensemble
from .io import coordinate_names, file_digest, write_csv, write_json, write_trajectory_csv
from .regularizers import penalty_range

log = logging.getLogger(__name__)

SERIES = ("trajectories", "time-average", "regret", "final-states")


@dataclass
class Outcome:
    verdicts: list
    files: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def check_scenario(scen: Scenario, spec: dict) -> Scenario:
    """The scenario a check runs on, after its ensemble overrides."""
    if not any(k in spec for k in ENSEMBLE_KEYS):
        return scen
    cfg = copy.deepcopy(scen.config)
    cfg = deep_merge(cfg, spec.get("overrides", {}))
    for key, section in (("n_runs", "ensemble"), ("seed", "ensemble"), ("T", "integration"),
                         ("dt", "integration")):
        if key in spec:
            cfg[section][key] = spec[key]
    return build(cfg)


def _sim_key(scen: Scenario) -> str:
    cfg = {k: v for k, v in scen.config.items() if k not in ("analysis", "outputs", "name",
                                                             "description")}
    return config_hash(cfg)


def _merge_store(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, lim in b.items():
        if k not in out:
            out[k] = lim
        elif out[k] is not None and lim is not None:
            out[k] = max(out[k], lim)
        else:
            out[k] = None
    return out


def _output_store(scen: Scenario) -> dict:
    outs = scen.config["outputs"]
    series = outs.get("series", [])
    unknown = set(series) - set(SERIES)
    if unknown:
        raise ConfigError(f"unknown output series {sorted(unknown)}; known: {list(SERIES)}")
    n = int(outs.get("trajectories", 1))
    store = {}
    if "trajectories" in series or "time-average" in series:
        store.update({"Y": n, "X": n})
    if "time-average" in series:
        store["Xint"] = n
    if "regret" in series:
        if scen.system.stream is None:
            raise ConfigError("regret output needs a payoff stream game")
        store.update({"Vint": None, "PVint": None})
    return store


def run_experiment(scen: Scenario, out_dir=None, workers: int = 1) -> Outcome:
    specs = scen.config.get("analysis") or []
    groups = {}   # sim key -> [scenario, [(index, spec, check, tag)]]
    verdicts: list[Verdict | None] = [None] * len(specs)
    standalone = []
    for i, spec in enumerate(specs):
        if not isinstance(spec, dict) or "check" not in spec:
            raise ConfigError(f"analysis entry {i} needs a 'check' kind")
        chk = get_check(spec["check"])
        sub = check_scenario(scen, spec)
        if chk.standalone:
            standalone.append((i, spec, chk, sub))
            continue
        key = _sim_key(sub)
        groups.setdefault(key, [sub, []])[1].append((i, spec, chk, f"{i}:{chk.kind}"))

    base_key = _sim_key(scen)
    out_store = _output_store(scen) if out_dir is not None else {}
    if out_dir is not None and base_key not in groups:
        groups[base_key] = [scen, []]

    base_result = None
    for key, (sub, members) in groups.items():
        monitors, store = [], {}
        for i, spec, chk, tag in members:
            monitors += chk.monitors(sub, spec, tag)
            store = _merge_store(store, chk.store(sub, spec))
        n_runs = sub.n_runs
        if key == base_key and out_dir is not None:
            store = _merge_store(store, out_store)
            if not members and "final-states" not in scen.config["outputs"].get("series", []):
                n_runs = min(n_runs, max(int(scen.config["outputs"].get("trajectories", 1)), 1))
        stop = not store and monitors and all(isinstance(m, FirstPassage) for m in monitors)
        log.info("simulating %s: %d runs, dt=%g, T=%g", sub.name, n_runs, sub.dt, sub.T)
        res = simulate_ensemble(sub.system, sub.dt, sub.T, n_runs, seed=sub.seed,
                                thinning=sub.thinning, Y0=sub.Y0, batch_size=sub.batch_size,
                                workers=workers, monitors=monitors, store=store,
                                stop_early=bool(stop))
        for i, spec, chk, tag in members:
            verdicts[i] = chk.evaluate(sub, spec, res, tag)
            log.info(verdicts[i].line())
        if key == base_key:
            base_result = res
    for i, spec, chk, sub in standalone:
        log.info("running %s on %s", chk.kind, sub.name)
        verdicts[i] = chk.run(sub, spec, workers)
        log.info(verdicts[i].line())

    outcome = Outcome(verdicts=list(verdicts))
    if out_dir is not None:
        outcome.files = write_outputs(scen, base_result, outcome, Path(out_dir))
    return outcome


def write_outputs(scen: Scenario, res, outcome: Outcome, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    series = scen.config["outputs"].get("series", [])
    actions = scen.system.actions
    n_traj = min(int(scen.config["outputs"].get("trajectories", 1)), res.n_runs)
    if "trajectories" in series:
        for i in range(n_traj):
            tr = res.trajectory(i)
            files.append(write_trajectory_csv(out / f"trajectory_run{i}.csv", tr, actions))
            files.append(write_json(out / f"trajectory_run{i}.json", {
                "run": i, "seed": res.seed, "dt": res.dt, "T": res.T,
                "thinning": scen.thinning, "config": scen.config}))
    if "time-average" in series:
        for i in range(n_traj):
            ta = time_average(res.trajectory(i), scen.game)
            cols = coordinate_names("Xbar", actions)
            data = np.column_stack([ta.times, ta.Xbar] + ([ta.gap] if ta.gap is not None else []))
            files.append(write_csv(out / f"time_average_run{i}.csv",
                                   ["t"] + cols + (["nash_gap"] if ta.gap is not None else []), data))
    if "regret" in series:
        reg = regret_from_integrals(res.stored["Vint"], res.stored["PVint"][..., 0])
        summ = EnsembleSummary.from_values(res.times, reg, seeds=(res.seed,))
        sched, kern = scen.system.schedules[0], scen.system.kernels[0]
        n = scen.system.dim
        smax = 0.0 if scen.system.noise.mode == "none" else float(scen.system.noise.check_bounds((n,)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bound = regret_bound(penalty_range(kern, n), kern.K, smax, n, sched, res.times)
        rows = list(summ.rows())
        header = list(rows[0]) + ["bound"]
        files.append(write_csv(out / "regret_summary.csv", header,
                               [list(r.values()) + [b] for r, b in zip(rows, np.broadcast_to(bound, res.times.shape))]))
    if "final-states" in series:
        cols = coordinate_names("X", actions) + coordinate_names("Xbar", actions)
        data = np.column_stack([np.arange(res.n_runs), res.final_X, res.X_integral / res.T])
        files.append(write_csv(out / "final_states.csv", ["run"] + cols, data))
    verdicts = [v.to_dict() for v in outcome.verdicts]
    files.append(write_json(out / "verdicts.json", verdicts))
    manifest = {
        "manifest_version": 1,
        "tool": "srlgames",
        "version": __version__,
        "config": scen.config,
        "config_hash": config_hash(scen.config),
        "seed": scen.seed,
        "exit_code": outcome.exit_code,
        "files": {p.name: file_digest(p) for p in files},
    }
    files.append(write_json(out / "manifest.json", manifest))
    return {p.name: str(p) for p in files}
