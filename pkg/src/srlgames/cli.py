"""Command-line runner.

    srlgames run CONFIG [--seed S] [--out DIR] [--workers N]
    srlgames run --preset NAME [--seed S] [--out DIR] [--workers N]
    srlgames list-presets
    srlgames validate CONFIG

Exit codes: 0 all checks pass, 1 a check failed, 2 the config could not be
parsed or validated, 3 the run failed.  Codes 2 and 3 print a JSON error
record on stderr and also write it to ``error.json`` when an output
directory is known.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analysis.checks import CheckError, get_check
from .config import ConfigError, build, load_document, resolve
from .experiment import run_experiment
from .presets import list_presets

OUT_ENV = "SRLGAMES_OUT"
WORKERS_ENV = "SRLGAMES_WORKERS"

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3


def _error(code: int, kind: str, message: str, out: Path | None = None) -> int:
    record = {"exit_code": code, "error": kind, "message": message}
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srlgames", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a config or preset and run its checks")
    run.add_argument("config", nargs="?", help="YAML/JSON config or a run manifest")
    run.add_argument("--preset", help="built-in scenario name")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs/<name>)")
    run.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or 1)")

    sub.add_parser("list-presets", help="print the built-in scenarios")

    val = sub.add_parser("validate", help="parse and validate a config without running it")
    val.add_argument("config")
    return p


def _load(args) -> dict:
    if args.preset and args.config:
        raise ConfigError("give either a config file or --preset, not both")
    if args.preset:
        doc = {"preset": args.preset}
    elif args.config:
        doc = load_document(args.config)
    else:
        raise ConfigError("run needs a config file or --preset")
    if args.seed is not None:
        doc = dict(doc)
        doc["ensemble"] = dict(doc.get("ensemble") or {}, seed=args.seed)
    return resolve(doc)


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    base = os.environ.get(OUT_ENV)
    name = str(cfg.get("name", "experiment"))
    return Path(base) / name if base else Path("runs") / name


def cmd_run(args) -> int:
    out = Path(args.out) if args.out else None
    try:
        cfg = _load(args)
        out = _out_dir(args, cfg)
        scen = build(cfg)
        workers = args.workers or int(os.environ.get(WORKERS_ENV, "1"))
    except (ConfigError, CheckError, ValueError) as exc:
        return _error(EXIT_PARSE, type(exc).__name__, str(exc), out)
    try:
        outcome = run_experiment(scen, out_dir=out, workers=workers)
    except (ConfigError, CheckError) as exc:
        return _error(EXIT_PARSE, type(exc).__name__, str(exc), out)
    except Exception as exc:   # anything raised while simulating
        return _error(EXIT_RUNTIME, type(exc).__name__, str(exc), out)
    for v in outcome.verdicts:
        print(v.line())
    print(f"outputs written to {out}")
    return outcome.exit_code


def cmd_validate(args) -> int:
    try:
        cfg = resolve(load_document(args.config))
        scen = build(cfg)
        for i, spec in enumerate(cfg.get("analysis") or []):
            if not isinstance(spec, dict) or "check" not in spec:
                raise ConfigError(f"analysis entry {i} needs a 'check' kind")
            get_check(spec["check"])
    except (ConfigError, CheckError, ValueError) as exc:
        return _error(EXIT_PARSE, type(exc).__name__, str(exc))
    print(f"ok: {scen.name} ({scen.n_runs} runs, dt={scen.dt:g}, T={scen.T:g}, "
          f"{len(cfg.get('analysis') or [])} checks)")
    return EXIT_OK


def cmd_list(args) -> int:
    for entry in list_presets():
        print(f"{entry['name']:28s} {entry['description']}  [checks: {', '.join(entry['checks'])}]")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "list-presets": cmd_list}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
