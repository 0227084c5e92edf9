"""Command-line runner: ``protocol-games run --config FILE``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .core import BudgetExceeded, ConfigError
from .experiments import make_params, run_experiment
from .report import report_render

EXIT_OK, EXIT_VIOLATED, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
CSV_COLUMNS = ("trial", "strategy", "err", "b", "seed")

log = logging.getLogger("protocol_games")


def load_schema() -> dict:
    return json.loads(resources.files("protocol_games").joinpath("data/experiment.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    """Schema check plus the cross-field rules a schema cannot express."""
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config does not match schema: {e.message}") from None
    if "params" in cfg:
        make_params(cfg)


def _plain(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps_verdict(verdict: dict) -> str:
    return json.dumps(verdict, sort_keys=True, indent=2, default=_plain, allow_nan=False) + "\n"


def exit_code(verdict: dict) -> int:
    return EXIT_OK if verdict.get("passed") else EXIT_VIOLATED


def write_transcripts(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r.get(k) is None else r.get(k) for k in CSV_COLUMNS})


def run(config, seed=None, trials=None, threads=None, out=None, quiet=False) -> int:
    """Run one experiment; returns the process exit code."""
    try:
        cfg = json.loads(Path(config).read_text()) if not isinstance(config, dict) else json.loads(json.dumps(config))
        if seed is not None:
            cfg["seed"] = int(seed)
        if trials is not None:
            cfg["trials"] = int(trials)
        validate_config(cfg)
    except (OSError, json.JSONDecodeError, ConfigError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    output = cfg.get("output", {})
    out_dir = Path(out if out is not None else output.get("dir", "out"))
    n_threads = threads or cfg.get("threads", 1)
    try:
        verdict, rows = run_experiment(cfg, n_threads)
        text = dumps_verdict(verdict)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as e:
        print(f"budget accounting fault: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001
        log.exception("experiment failed")
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / output.get("verdict", "verdict.json")).write_text(text)
    tname = output.get("transcripts", "transcripts.csv")
    if tname and rows:
        write_transcripts(out_dir / tname, rows)
    if not quiet:
        print(report_render(verdict), end="")
    return exit_code(verdict)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="protocol-games")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out")
    rep = sub.add_parser("report", help="render a verdict JSON as a table")
    rep.add_argument("verdict")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.seed, args.trials, args.threads, args.out)
    try:
        print(report_render(json.loads(Path(args.verdict).read_text())), end="")
    except (OSError, ValueError) as e:
        print(f"cannot render: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
