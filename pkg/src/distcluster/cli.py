"""Command line entry point: ``distcluster {gen,cluster,bench,sweep,calibrate,verify}``.

Data goes to standard output (or ``--out``), logs to standard error.
Exit codes: 0 success, 2 configuration error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import checks
from .constants import DEFAULT, Constants
from .harness import (
    VARIANTS,
    ConfigError,
    ExperimentConfig,
    calibrate,
    expand_grid,
    instance_descriptor,
    instance_from_descriptor,
    pipeline_rng,
    rows_to_csv,
    run_pipeline,
    run_trials,
    sweep_rows,
    trial_seed,
)

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3
log = logging.getLogger("distcluster")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--variant", choices=VARIANTS)
    sub.add_argument("--n", type=int)
    sub.add_argument("--k", type=int)
    sub.add_argument("--r", type=int)
    sub.add_argument("--eps", type=float)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--threads", type=int, help="worker processes (default: available cores)")
    sub.add_argument("--config", type=Path, help="JSON experiment config; flags override its fields")
    sub.add_argument("--constants", type=Path, help="JSON constants file (e.g. calibrate output)")
    sub.add_argument("--unknown-r", action="store_true", help="run the doubling variant that does not use r")
    sub.add_argument("--out", type=Path, help="write data here instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distcluster", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in [
        ("gen", "emit an instance descriptor as JSON"),
        ("cluster", "run one pipeline on a descriptor"),
        ("bench", "run trials and print the aggregate"),
        ("sweep", "run a grid of configs and write CSV"),
        ("calibrate", "bisect a constant against a target error"),
        ("verify", "run the exact property checks"),
    ]:
        sub = subs.add_parser(name, help=help_text)
        _common(sub)
        if name == "cluster":
            sub.add_argument("descriptor", type=Path, help="descriptor JSON from `gen`")
        if name == "sweep":
            sub.add_argument("--grid", type=Path, required=True,
                             help='JSON object of field -> list of values, e.g. {"r": [1, 2, 4]}')
        if name == "calibrate":
            sub.add_argument("--name", required=True, help="constant to calibrate")
            sub.add_argument("--target", type=float, required=True, help="target error rate")
            sub.add_argument("--range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
            sub.add_argument("--iterations", type=int, default=8)
    return parser


def _config_from(args) -> ExperimentConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    for key in ("variant", "n", "k", "r", "eps", "trials", "seed", "threads"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.unknown_r:
        data["r_known"] = False
    data.setdefault("threads", os.cpu_count() or 1)
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    return cfg


def _constants_from(args) -> Constants:
    return Constants.load(args.constants) if args.constants else DEFAULT


def _emit(args, text: str) -> None:
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            results = checks.run_all()
            text = "".join(r.line() + "\n" for r in results)
            _emit(args, text)
            return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY
        if args.command == "cluster":
            desc = json.loads(args.descriptor.read_text())
            data = json.loads(args.config.read_text()) if args.config else {}
            data.update(variant=args.variant or desc["variant"], n=desc["n"], k=desc["k"],
                        r=desc["r"], eps=desc["eps"], r_known=not args.unknown_r)
            cfg = ExperimentConfig.from_dict(data)
            cfg.validate()
            instance, known = instance_from_descriptor(desc)
            ss = trial_seed(int(desc.get("seed", 0)), int(desc.get("trial", 0)))
            rng = pipeline_rng(ss, instance.k)
            result = run_pipeline(cfg.variant, instance, known, cfg, _constants_from(args), rng)
            _emit(args, _dump({
                "partition": list(result.partition.side_of),
                "correct": instance.is_correct(result.partition),
                "budget": {"total": instance.ledger().total, "per_oracle": instance.ledger().per_oracle},
                "reported": result.samples,
                "rounds": instance.rounds,
            }))
            return EXIT_OK
        cfg = _config_from(args)
        constants = _constants_from(args)
        if args.command == "gen":
            _emit(args, _dump(instance_descriptor(cfg)))
        elif args.command == "bench":
            _emit(args, _dump(run_trials(cfg, constants).summary()))
        elif args.command == "sweep":
            grid = json.loads(args.grid.read_text())
            if not isinstance(grid, dict):
                raise ConfigError("grid must be a JSON object")
            _emit(args, rows_to_csv(sweep_rows(expand_grid(cfg, grid), constants)))
        elif args.command == "calibrate":
            out = args.out or Path("constants.json")
            res = calibrate(args.name, args.target, tuple(args.range), cfg, trials=cfg.trials,
                            iterations=args.iterations, base=constants, out_path=out)
            sys.stderr.write(f"{res.name} = {res.value:.6g} written to {out}\n")
        return EXIT_OK
    except (ConfigError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
