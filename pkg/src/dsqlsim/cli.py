"""Command-line entry point.

Exit codes: 0 success, 2 missing file, 3 invalid configuration or unknown
parameter, 4 engine startup error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import mlp
from .config import FIELD_NAMES, ConfigError, ScenarioConfig, _coerce, load_config
from .engine import SCHEDULERS, EngineError, run
from .metrics import REPORT_FIELDS, write_outputs

EXIT_OK, EXIT_MISSING, EXIT_INVALID, EXIT_ENGINE = 0, 2, 3, 4
OUT_ENV = "DSQLSIM_OUT"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING, f"config file not found: {path}")
    try:
        return load_config(p)
    except ConfigError as exc:
        raise CliError(EXIT_INVALID, f"{path}: {exc}") from None


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "dsqlsim_out")


def _schedulers(text: str) -> list[str]:
    names = _split(text)
    for name in names:
        if name not in SCHEDULERS:
            raise CliError(EXIT_ENGINE, f"unknown scheduler {name!r}; choose from {', '.join(SCHEDULERS)}")
    return names


def _seeds(values: list[str]) -> list[int]:
    out = []
    for v in values:
        for tok in _split(v):
            try:
                out.append(int(tok))
            except ValueError:
                raise CliError(EXIT_INVALID, f"seed must be an integer, got {tok!r}") from None
    if not out:
        raise CliError(EXIT_INVALID, "at least one seed is required")
    return out


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _execute(cfg: ScenarioConfig, scheduler: str):
    try:
        return run(cfg, scheduler)
    except EngineError as exc:
        raise CliError(EXIT_ENGINE, f"engine startup failed: {exc}") from None


def cmd_validate(args) -> int:
    _load(args.config)
    print(f"ok: {args.config}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config)
    schedulers = _schedulers(args.scheduler)
    seeds = _seeds(args.seed)
    out = _out_dir(args.out)
    rows = []
    for scheduler in schedulers:
        for seed in seeds:
            run_cfg = _with(cfg, "seed", seed)
            result = _execute(run_cfg, scheduler)
            stem = f"{scheduler}_seed{seed}"
            write_outputs(out, stem, result.trace, result.report, emit_trace=args.trace)
            if args.dump_tables and result.tables is not None:
                (out / f"{stem}_qtables.txt").write_text(result.tables.dump(), encoding="utf-8")
                (out / f"{stem}_weights.txt").write_text(mlp.dumps(result.net), encoding="utf-8")
            rows.append((scheduler, seed, result.report.row()))
    sys.stdout.write(_csv([REPORT_FIELDS] + [r for _, _, r in rows]))
    if len(rows) > 1:
        text = _csv([("scheduler", "seed") + REPORT_FIELDS] + [[s, n] + r for s, n, r in rows])
        (out / "runs.csv").write_text(text, encoding="utf-8")
    return EXIT_OK


def _with(cfg: ScenarioConfig, key: str, value) -> ScenarioConfig:
    try:
        return cfg.replace(**{key: value})
    except ConfigError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None


def _sweep_job(cfg: ScenarioConfig, scheduler: str) -> list[str]:
    return run(cfg, scheduler).report.row()


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    if args.param not in FIELD_NAMES:
        raise CliError(EXIT_INVALID, f"{args.param}: unknown configuration key")
    values = []
    for tok in _split(args.values):
        try:
            raw = float(tok) if any(ch in tok for ch in ".eE") else int(tok)
        except ValueError:
            raise CliError(EXIT_INVALID, f"{args.param}: not a number: {tok!r}") from None
        try:
            values.append(_coerce(args.param, raw, None))
        except ConfigError as exc:
            raise CliError(EXIT_INVALID, str(exc)) from None
    if not values:
        raise CliError(EXIT_INVALID, "no sweep values given")
    if args.seeds < 1:
        raise CliError(EXIT_INVALID, "--seeds must be at least 1")
    schedulers = _schedulers(args.scheduler)
    jobs = []
    for value in values:
        base = _with(cfg, args.param, value)
        for k in range(args.seeds):
            seed = cfg.seed + k
            for scheduler in schedulers:
                jobs.append((value, seed, scheduler, _with(base, "seed", seed)))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_sweep_job, c, s) for _, _, s, c in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_job(c, s) for _, _, s, c in jobs]
    header = ("param", "value", "seed", "scheduler") + REPORT_FIELDS
    body = [[args.param, repr(v) if isinstance(v, float) else v, seed, s] + row
            for (v, seed, s, _), row in zip(jobs, results)]
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_{args.param}.csv"
    path.write_text(_csv([header] + body), encoding="utf-8")
    print(f"wrote {len(body)} rows to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsqlsim", description="Q-learning data scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario configuration file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run scenarios and write CSV outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--scheduler", default="Dsql", help="comma-separated: " + ", ".join(SCHEDULERS))
    p.add_argument("--seed", nargs="+", default=["42"], help="one or more seeds (space or comma separated)")
    p.add_argument("--trace", action="store_true", help="also write decisions and packets CSVs")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./dsqlsim_out)")
    p.add_argument("--dump-tables", action="store_true", help="write Q-tables and MLP weights (Dsql)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one configuration key across values and seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds, counting up from the config seed")
    p.add_argument("--scheduler", default="Dsql")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
