"""Command line entry point: ``train``, ``eval``, ``theory-check`` and ``aggregate``.

Exit codes: 0 on success, 1 for invalid input (bad flags, config or files),
2 when a run fails at runtime.
"""
from __future__ import annotations

import argparse
import csv
import io
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (FIELD_NAMES, TD3SMR_DEFAULTS, ConfigError, TrainConfig,
                     defaults_for, parse_config, to_text)

METRICS_HEADER = ("step", "train_return", "eval_mean", "eval_std", "best_actor",
                  "selected_set", "wall_ms")

# short spellings accepted next to the full field names
ALIASES = {
    "algorithm": ["--algo"],
    "env_name": ["--env"],
    "total_env_steps": ["--steps"],
    "warmup_steps": ["--warmup"],
    "master_seed": ["--seed"],
}


class UsageError(Exception):
    """Raised instead of argparse's own exit so that bad flags map to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- formatting

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return "|".join(str(i) for i in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow([_fmt(getattr(row, name)) for name in METRICS_HEADER])
    return buf.getvalue()


def read_metrics(path) -> list[dict]:
    """Rows of a metrics file with numbers parsed; empty fields become ``None``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        rows = []
        for raw in reader:
            row = dict(zip(METRICS_HEADER, raw))
            out = {}
            for key, text in row.items():
                if text == "":
                    out[key] = None
                elif key == "selected_set":
                    out[key] = tuple(int(i) for i in text.split("|"))
                elif key in ("step", "best_actor"):
                    out[key] = int(text)
                else:
                    out[key] = float(text)
            rows.append(out)
    return rows


def final_eval_score(rows, last: int = 10) -> float:
    """Mean of the last ``last`` evaluation means of one run."""
    evals = [r["eval_mean"] for r in rows if r["eval_mean"] is not None]
    if not evals:
        raise ValueError("run has no evaluation rows")
    return float(np.mean(evals[-last:]))


# ---------------------------------------------------------- actor parameters

def write_actor(path, spec, params) -> None:
    """Text format: one header line, then one parameter per line.

    Header: ``mlp widths=3,64,64,1 head=bounded low=-2.0 high=2.0``; the
    bounds are comma separated per action dimension and omitted for linear
    heads.  Values are written with ``repr`` so they round-trip exactly.
    """
    head = [f"mlp widths={','.join(map(str, spec.widths))}", f"head={spec.head}"]
    if spec.head == "bounded":
        head.append("low=" + ",".join(repr(float(v)) for v in spec.action_low))
        head.append("high=" + ",".join(repr(float(v)) for v in spec.action_high))
    lines = [" ".join(head)] + [repr(float(v)) for v in np.asarray(params).reshape(-1)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_actor(path):
    from .nn import MlpSpec

    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("mlp "):
        raise ValueError(f"{path}: missing 'mlp ...' header line")
    fields = {}
    for token in lines[0].split()[1:]:
        key, sep, value = token.partition("=")
        if not sep or key not in ("widths", "head", "low", "high"):
            raise ValueError(f"{path}: bad header token {token!r}")
        fields[key] = value
    if "widths" not in fields or "head" not in fields:
        raise ValueError(f"{path}: header needs widths= and head=")
    try:
        widths = tuple(int(w) for w in fields["widths"].split(","))
        low = tuple(float(v) for v in fields["low"].split(",")) if "low" in fields else None
        high = tuple(float(v) for v in fields["high"].split(",")) if "high" in fields else None
        spec = MlpSpec(widths, fields["head"], low, high)
        params = np.array([float(v) for v in lines[1:] if v.strip()])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if params.size != spec.n_params:
        raise ValueError(f"{path}: header declares {spec.n_params} parameters, "
                         f"file holds {params.size}")
    return spec, params


# ------------------------------------------------------------------ parsers

def _config_flags(parser: argparse.ArgumentParser):
    mamc, td3 = defaults_for("mamc"), defaults_for("td3smr")
    group = parser.add_argument_group("training configuration (defaults: MAMC / TD3-SMR)")
    for name in FIELD_NAMES:
        d = mamc[name]
        shown = ",".join(map(str, d)) if isinstance(d, tuple) else d
        if name in TD3SMR_DEFAULTS:
            shown = f"{shown} / {td3[name]}"
        flags = [f"--{name.replace('_', '-')}"] + ALIASES.get(name, [])
        group.add_argument(*flags, dest=name, default=None, metavar="V",
                           help=f"default: {shown}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mamc", description="Multi-actor multi-critic RL lab.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", help="train an agent and write metrics.csv + actor.params")
    train.add_argument("--config", help="key = value configuration file")
    train.add_argument("--out", default="runs/latest", help="output directory")
    train.add_argument("--seeds", help="seed range a..b; one run per seed in <out>/seed_<k>")
    train.add_argument("--wall-time", action="store_true",
                       help="fill the wall_ms column (makes output non-reproducible)")
    train.add_argument("--quiet", action="store_true", help="no per-row progress output")
    train.add_argument("--jobs", type=int, default=1,
                       help="seeds trained in parallel processes (with --seeds)")
    _config_flags(train)

    ev = sub.add_parser("eval", help="evaluate a saved actor without noise")
    ev.add_argument("params", help="actor parameter file written by train")
    ev.add_argument("--env", default="pendulum")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)

    th = sub.add_parser("theory-check", help="run the estimator sandwich and variance checks")
    th.add_argument("--n-actors", default="1,2,5,10", help="comma separated N_A values")
    th.add_argument("--n-critics", default="1,2,5,10", help="comma separated N_C values")
    th.add_argument("--q", default="0,0.2,0.5,1", help="comma separated quantile levels")
    th.add_argument("--replications", type=int, default=100_000)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--workers", type=int, default=1,
                    help="processes for the Monte-Carlo draws (results do not depend on it)")
    th.add_argument("--out", default="theory_out", help="directory for report and csv")

    ag = sub.add_parser("aggregate", help="mean/std of evaluation curves across runs")
    ag.add_argument("runs", nargs="+",
                    help="run directories or metrics.csv files (seed_* subdirs are expanded)")
    ag.add_argument("--out", default="aggregate.csv")
    ag.add_argument("--last", type=int, default=10,
                    help="evaluations averaged for the per-run final score")
    return parser


def parse_seeds(text: str) -> list[int]:
    m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if b < a:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}; expected a..b or a,b,c") from None


def _parse_list(text: str, kind):
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad list {text!r}") from None


# ----------------------------------------------------------------- commands

def config_from_args(args) -> TrainConfig:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    overrides = {name: getattr(args, name) for name in FIELD_NAMES}
    return parse_config(text, overrides)


def train_one(cfg: TrainConfig, out: Path, wall_clock=False, quiet=False) -> float | None:
    from .agent import run

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(to_text(cfg))

    def progress(row):
        if not quiet and row.eval_mean is not None:
            print(f"[seed {cfg.master_seed}] step {row.step}: eval {row.eval_mean:.2f} "
                  f"(best actor {row.best_actor})", flush=True)

    result = run(cfg, on_row=progress, wall_clock=wall_clock)
    (out / "metrics.csv").write_text(metrics_to_csv(result.metrics))
    write_actor(out / "actor.params", result.actor_spec, result.actor_params)
    evals = [r.eval_mean for r in result.metrics if r.eval_mean is not None]
    last = evals[-1] if evals else None
    shown = "n/a" if last is None else f"{last:.2f}"
    print(f"{cfg.algorithm} seed {cfg.master_seed}: {cfg.total_env_steps} steps, "
          f"best actor {result.best_actor_index}, last eval {shown} -> {out}")
    return last


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    out = Path(args.out)
    if args.seeds is None:
        train_one(cfg, out, args.wall_time, args.quiet)
        return 0
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    jobs = [(parse_config(to_text(cfg), {"master_seed": seed}), out / f"seed_{seed}",
             args.wall_time, args.quiet) for seed in parse_seeds(args.seeds)]
    if args.jobs == 1 or len(jobs) == 1:
        for job in jobs:
            train_one(*job)
        return 0
    # members share nothing, so running them side by side leaves each output unchanged
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for future in [pool.submit(train_one, *job) for job in jobs]:
            future.result()
    return 0


def cmd_eval(args) -> int:
    from .agent import evaluate
    from .envs import make_env

    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    try:
        spec, params = read_actor(args.params)
        env = make_env(args.env)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if spec.n_inputs != env.spec.obs_dim or spec.n_outputs != env.spec.act_dim:
        raise ConfigError(f"actor widths {spec.widths} do not fit {args.env} "
                          f"(obs {env.spec.obs_dim}, act {env.spec.act_dim})")
    mean, std = evaluate(spec, params, env, args.episodes, args.seed)
    print(f"{mean!r} ± {std!r}")
    return 0


def cmd_theory_check(args) -> int:
    from . import theory

    if args.replications < theory.MIN_REPLICATIONS:
        raise ConfigError(f"--replications must be at least {theory.MIN_REPLICATIONS}")
    suite = theory.run_suite(n_actors=_parse_list(args.n_actors, int),
                             n_critics=_parse_list(args.n_critics, int),
                             qs=_parse_list(args.q, float),
                             replications=args.replications, seed=args.seed,
                             workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "theory_report.txt").write_text(suite.report)
    (out / "theory.csv").write_text(suite.csv)
    print(suite.report, end="")
    return 0 if suite.passed else 2


def _metrics_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_file():
            files.append(p)
        elif (p / "metrics.csv").is_file():
            files.append(p / "metrics.csv")
        else:
            found = sorted(p.glob("seed_*/metrics.csv"),
                           key=lambda f: int(f.parent.name.split("_")[1]))
            if not found:
                raise ConfigError(f"no metrics.csv under {p}")
            files.extend(found)
    return files


def aggregate(files, last: int = 10):
    """Per-step mean/std of ``eval_mean`` across runs plus per-run final scores."""
    by_step: dict[int, list[float]] = {}
    finals = []
    for f in files:
        rows = read_metrics(f)
        for r in rows:
            if r["eval_mean"] is not None:
                by_step.setdefault(r["step"], []).append(r["eval_mean"])
        finals.append(final_eval_score(rows, last))
    table = []
    for step in sorted(by_step):
        vals = np.array(by_step[step])
        table.append((step, len(vals), float(vals.mean()), float(vals.std()),
                      float(np.median(vals))))
    return table, finals


def cmd_aggregate(args) -> int:
    files = _metrics_files(args.runs)
    try:
        table, finals = aggregate(files, args.last)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "n_runs", "eval_mean", "eval_std", "eval_median"])
    writer.writerows([[s, n, repr(m), repr(sd), repr(md)] for s, n, m, sd, md in table])
    Path(args.out).write_text(buf.getvalue())
    print(f"{len(files)} runs; final-{args.last} scores: "
          + ", ".join(f"{v:.2f}" for v in finals)
          + f"; median {float(np.median(finals)):.2f} -> {args.out}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "theory-check": cmd_theory_check,
            "aggregate": cmd_aggregate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failure of a run
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
