"""Command-line entry points.

Subcommands: train, sample-topk, eval, oracle, metrics, schedule, plot.
Run directories default under $BANDGEN_RUNS (or ./runs).  Exit codes:
0 ok, 1 usage/config error, 2 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAULT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        raise SystemExit_usage(f"{self.prog}: error: {message}")


class SystemExit_usage(Exception):
    pass


def runs_root() -> Path:
    return Path(os.environ.get("BANDGEN_RUNS", "runs"))


def _load_config(path: str | None):
    from .config import RunConfig

    if path is None:
        return RunConfig()
    return RunConfig.from_yaml(path)


def _run_logs(run_dir: Path):
    from .episode_log import EpisodeLog, run_log_paths

    paths = run_log_paths(run_dir)
    if not paths:
        raise FileNotFoundError(f"{run_dir}: no episode logs under logs/")
    return [EpisodeLog.from_jsonl(p) for p in paths]


def cmd_train(args) -> int:
    from .training import train_run

    config = _load_config(args.config)
    run_dir = Path(args.run_dir) if args.run_dir else runs_root() / args.name
    train_run(config, run_dir, resume=args.resume, echo=not args.quiet)
    print(f"run directory: {run_dir}")
    return EXIT_OK


def cmd_sample_topk(args) -> int:
    from .evaluate import sample_topk

    out = sample_topk(args.run_dir, k=args.k)
    if args.k > len(out):
        print(f"warning: only {len(out)} episodes available", file=sys.stderr)
    for p in out:
        print(p)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .config import RunConfig
    from .evaluate import evaluate_logs
    from .risk import RiskCritic, RiskConfig

    run_dir = Path(args.run_dir)
    config = RunConfig.from_yaml(run_dir / "config.yaml")
    logs = _run_logs(run_dir if args.logs is None else Path(args.logs))
    critic = None
    ckpt = run_dir / "checkpoints" / "risk_critic.ckpt"
    if ckpt.exists():
        critic = RiskCritic(config.risk, np.random.default_rng(0))
        critic.load(ckpt)
    controllers = args.controller or [config.world.ego_controller]
    reports = evaluate_logs(logs, config, controllers, critic)

    out_path = run_dir / "eval_report.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["controller", "episodes", "collision_rate", "phys_invalid_rate",
                    "gap_coverage_score"])
        for r in reports:
            m = r.metrics
            w.writerow([r.controller, m.episodes, f"{m.collision_rate:.6f}",
                        f"{m.phys_invalid_rate:.6f}", f"{m.gap_coverage_score:.6f}"])
            print(f"{r.controller}: CR={m.collision_rate:.3f} "
                  f"invalid={m.phys_invalid_rate:.4f} GCS={m.gap_coverage_score:.4f}")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .feasibility import FeasibilityParams
    from .oracle import soundness_campaign_1d, soundness_campaign_2d

    params = FeasibilityParams()
    if args.dimension == 1:
        report = soundness_campaign_1d(args.cases, params, seed=args.seed)
    else:
        report = soundness_campaign_2d(args.cases, params, seed=args.seed)
    for k, v in report.items():
        print(f"{k}: {v}")
    hard = report.get("unavoidable_but_oracle_avoids", 0)
    return EXIT_OK if hard == 0 else EXIT_FAULT


def cmd_metrics(args) -> int:
    from .metrics import summarize
    from .plots import write_coverage_csv

    run_dir = Path(args.run_dir)
    logs = _run_logs(run_dir)
    summary = summarize(logs, k=args.grid)
    out_path = run_dir / "metrics_summary.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for name, value in summary.rows():
            w.writerow([name, f"{value:.6f}"])
            print(f"{name}: {value:.6f}")
    write_coverage_csv(logs, run_dir / "coverage_grid.csv")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_schedule(args) -> int:
    from .schedule import EpsSchedule

    sched = EpsSchedule(
        n_levels=args.levels, eps_max=args.eps_max, u_min=args.u_min, u_max=args.u_max,
        switch_every=args.switch_every,
    )
    print("level  eps")
    for i, v in enumerate(sched.values, start=1):
        print(f"{i:>5}  {v:.6f}")
    print(f"switch every {sched.switch_every} episodes, cycle {sched.cycle_length()}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_coverage_heatmap, plot_invalid_rate_bars, plot_training_curves

    run_dir = Path(args.run_dir)
    out_dir = run_dir / "figures"
    made = []
    metrics_csv = run_dir / "metrics.csv"
    if not metrics_csv.exists():
        raise FileNotFoundError(f"{metrics_csv}: no metrics file in run directory")
    made.append(plot_training_curves(metrics_csv, out_dir / "training_curves.svg"))
    logs = _run_logs(run_dir)
    made.append(plot_invalid_rate_bars(logs, out_dir / "invalid_rate.svg"))
    made.append(plot_coverage_heatmap(logs, out_dir / "coverage_heatmap.svg"))
    for p in made:
        print(p)
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="bandgen", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the full training loop")
    t.add_argument("--config", help="YAML run config (defaults when omitted)")
    t.add_argument("--run-dir", help="explicit run directory")
    t.add_argument("--name", default="run", help="run name under $BANDGEN_RUNS")
    t.add_argument("--resume", action="store_true", help="resume an interrupted run")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    k = sub.add_parser("sample-topk", help="select the most safety-critical episodes")
    k.add_argument("run_dir")
    k.add_argument("-k", type=int, default=10)
    k.set_defaults(fn=cmd_sample_topk)

    e = sub.add_parser("eval", help="replay logged episodes under scripted egos")
    e.add_argument("run_dir")
    e.add_argument("--logs", help="log directory override (defaults to the run's logs)")
    e.add_argument("--controller", action="append",
                   help="ego controller id (repeatable)")
    e.set_defaults(fn=cmd_eval)

    o = sub.add_parser("oracle", help="randomized feasibility-soundness campaign")
    o.add_argument("--cases", type=int, default=200)
    o.add_argument("--dimension", type=int, choices=(1, 2), default=1)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(fn=cmd_oracle)

    m = sub.add_parser("metrics", help="compute metrics over a run's logs")
    m.add_argument("run_dir")
    m.add_argument("--grid", type=int, default=40, help="GCS grid size K")
    m.set_defaults(fn=cmd_metrics)

    s = sub.add_parser("schedule", help="print the feasibility-threshold table")
    s.add_argument("--levels", type=int, default=8)
    s.add_argument("--eps-max", type=float, default=0.35)
    s.add_argument("--u-min", type=float, default=-3.0)
    s.add_argument("--u-max", type=float, default=0.0)
    s.add_argument("--switch-every", type=int, default=100)
    s.set_defaults(fn=cmd_schedule)

    g = sub.add_parser("plot", help="render run figures (SVG)")
    g.add_argument("run_dir")
    g.set_defaults(fn=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit_usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except SystemExit_usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if _is_config_error(exc) else EXIT_FAULT
    except OSError as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


def _is_config_error(exc: Exception) -> bool:
    from .microsim import ConfigError

    return isinstance(exc, (ConfigError, FileNotFoundError))


if __name__ == "__main__":
    sys.exit(main())
