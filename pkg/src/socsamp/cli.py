"""Command-line entry points: simulate, analyze, check, replay."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import StabilityError, asymptotic_report, q_star_prediction
from .harness import (
    ConfigError,
    audit_assumptions,
    fmt,
    load_config,
    replay_trial,
    report_text,
    run_experiment,
    write_trace,
)
from .state import initial_state


def _add_common(sub):
    sub.add_argument("config", help="experiment config file")
    sub.add_argument("--seed", type=int, default=None, help="override master seed")
    sub.add_argument(
        "--replications", type=int, default=None, help="override replication count"
    )
    sub.add_argument("--out", default=None, help="override output directory")
    sub.add_argument("--threads", type=int, default=None, help="override worker count")
    sub.add_argument("--stride", default=None, help="override checkpoint stride")


def _apply_overrides(cfg, args):
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        updates["replications"] = args.replications
    if args.out is not None:
        updates["out_dir"] = args.out
    if getattr(args, "threads", None) is not None:
        updates["threads"] = args.threads
    if args.stride is not None:
        from .harness import _parse_stride

        updates["stride"] = _parse_stride(args.stride)
    return replace(cfg, **updates) if updates else cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="socsamp",
        description="Simulate and analyze one-hot social-sampling consensus",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    _add_common(subs.add_parser("simulate", help="run the Monte Carlo experiment"))
    _add_common(subs.add_parser("analyze", help="theory-side report, no trials"))
    check = subs.add_parser("check", help="audit the standing assumptions")
    check.add_argument("config")
    rep = subs.add_parser("replay", help="re-run a single trial by derived seed")
    _add_common(rep)
    rep.add_argument("--trial", type=int, required=True, help="trial index to replay")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.command == "check":
        all_ok = True
        for name, ok, detail in audit_assumptions(cfg):
            print(f"{name}: {'pass' if ok else 'FAIL'} ({detail})")
            all_ok = all_ok and ok
        return 0 if all_ok else 1

    cfg = _apply_overrides(cfg, args)

    if args.command == "simulate":
        summary = run_experiment(cfg)
        print(f"summary written to {Path(summary.out_dir) / 'summary.txt'}")
        if not summary.passed:
            for failure in summary.failures:
                print(f"FAIL: {failure}", file=sys.stderr)
            return 1
        return 0

    if args.command == "analyze":
        q_star = q_star_prediction(initial_state(cfg.initial_samples, cfg.n_opinions))
        try:
            report = asymptotic_report(
                cfg.weight_model,
                cfg.schedule.limit_constant,
                q_star,
                cfg.n_opinions,
            )
        except StabilityError as e:
            print(str(e), file=sys.stderr)
            return 2
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(
            report_text(report), encoding="utf-8", newline="\n"
        )
        print(f"q_star = {','.join(fmt(x) for x in report.q_star)}")
        print(f"lambda2 = {fmt(report.lambda2)}")
        print(f"delta = {fmt(report.delta)}")
        print(f"lyapunov_residual = {fmt(report.lyapunov_residual)}")
        print(f"report written to {out / 'report.txt'}")
        return 0

    if args.command == "replay":
        stride = "all"
        if args.stride is not None:
            from .harness import _parse_stride

            stride = _parse_stride(args.stride)
        trace = replay_trial(cfg, args.trial, stride=stride)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"replay_trial_{args.trial}.csv"
        write_trace(trace, path)
        print(f"trace written to {path}")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
