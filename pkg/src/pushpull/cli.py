"""Command-line interface.

Subcommands: ``gen-graph``, ``validate``, ``certify``, ``run``, ``fit-rate``.
Exit codes: 0 ok, 2 config/validation error, 3 certification failure,
4 divergence.  Failures print a machine-readable JSON object naming the
offending key.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .certify import CertificationError, WindowError, fit_rate
from .harness import (
    EXIT_CERTIFY,
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_OK,
    ConfigError,
)
from .synchronous import DivergenceError
from .trace import RunTrace


def _error_json(code: int, message: str, key: str | None = None) -> None:
    payload = {"error": {"code": code, "message": message}}
    if key:
        payload["error"]["key"] = key
    print(json.dumps(payload))


def cmd_gen_graph(args) -> int:
    g = harness.gen_graph(args.n, args.m, args.seed, args.out)
    print(json.dumps({"n": g.n, "m": len(g.edges), "out": args.out}))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = harness.load_config(args.config) if args.config else None
    report = harness.validate_target(
        args.graph, cfg, alpha=args.alpha, push_graph_path=args.push_graph
    )
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_CONFIG


def cmd_certify(args) -> int:
    cfg = harness.load_config(args.config)
    payload = harness.certify_experiment(cfg, args.out)
    print(json.dumps({k: payload[k] for k in ("kind", "rho", "alpha_bound", "gamma_bound")}))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    summary = harness.run_experiment(cfg, args.out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_fit_rate(args) -> int:
    trace = RunTrace.read_csv(args.trace)
    series = trace.residual
    if args.amplitude:
        series = np.sqrt(np.maximum(series, 0.0))
    window = None
    if args.lo is not None or args.hi is not None:
        window = (
            args.lo if args.lo is not None else 0.0,
            args.hi if args.hi is not None else float(trace.k[-1]),
        )
    fit = fit_rate(series, ks=trace.k.astype(float), window=window)
    print(json.dumps({"rate": fit.rate, "floored": fit.floored, "points": fit.n_points}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pushpull",
        description="Push-pull gradient methods over directed graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="write a random strongly connected edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_graph)

    p = sub.add_parser("validate", help="check the structural prerequisites")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="config path or bundled name")
    group.add_argument("--graph", help="pull-graph edge-list file")
    p.add_argument(
        "--push-graph",
        default=None,
        help="push-graph edge-list file (defaults to the pull graph)",
    )
    p.add_argument("--alpha", type=float, default=1.0, help="uniform stepsize to check")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("certify", help="emit convergence-certificate artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("run", help="run an experiment config end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("fit-rate", help="fit a geometric rate to a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument(
        "--amplitude",
        action="store_true",
        help="fit sqrt(residual) instead of the squared residual",
    )
    p.set_defaults(fn=cmd_fit_rate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _error_json(EXIT_CONFIG, exc.message, key=exc.key)
        return EXIT_CONFIG
    except CertificationError as exc:
        _error_json(EXIT_CERTIFY, str(exc))
        return EXIT_CERTIFY
    except DivergenceError as exc:
        _error_json(EXIT_DIVERGED, str(exc))
        return EXIT_DIVERGED
    except (ValueError, OSError, WindowError) as exc:
        _error_json(EXIT_CONFIG, str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
