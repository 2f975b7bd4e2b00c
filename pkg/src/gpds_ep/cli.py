"""Command-line interface: simulate, train, smooth, bench.

Exit status: 0 on success, 1 on configuration or runtime errors, 2 when a
benchmark method exceeded the allowed failure fraction.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, GPDSError
from .experiment import (METHOD_NAMES, PENDULUM_MODEL_SEED, SINE_MODEL_SEED,
                         ExperimentConfig, run_experiment)
from .systems import (pendulum_model, simulate_pendulum, simulate_sine,
                      sine_model)

_EPILOG = """\
seeds take a comma list with inclusive ranges, e.g. --seeds 0,5,7..9.

run CSV columns (one row per time step):
  t            time index
  x<d>_true    ground-truth state, one column per dimension
  x<d>_mean    smoothed marginal mean
  x<d>_lo/hi   mean -/+ 2 standard deviations (95% band)

bench writes <out>/report.json (schema-versioned; per method: mean, standard
error and per-run values of NLL_x, MAE_x, NLL_z, failure counts, wall time,
per-run per-iteration diagnostics) plus one CSV per non-failed run.  The
GPDS_EP_THREADS environment variable caps worker threads; --deterministic
forces a sequential, schedule-identical run.
"""


def _parse_seeds(text: str) -> tuple:
    seeds = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            lo, hi = token.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(token))
    if not seeds:
        raise ConfigError(f"no seeds in {text!r}")
    return tuple(seeds)


def _parse_methods(values) -> tuple:
    methods = []
    for v in values:
        methods.extend(m.strip() for m in v.split(",") if m.strip())
    return tuple(methods)


def _add_common(p: argparse.ArgumentParser, *, methods: bool):
    p.add_argument("--system", required=True,
                   help="sine | pendulum | linear | trajectory CSV path")
    p.add_argument("--seeds", type=_parse_seeds, default=None,
                   help="comma list / inclusive a..b ranges "
                        "(default: the system's standard seeds)")
    p.add_argument("--T", type=int, default=20, help="time steps per rollout")
    if methods:
        p.add_argument("--method", action="append", default=None,
                       metavar="NAME",
                       help=f"one of {', '.join(METHOD_NAMES)}; repeatable "
                            "or comma-separated (bench default: all)")
        p.add_argument("--max-iters", type=int, default=100,
                       help="EP iteration cap for ep-* methods")
        p.add_argument("--tol", type=float, default=1e-6,
                       help="EP convergence tolerance")
        p.add_argument("--model", default=None,
                       help="saved model JSON to use instead of training")
        p.add_argument("--model-seed", type=int, default=None,
                       help="training seed (default: per-system constant)")
    p.add_argument("--deterministic", action="store_true",
                   help="sequential execution, ignore GPDS_EP_THREADS")
    p.add_argument("--out", default=None, help="output directory or file")


def _cmd_simulate(args) -> int:
    if args.system not in ("sine", "pendulum"):
        raise ConfigError("simulate supports --system sine | pendulum")
    seeds = args.seeds or ((7100,) if args.system == "sine" else (1042,))
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate_sine if args.system == "sine" else simulate_pendulum
    for s in seeds:
        tr = sim(s, T=args.T)
        path = out / f"{args.system}-seed{s}.csv"
        tr.save(path)
        print(path)
    return 0


def _cmd_train(args) -> int:
    if args.system not in ("sine", "pendulum"):
        raise ConfigError("train supports --system sine | pendulum")
    if args.system == "sine":
        seed = args.seeds[0] if args.seeds else SINE_MODEL_SEED
        model = sine_model(seed)
    else:
        seed = args.seeds[0] if args.seeds else PENDULUM_MODEL_SEED
        model = pendulum_model(seed)
    path = Path(args.out or f"{args.system}-model.json")
    model.save(path)
    print(path)
    return 0


def _cmd_smooth(args) -> int:
    methods = _parse_methods(args.method or ["ep-gpads"])
    if len(methods) != 1:
        raise ConfigError("smooth runs exactly one --method")
    method = methods[0]
    seeds = args.seeds[:1] if args.seeds else None
    if seeds is None and args.system in ("sine", "pendulum", "linear"):
        seeds = ((7100,) if args.system == "sine"
                 else (1042,) if args.system == "pendulum" else (0,))
    config = ExperimentConfig(
        system=args.system, methods=(method,), seeds=seeds,
        T=args.T, max_iters=args.max_iters, tol=args.tol,
        deterministic=True, out_dir=args.out,
        model_path=args.model, model_seed=args.model_seed)
    report = run_experiment(config)
    entry = report["methods"][method]
    run = entry["per_run"][0]
    print(json.dumps({k: run[k] for k in
                      ("method", "seed", "failed", "failure_reason", "nll_x",
                       "mae_x", "nll_z", "skipped_fraction", "diagnostics")},
                     indent=2))
    return 0 if not run["failed"] else 1


def _cmd_bench(args) -> int:
    methods = _parse_methods(args.method) if args.method else METHOD_NAMES
    config = ExperimentConfig(
        system=args.system, methods=methods, seeds=args.seeds,
        T=args.T, max_iters=args.max_iters, tol=args.tol,
        deterministic=args.deterministic, out_dir=args.out,
        model_path=args.model, model_seed=args.model_seed)
    report = run_experiment(config)

    def fmt(stat):
        if stat["mean"] is None:
            return "      n/a    "
        return f"{stat['mean']:+7.3f}+-{stat['se']:5.3f}"

    print(f"{'method':10s} {'NLL_x':>13s} {'MAE_x':>13s} {'NLL_z':>13s} "
          f"{'fail':>5s} {'time':>7s}")
    for m in methods:
        e = report["methods"][m]
        line = (f"{m:10s} {fmt(e['nll_x']):>13s} {fmt(e['mae_x']):>13s} "
                f"{fmt(e['nll_z']):>13s} {e['failures']:3d}/{e['runs']:<2d}"
                f" {e['wall_time']:6.1f}s")
        if "exact" in e:
            line += f"  exact={e['exact']}"
        print(line)
    if args.out:
        print(f"report: {Path(args.out) / 'report.json'}")
    if report["failure_fraction_exceeded"]:
        print("failure fraction exceeded for: "
              + ", ".join(report["failure_fraction_exceeded"]), file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpds-ep", epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Smoothing benchmarks for GP dynamical systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="roll out trajectories to CSV",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, methods=False)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("train", help="fit a GP model, save it as JSON",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, methods=False)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("smooth", help="run one method on one trajectory",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, methods=True)
    p.set_defaults(fn=_cmd_smooth)

    p = sub.add_parser("bench", help="full multi-method benchmark",
                       epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, methods=True)
    p.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GPDSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
