"""Command-line harness: run, sweep, demo-frames and trace subcommands.

Exit codes: 0 success, 2 bad configuration, 3 worker unreachable,
4 internal invariant violation, 5 unreadable frame file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, PgmError, TransportError, VpeError
from .kernels import BENCH_SIGNATURES
from .policy import PolicyConfig, trace_csv, trace_json
from .runner import DEFAULT_SIZES, RunConfig, run_benchmark, run_demo_frames, run_sweep
from .values import ValueKind
from .wire import DEFAULT_MAX_PAYLOAD, WorkerClient
from .worker import spawn_worker

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_WORKER = 3
EXIT_INTERNAL = 4
EXIT_PGM = 5


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("VPE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"VPE_SEED must be an integer, got {env!r}") from None
    return 0


def _policy_from_args(args: argparse.Namespace) -> PolicyConfig:
    return PolicyConfig(
        min_samples=args.min_samples,
        improve_margin=args.margin,
        cooldown_rounds=args.cooldown,
        eval_period=args.eval_period,
        warmup=args.warmup,
        max_concurrent_probes=args.max_probes,
    )


def _coerce_input(kind: ValueKind, raw: Any) -> Any:
    if kind is ValueKind.I64:
        return int(raw)
    if kind is ValueKind.BYTES:
        return raw.encode("ascii") if isinstance(raw, str) else bytes(raw)
    if kind is ValueKind.I32VEC:
        return np.asarray(raw, dtype=np.int32)
    if kind is ValueKind.I32MAT:
        return np.asarray(raw, dtype=np.int32)
    if kind is ValueKind.I64MAT:
        return np.asarray(raw, dtype=np.int64)
    return np.asarray(raw, dtype=np.int16)


def _fixed_inputs(kernel: str, text: str | None) -> tuple[Any, ...] | None:
    if text is None:
        return None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--inputs-json is not valid JSON: {exc}") from None
    kinds, _ = BENCH_SIGNATURES[kernel]
    if not isinstance(raw, list) or len(raw) != len(kinds):
        raise ConfigError(f"--inputs-json must be a list of {len(kinds)} arguments for {kernel}")
    try:
        return tuple(_coerce_input(kind, item) for kind, item in zip(kinds, raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"--inputs-json does not match the {kernel} signature: {exc}") from None


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_common(parser: argparse.ArgumentParser, default_mode: str = "auto") -> None:
    parser.add_argument("--iters", type=int, default=200, help="invocation count (default 200)")
    parser.add_argument("--mode", choices=("auto", "local-only", "force-remote"), default=default_mode)
    parser.add_argument("--target", choices=("sim", "worker"), default="sim")
    parser.add_argument("--profile", default=None, metavar="PATH", help="cost-model JSON (sim target)")
    parser.add_argument("--endpoint", default=None, metavar="ADDR:PORT", help="attach to a running worker")
    parser.add_argument("--max-payload", type=int, default=DEFAULT_MAX_PAYLOAD)
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to VPE_SEED, then 0)")
    parser.add_argument("--warmup", type=int, default=3, help="warm-up samples per (kernel, target) episode")
    parser.add_argument("--min-samples", type=int, default=5)
    parser.add_argument("--margin", type=float, default=0.05, help="hysteresis margin on speedup")
    parser.add_argument("--cooldown", type=int, default=10, help="rounds before a reverted kernel may re-probe")
    parser.add_argument("--eval-period", type=int, default=20, help="invocations between policy evaluations")
    parser.add_argument("--max-probes", type=int, default=1)
    parser.add_argument("--out", choices=("csv", "json"), default="csv")
    parser.add_argument("--out-path", default=None, metavar="PATH")


class _WorkerLease:
    """Spawns a worker when no endpoint was given; shuts it down afterwards."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.endpoint: str | None = args.endpoint
        self._proc = None
        self._max_payload = args.max_payload
        if args.target == "worker":
            if self.endpoint is None:
                self._proc, self.endpoint = spawn_worker(args.max_payload)
            else:
                client = WorkerClient(self.endpoint, args.max_payload)
                try:
                    client.ping()  # fail fast: exit 3 instead of mid-run surprises
                finally:
                    client.close()

    def __enter__(self) -> str | None:
        return self.endpoint

    def __exit__(self, *exc: Any) -> None:
        if self._proc is not None:
            try:
                WorkerClient(self.endpoint, self._max_payload).shutdown()
                self._proc.wait(timeout=10)
            except (VpeError, OSError):
                self._proc.kill()


def _run_config(args: argparse.Namespace, endpoint: str | None, kernel: str) -> RunConfig:
    return RunConfig(
        kernels=(kernel,),
        size=args.size,
        iters=args.iters,
        mode=args.mode,
        target=args.target,
        profile_path=args.profile,
        seed=_resolve_seed(args.seed),
        policy=_policy_from_args(args),
        enable_after=getattr(args, "enable_after", 0),
        endpoint=endpoint,
        max_payload=args.max_payload,
        fixed_inputs=_fixed_inputs(kernel, getattr(args, "inputs_json", None)),
    )


def cmd_run(args: argparse.Namespace) -> int:
    with _WorkerLease(args) as endpoint:
        report = run_benchmark(_run_config(args, endpoint, args.kernel))
    if args.out == "json":
        _emit(report.to_json() + "\n", args.out_path)
    else:
        _emit(report.stats_csv(), args.out_path)
    speedup = report.speedups.get(args.kernel)
    print(f"kernel: {args.kernel}", file=sys.stderr)
    print(f"result: {report.results.get(args.kernel)}", file=sys.stderr)
    print(f"final binding: {report.final_bindings.get(args.kernel)}", file=sys.stderr)
    print(f"speedup: {speedup:.3f}" if speedup is not None else "speedup: n/a", file=sys.stderr)
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    with _WorkerLease(args) as endpoint:
        report = run_benchmark(_run_config(args, endpoint, args.kernel))
    if args.out == "json":
        _emit(trace_json(report.trace) + "\n", args.out_path)
    else:
        _emit(trace_csv(report.trace), args.out_path)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    config = RunConfig(
        kernels=("matmul",),
        iters=args.iters,
        mode="auto",
        target="sim",
        profile_path=args.profile,
        seed=_resolve_seed(args.seed),
        policy=_policy_from_args(args),
    )
    report = run_sweep(config, sizes)
    if args.out == "json":
        _emit(report.to_json() + "\n", args.out_path)
    else:
        _emit(report.to_csv(), args.out_path)
    if report.crossover_estimate is not None:
        print(f"estimated crossover size: {report.crossover_estimate:.1f}", file=sys.stderr)
    else:
        print("estimated crossover size: not bracketed", file=sys.stderr)
    return EXIT_OK


def cmd_demo_frames(args: argparse.Namespace) -> int:
    config = RunConfig(
        kernels=("convolution",),
        iters=1,  # the frame count drives the loop
        mode="auto",
        target="sim",
        profile_path=args.profile,
        seed=_resolve_seed(args.seed),
        policy=_policy_from_args(args),
        enable_after=args.enable_after,
    )
    report = run_demo_frames(args.input_dir, args.out_dir, config)
    if args.out == "json":
        _emit(report.to_json() + "\n", args.out_path)
    else:
        _emit(report.to_csv(), args.out_path)
    before = f"{report.fps_before:.3f}" if report.fps_before is not None else "n/a"
    after = f"{report.fps_after:.3f}" if report.fps_after is not None else "n/a"
    ratio = f"{report.ratio:.3f}" if report.ratio is not None else "n/a"
    print(f"fps before offload: {before}", file=sys.stderr)
    print(f"fps after offload: {after}", file=sys.stderr)
    print(f"improvement ratio: {ratio}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpe", description="Adaptive kernel offloading harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="benchmark one kernel in a continuous loop")
    run.add_argument("--kernel", required=True, choices=sorted(BENCH_SIGNATURES))
    run.add_argument("--size", type=int, default=None, help=f"workload size (defaults: {DEFAULT_SIZES})")
    run.add_argument("--inputs-json", default=None, help="explicit argument list as JSON (overrides --size)")
    _add_common(run)
    run.set_defaults(func=cmd_run)

    trace = sub.add_parser("trace", help="like run, but emit only the decision trace")
    trace.add_argument("--kernel", required=True, choices=sorted(BENCH_SIGNATURES))
    trace.add_argument("--size", type=int, default=None)
    trace.add_argument("--inputs-json", default=None)
    _add_common(trace)
    trace.set_defaults(func=cmd_trace)

    sweep = sub.add_parser("sweep", help="matmul size sweep against the fitted cost model")
    sweep.add_argument("--sizes", default="25,50,75,100,150,200")
    sweep.add_argument("--profile", required=True, metavar="PATH")
    sweep.add_argument("--iters", type=int, default=60)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--warmup", type=int, default=3)
    sweep.add_argument("--min-samples", type=int, default=5)
    sweep.add_argument("--margin", type=float, default=0.05)
    sweep.add_argument("--cooldown", type=int, default=10)
    sweep.add_argument("--eval-period", type=int, default=20)
    sweep.add_argument("--max-probes", type=int, default=1)
    sweep.add_argument("--out", choices=("csv", "json"), default="csv")
    sweep.add_argument("--out-path", default=None)
    sweep.set_defaults(func=cmd_sweep)

    demo = sub.add_parser("demo-frames", help="contour-detect PGM frames with mid-stream offload")
    demo.add_argument("--input-dir", required=True)
    demo.add_argument("--out-dir", required=True)
    demo.add_argument("--profile", required=True, metavar="PATH")
    demo.add_argument("--enable-after", type=int, default=10, help="frames before the policy may act")
    demo.add_argument("--seed", type=int, default=None)
    demo.add_argument("--warmup", type=int, default=3)
    demo.add_argument("--min-samples", type=int, default=5)
    demo.add_argument("--margin", type=float, default=0.05)
    demo.add_argument("--cooldown", type=int, default=10)
    demo.add_argument("--eval-period", type=int, default=20)
    demo.add_argument("--max-probes", type=int, default=1)
    demo.add_argument("--out", choices=("csv", "json"), default="csv")
    demo.add_argument("--out-path", default=None)
    demo.set_defaults(func=cmd_demo_frames)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"vpe: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"vpe: worker unreachable: {exc}", file=sys.stderr)
        return EXIT_WORKER
    except PgmError as exc:
        print(f"vpe: {exc}", file=sys.stderr)
        return EXIT_PGM
    except (VpeError, AssertionError) as exc:
        print(f"vpe: internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
