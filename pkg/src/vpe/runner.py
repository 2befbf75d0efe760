"""Benchmark harness: wires registry, profiler, policy and targets into runs.

A run drives one or more kernels in a continuous loop on fixed seeded inputs,
exactly the shape of the original measurements: the data stays constant from
call to call while the policy watches the timings and rebinds. Under the
simulated target everything is on the virtual clock, so a (config, seed) pair
fully determines every byte of the resulting report.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, PgmError
from .kernels import BENCH_FUNCTIONS, BENCH_SIGNATURES, WIRE_KERNEL_IDS
from .pgm import read_pgm, write_pgm
from .policy import PolicyConfig, PolicyEngine, TraceEvent
from .profiler import Profiler, ReportRow
from .registry import KernelRegistry
from .targets import (
    LOCAL_TARGET,
    SIM_TARGET,
    WORKER_TARGET,
    CostModel,
    LocalTarget,
    RealClock,
    RuntimeContext,
    SimulatedTarget,
    VirtualClock,
    WorkerTarget,
    load_cost_model,
)
from .values import ValueKind, kind_of

MODES = ("auto", "local-only", "force-remote")
TARGETS = ("sim", "worker")

DEFAULT_SIZES = {
    "complement": 1_000_000,
    "convolution": 512,
    "dot": 1_000_000,
    "matmul": 256,
    "pattern": 1_000_000,
    "fft": 4096,
}

EDGE_KERNEL = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.int32)


@dataclass(frozen=True)
class RunConfig:
    kernels: tuple[str, ...] = ("matmul",)
    size: int | None = None  # None picks the per-kernel default
    iters: int = 200
    mode: str = "auto"
    target: str = "sim"
    profile_path: str | None = None
    seed: int = 0
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    enable_after: int = 0  # invocations before the policy may act
    endpoint: str | None = None
    max_payload: int | None = None
    needle_len: int = 8
    conv_kernel_size: int = 3
    fixed_inputs: tuple[Any, ...] | None = None  # single-kernel runs only

    def __post_init__(self) -> None:
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}, got {self.target!r}")
        if not self.kernels:
            raise ConfigError("at least one kernel is required")
        for name in self.kernels:
            if name not in BENCH_FUNCTIONS:
                raise ConfigError(f"unknown kernel {name!r}; available: {sorted(BENCH_FUNCTIONS)}")
        if self.target == "sim" and self.profile_path is None:
            raise ConfigError("simulated-target runs need a cost-model profile (--profile)")
        if self.target == "worker" and self.endpoint is None:
            raise ConfigError("worker-target runs need an endpoint")
        if self.fixed_inputs is not None and len(self.kernels) != 1:
            raise ConfigError("fixed inputs require a single kernel")
        if self.enable_after < 0:
            raise ConfigError("enable_after must be >= 0")

    def size_for(self, kernel: str) -> int:
        return self.size if self.size is not None else DEFAULT_SIZES[kernel]


def generate_inputs(
    kernel: str,
    size: int,
    rng: np.random.Generator,
    needle_len: int = 8,
    conv_kernel_size: int = 3,
) -> tuple[Any, ...]:
    """Seeded workload for one kernel at the given size parameter."""
    if size < 1:
        raise ConfigError(f"size must be >= 1, got {size}")
    alphabet = np.frombuffer(b"ACGT", dtype=np.uint8)
    if kernel == "complement":
        return (alphabet[rng.integers(0, 4, size)].tobytes(),)
    if kernel == "pattern":
        haystack = alphabet[rng.integers(0, 4, size)].tobytes()
        needle = alphabet[rng.integers(0, 4, min(needle_len, size))].tobytes()
        return (haystack, needle)
    if kernel == "dot":
        a = rng.integers(-(1 << 15), 1 << 15, size, dtype=np.int32)
        b = rng.integers(-(1 << 15), 1 << 15, size, dtype=np.int32)
        return (a, b)
    if kernel == "matmul":
        a = rng.integers(-(1 << 15), 1 << 15, (size, size), dtype=np.int32)
        b = rng.integers(-(1 << 15), 1 << 15, (size, size), dtype=np.int32)
        return (a, b)
    if kernel == "convolution":
        k = conv_kernel_size
        if k % 2 == 0 or k > size:
            raise ConfigError(f"convolution kernel side {k} must be odd and <= size {size}")
        image = rng.integers(-(1 << 15), 1 << 15, (size, size), dtype=np.int32)
        kern = rng.integers(-8, 9, (k, k), dtype=np.int32)
        return (image, kern)
    if kernel == "fft":
        if size & (size - 1) != 0:
            raise ConfigError(f"fft size must be a power of two, got {size}")
        return (rng.integers(-(1 << 15), 1 << 15, 2 * size).astype(np.int16),)
    raise ConfigError(f"unknown kernel {kernel!r}")


def _result_summary(value: Any) -> str:
    kind = kind_of(value)
    if kind is ValueKind.I64:
        return str(int(value))
    if kind is ValueKind.BYTES:
        digest = hashlib.sha256(bytes(value)).hexdigest()[:16]
        return f"bytes[{len(value)}] sha256:{digest}"
    digest = hashlib.sha256(np.ascontiguousarray(value).tobytes()).hexdigest()[:16]
    return f"{kind.name.lower()}{list(value.shape)} sha256:{digest}"


@dataclass(frozen=True)
class IterationSample:
    seq: int
    kernel: str
    target: str
    duration_ns: int


@dataclass
class RunReport:
    config: dict[str, Any]
    rows: list[ReportRow]
    iterations: list[IterationSample]
    trace: list[TraceEvent]
    speedups: dict[str, float | None]
    final_bindings: dict[str, str]
    results: dict[str, str]

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "rows": [row.__dict__ for row in self.rows],
            "iterations": [it.__dict__ for it in self.iterations],
            "trace": [ev.__dict__ for ev in self.trace],
            "speedups": self.speedups,
            "final_bindings": self.final_bindings,
            "results": self.results,
        }
        return json.dumps(payload, sort_keys=True)

    def stats_csv(self) -> str:
        from .profiler import CSV_HEADER

        lines = [CSV_HEADER]
        for row in self.rows:
            lines.append(
                f"{row.kernel},{row.target},{row.count},"
                f"{row.mean_ms:.6f},{row.stddev_ms:.6f},{row.total_ms:.6f}"
            )
        return "\n".join(lines) + "\n"


class BenchmarkRun:
    """A configured run: registry, context and policy wired together."""

    def __init__(self, config: RunConfig, model: CostModel | None = None) -> None:
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.alt_target = SIM_TARGET if config.target == "sim" else WORKER_TARGET
        if config.target == "sim":
            self.model = model if model is not None else load_cost_model(config.profile_path)
            self.clock = VirtualClock()
            self.targets: dict[str, Any] = {
                LOCAL_TARGET: SimulatedTarget(LOCAL_TARGET, self.model, self.clock, self.rng, leg="local"),
                SIM_TARGET: SimulatedTarget(SIM_TARGET, self.model, self.clock, self.rng, leg="remote"),
            }
        else:
            self.model = model
            self.clock = RealClock()
            self.targets = {
                LOCAL_TARGET: LocalTarget(),
                WORKER_TARGET: WorkerTarget(WORKER_TARGET, config.endpoint, config.max_payload),
            }
        self.profiler = Profiler(config.policy.warmup)
        self.ctx = RuntimeContext(self.clock, self.targets, self.profiler)
        self.registry = KernelRegistry()
        self.kernel_ids: dict[str, int] = {}
        self.inputs: dict[str, tuple[Any, ...]] = {}
        for name in config.kernels:
            param_kinds, return_kind = BENCH_SIGNATURES[name]
            impls: dict[str, Any] = {LOCAL_TARGET: BENCH_FUNCTIONS[name]}
            if config.target == "sim":
                impls[SIM_TARGET] = BENCH_FUNCTIONS[name]
            else:
                impls[WORKER_TARGET] = WIRE_KERNEL_IDS[name]
            self.kernel_ids[name] = self.registry.register(name, param_kinds, return_kind, impls)
            if config.fixed_inputs is not None:
                self.inputs[name] = config.fixed_inputs
            else:
                self.inputs[name] = generate_inputs(
                    name, config.size_for(name), self.rng, config.needle_len, config.conv_kernel_size
                )
        self.engine: PolicyEngine | None = None
        if config.mode == "auto":
            self.engine = PolicyEngine(self.registry, self.profiler, self.ctx, config.policy)
            engine = self.engine
            self.ctx.failure_listener = lambda kid, target: engine.on_remote_failure(kid, target)

    def close(self) -> None:
        target = self.targets.get(WORKER_TARGET)
        if target is not None:
            target.close()

    def execute(self) -> RunReport:
        cfg = self.config
        if cfg.mode == "force-remote":
            for name, kid in self.kernel_ids.items():
                self.registry.rebind(kid, self.alt_target)
                self.profiler.begin_episode(kid, self.alt_target)
                self.ctx.begin_episode(name, self.alt_target)
        iterations: list[IterationSample] = []
        results: dict[str, str] = {}
        count = 0
        round_no = 0
        transition_count: int | None = None
        for _ in range(cfg.iters):
            for name in cfg.kernels:
                value, record = self.registry.invoke(self.kernel_ids[name], self.inputs[name], self.ctx)
                iterations.append(IterationSample(record.seq, name, record.target, record.duration_ns))
                results[name] = _result_summary(value)
                count += 1
                if (
                    self.engine is not None
                    and count >= cfg.enable_after
                    and (count - cfg.enable_after) % cfg.policy.eval_period == 0
                ):
                    round_no += 1
                    actions = self.engine.run_round(round_no)
                    if transition_count is None and any(a.kind.value == "offload" for a in actions):
                        transition_count = count
        self._transition_count = transition_count
        return self._report(iterations, results)

    def _report(self, iterations: list[IterationSample], results: dict[str, str]) -> RunReport:
        cfg = self.config
        names = {kid: name for name, kid in self.kernel_ids.items()}
        rows = self.profiler.report(warmup_excluded=True, names=names)
        by_pair = {(row.kernel, row.target): row for row in rows}
        speedups: dict[str, float | None] = {}
        final_bindings: dict[str, str] = {}
        for name, kid in self.kernel_ids.items():
            local = by_pair.get((name, LOCAL_TARGET))
            remote = by_pair.get((name, self.alt_target))
            if local and remote and local.count and remote.count and remote.mean_ms > 0:
                speedups[name] = local.mean_ms / remote.mean_ms
            else:
                speedups[name] = None
            final_bindings[name] = self.registry.current_binding(kid).target
        config_echo = {
            "kernels": list(cfg.kernels),
            "size": cfg.size,
            "iters": cfg.iters,
            "mode": cfg.mode,
            "target": cfg.target,
            "profile": cfg.profile_path,
            "seed": cfg.seed,
            "enable_after": cfg.enable_after,
            "policy": asdict(cfg.policy),
        }
        trace = list(self.engine.trace) if self.engine is not None else []
        return RunReport(config_echo, rows, iterations, trace, speedups, final_bindings, results)


def run_benchmark(config: RunConfig, model: CostModel | None = None) -> RunReport:
    run = BenchmarkRun(config, model)
    try:
        return run.execute()
    finally:
        run.close()


@dataclass(frozen=True)
class SweepRow:
    size: int
    local_mean_ms: float | None
    remote_mean_ms: float | None
    final_target: str
    remote_worth: bool
    remote_setup_ms: float
    remote_compute_ms: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    crossover_estimate: float | None

    def to_json(self) -> str:
        return json.dumps(
            {"rows": [row.__dict__ for row in self.rows], "crossover_estimate": self.crossover_estimate},
            sort_keys=True,
        )

    def to_csv(self) -> str:
        def fmt(x: float | None) -> str:
            return "" if x is None else f"{x:.6f}"

        lines = ["size,local_mean_ms,remote_mean_ms,final_target,remote_worth,remote_setup_ms,remote_compute_ms"]
        for row in self.rows:
            lines.append(
                f"{row.size},{fmt(row.local_mean_ms)},{fmt(row.remote_mean_ms)},{row.final_target},"
                f"{str(row.remote_worth).lower()},{row.remote_setup_ms:.6f},{row.remote_compute_ms:.6f}"
            )
        return "\n".join(lines) + "\n"


def run_sweep(config: RunConfig, sizes: Sequence[int]) -> SweepReport:
    """Run the matmul benchmark at each size and locate the local/remote crossover."""
    if not sizes:
        raise ConfigError("sweep needs at least one size")
    if config.target != "sim":
        raise ConfigError("sweep runs on the simulated target")
    model = load_cost_model(config.profile_path)
    entry = model.entry("matmul")
    rows: list[SweepRow] = []
    for size in sizes:
        report = run_benchmark(replace(config, kernels=("matmul",), size=int(size)), model)
        by_pair = {(row.kernel, row.target): row for row in report.rows}
        local = by_pair.get(("matmul", LOCAL_TARGET))
        remote = by_pair.get(("matmul", SIM_TARGET))
        final = report.final_bindings["matmul"]
        rows.append(
            SweepRow(
                size=int(size),
                local_mean_ms=local.mean_ms if local and local.count else None,
                remote_mean_ms=remote.mean_ms if remote and remote.count else None,
                final_target=final,
                remote_worth=final == SIM_TARGET,
                remote_setup_ms=entry.setup_ms,
                remote_compute_ms=entry.remote_per_unit_ms * float(size) ** 3,
            )
        )
    return SweepReport(rows, _estimate_crossover(rows))


def _estimate_crossover(rows: Sequence[SweepRow]) -> float | None:
    """Interpolate where local and remote measured means cross, in n^3 space.

    Both laws are affine in u = n^3, so linear interpolation between the two
    bracketing sizes recovers the true crossover exactly (up to noise).
    """
    points = [
        (float(r.size) ** 3, r.local_mean_ms - r.remote_mean_ms)
        for r in rows
        if r.local_mean_ms is not None and r.remote_mean_ms is not None
    ]
    points.sort()
    for (u1, d1), (u2, d2) in zip(points, points[1:]):
        if d1 < 0 <= d2:
            if d2 == d1:
                continue
            u_star = u1 + (0.0 - d1) * (u2 - u1) / (d2 - d1)
            return u_star ** (1.0 / 3.0)
    return None


@dataclass(frozen=True)
class FrameRow:
    index: int
    file: str
    target: str
    duration_ms: float


@dataclass
class DemoReport:
    frames: list[FrameRow]
    fps_before: float | None
    fps_after: float | None
    ratio: float | None
    transition_frame: int | None
    rows: list[ReportRow]

    def to_json(self) -> str:
        return json.dumps(
            {
                "frames": [f.__dict__ for f in self.frames],
                "fps_before": self.fps_before,
                "fps_after": self.fps_after,
                "ratio": self.ratio,
                "transition_frame": self.transition_frame,
                "rows": [row.__dict__ for row in self.rows],
            },
            sort_keys=True,
        )

    def to_csv(self) -> str:
        lines = ["frame,file,target,duration_ms"]
        for f in self.frames:
            lines.append(f"{f.index},{f.file},{f.target},{f.duration_ms:.6f}")
        return "\n".join(lines) + "\n"


def run_demo_frames(
    input_dir: str | Path,
    output_dir: str | Path,
    config: RunConfig,
    edge_kernel: np.ndarray | None = None,
) -> DemoReport:
    """Contour-detect a directory of P5 frames, letting the policy offload mid-stream."""
    if config.target != "sim":
        raise ConfigError("the frame demo runs on the simulated target")
    kern = EDGE_KERNEL if edge_kernel is None else edge_kernel
    in_dir = Path(input_dir)
    paths = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".pgm") if in_dir.is_dir() else []
    if not paths:
        raise PgmError(f"{input_dir}: no .pgm frames found")
    frames = [read_pgm(p) for p in paths]
    shape = frames[0].shape
    for path, frame in zip(paths, frames):
        if frame.shape != shape:
            raise PgmError(f"{path}: frame is {frame.shape[1]}x{frame.shape[0]}, expected {shape[1]}x{shape[0]}")

    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    run = BenchmarkRun(replace(config, kernels=("convolution",), mode="auto", fixed_inputs=None), None)
    kid = run.kernel_ids["convolution"]
    frame_rows: list[FrameRow] = []
    count = 0
    round_no = 0
    transition: int | None = None
    for index, (path, frame) in enumerate(zip(paths, frames), start=1):
        args = (frame.astype(np.int32), kern)
        value, record = run.registry.invoke(kid, args, run.ctx)
        out = np.clip(value, 0, 255).astype(np.uint8)
        write_pgm(out_dir / path.name, out)
        frame_rows.append(FrameRow(index, path.name, record.target, record.duration_ns / 1e6))
        count += 1
        if (
            run.engine is not None
            and count >= config.enable_after
            and (count - config.enable_after) % config.policy.eval_period == 0
        ):
            round_no += 1
            actions = run.engine.run_round(round_no)
            if transition is None and any(a.kind.value == "offload" for a in actions):
                transition = count

    names = {kid: "convolution"}
    rows = run.profiler.report(warmup_excluded=True, names=names)
    by_target = {row.target: row for row in rows}
    local = by_target.get(LOCAL_TARGET)
    remote = by_target.get(SIM_TARGET)
    fps_before = 1000.0 / local.mean_ms if local and local.count and local.mean_ms > 0 else None
    fps_after = 1000.0 / remote.mean_ms if remote and remote.count and remote.mean_ms > 0 else None
    ratio = fps_after / fps_before if fps_before and fps_after else None
    return DemoReport(frame_rows, fps_before, fps_after, ratio, transition, rows)
