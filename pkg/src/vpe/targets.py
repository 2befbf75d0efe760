"""Execution backends: local, simulated accelerator, and remote worker client.

The simulated backend computes results by running the local implementation
(correctness is always real) while charging a virtual clock from a calibrated
cost model, so whole benchmark runs are deterministic and replayable. Cost
models load from JSON documents shaped like::

    { "<kernel>": { "setup_ms": 100.0, "local_per_unit_ms": ..., "remote_per_unit_ms": ...,
                    "units": "n3"|"n"|"nlogn"|"hwk2"|"const", "noise_stddev_ms": ... } }

Setup cost is charged once per offload episode, on the first simulated-remote
call after a rebind.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Sequence

import numpy as np

from .errors import CostModelError, TargetError

if TYPE_CHECKING:  # pragma: no cover
    from .profiler import Profiler
    from .registry import KernelDescriptor

LOCAL_TARGET = "local"
SIM_TARGET = "sim"
WORKER_TARGET = "worker"

UNIT_FORMULAS = ("const", "n", "n3", "nlogn", "hwk2")


class ClockKind(enum.Enum):
    REAL = "real"
    VIRTUAL = "virtual"


class RealClock:
    """Monotonic wall clock."""

    kind = ClockKind.REAL

    def now_ns(self) -> int:
        return time.perf_counter_ns()


class VirtualClock:
    """Deterministic clock advanced only by explicit charges. Never decreases."""

    kind = ClockKind.VIRTUAL

    def __init__(self) -> None:
        self._now_ns = 0

    def now_ns(self) -> int:
        return self._now_ns

    def charge_ns(self, delta_ns: int) -> None:
        if delta_ns < 0:
            raise ValueError("virtual clock cannot move backwards")
        self._now_ns += delta_ns

    def charge_ms(self, delta_ms: float) -> None:
        self.charge_ns(int(round(delta_ms * 1e6)))


class TargetKind(enum.Enum):
    LOCAL = "local"
    SIMULATED = "simulated"
    REMOTE_WORKER = "remote-worker"


@dataclass(frozen=True)
class TargetDescriptor:
    target_id: str
    kind: TargetKind
    capabilities: frozenset[str] = frozenset()


@dataclass(frozen=True)
class CostEntry:
    """Timing law for one kernel: setup + per-unit rate, plus gaussian noise.

    ``setup_mode`` says when the remote leg pays setup: "per-episode" charges
    it on the first call after a rebind (a one-time transfer setup),
    "per-call" charges it on every call (transfer dominated by the call
    itself, as in the size-sweep law).
    """

    setup_ms: float
    local_per_unit_ms: float
    remote_per_unit_ms: float
    units: str
    noise_stddev_ms: float = 0.0
    setup_mode: str = "per-episode"

    def __post_init__(self) -> None:
        if self.setup_ms < 0 or self.local_per_unit_ms < 0 or self.remote_per_unit_ms < 0:
            raise CostModelError("setup and per-unit rates must be non-negative")
        if self.noise_stddev_ms < 0:
            raise CostModelError("noise stddev must be non-negative")
        if self.units not in UNIT_FORMULAS:
            raise CostModelError(f"unknown units formula {self.units!r}")
        if self.setup_mode not in ("per-episode", "per-call"):
            raise CostModelError(f"unknown setup_mode {self.setup_mode!r}")


@dataclass
class CostModel:
    entries: dict[str, CostEntry] = field(default_factory=dict)

    def entry(self, kernel_name: str) -> CostEntry:
        try:
            return self.entries[kernel_name]
        except KeyError:
            raise CostModelError(f"cost model has no entry for kernel {kernel_name!r}") from None


def load_cost_model(path: str | Path) -> CostModel:
    """Load a cost-model profile from a JSON document."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise CostModelError(f"{path}: profile must be a JSON object")
    entries = {}
    for name, fields in raw.items():
        if not isinstance(fields, dict):
            raise CostModelError(f"{path}: entry for {name!r} must be an object")
        try:
            entries[name] = CostEntry(
                setup_ms=float(fields["setup_ms"]),
                local_per_unit_ms=float(fields["local_per_unit_ms"]),
                remote_per_unit_ms=float(fields["remote_per_unit_ms"]),
                units=str(fields["units"]),
                noise_stddev_ms=float(fields.get("noise_stddev_ms", 0.0)),
                setup_mode=str(fields.get("setup_mode", "per-episode")),
            )
        except KeyError as exc:
            raise CostModelError(f"{path}: entry for {name!r} missing field {exc}") from None
    return CostModel(entries)


def work_units(formula: str, args: Sequence[Any]) -> float:
    """Work-size of an argument list under one of the named unit formulas."""
    if formula == "const":
        return 1.0
    if formula == "n":
        return float(len(args[0]))
    if formula == "n3":
        a, b = args[0], args[1]
        return float(a.shape[0]) * float(a.shape[1]) * float(b.shape[1])
    if formula == "hwk2":
        image, kern = args[0], args[1]
        h, w = image.shape
        k = kern.shape[0]
        return float(h) * float(w) * float(k) * float(k)
    if formula == "nlogn":
        n = len(args[0]) // 2
        return float(n) * math.log2(n) if n > 1 else 0.0
    raise CostModelError(f"unknown units formula {formula!r}")


class LocalTarget:
    """Runs the kernel's local implementation in-process."""

    kind = TargetKind.LOCAL

    def __init__(self, target_id: str = LOCAL_TARGET) -> None:
        self.target_id = target_id

    def describe(self) -> TargetDescriptor:
        return TargetDescriptor(self.target_id, self.kind)

    def begin_episode(self, kernel_name: str) -> None:
        pass

    def execute(self, desc: "KernelDescriptor", args: Sequence[Any]) -> Any:
        impl = desc.impls[self.target_id]
        return impl(*args)


class SimulatedTarget:
    """Executes the local implementation while charging a virtual clock.

    ``leg`` selects which side of the platform asymmetry this instance plays:
    the "local" leg bills local_per_unit_ms and never pays setup; the "remote"
    leg bills setup (once per episode) plus remote_per_unit_ms. Noise is a
    seeded gaussian draw per call; the total charge is clamped at zero.
    Single-threaded by contract: the simulation harness drives it sequentially.
    """

    kind = TargetKind.SIMULATED

    def __init__(
        self,
        target_id: str,
        model: CostModel,
        clock: VirtualClock,
        rng: np.random.Generator,
        leg: str = "remote",
    ) -> None:
        if leg not in ("local", "remote"):
            raise ValueError(f"leg must be 'local' or 'remote', got {leg!r}")
        self.target_id = target_id
        self.model = model
        self.clock = clock
        self.rng = rng
        self.leg = leg
        self._setup_paid: set[str] = set()

    def describe(self) -> TargetDescriptor:
        return TargetDescriptor(self.target_id, self.kind, frozenset(self.model.entries))

    def begin_episode(self, kernel_name: str) -> None:
        self._setup_paid.discard(kernel_name)

    def execute(self, desc: "KernelDescriptor", args: Sequence[Any]) -> Any:
        entry = self.model.entry(desc.name)
        impl = desc.impls[LOCAL_TARGET]
        result = impl(*args)
        units = work_units(entry.units, args)
        if self.leg == "remote":
            cost_ms = entry.remote_per_unit_ms * units
            if entry.setup_mode == "per-call":
                cost_ms += entry.setup_ms
            elif desc.name not in self._setup_paid:
                cost_ms += entry.setup_ms
                self._setup_paid.add(desc.name)
        else:
            cost_ms = entry.local_per_unit_ms * units
        if entry.noise_stddev_ms > 0:
            cost_ms += self.rng.normal(0.0, entry.noise_stddev_ms)
        self.clock.charge_ms(max(0.0, cost_ms))
        return result


class WorkerTarget:
    """Dispatches invocations to a worker process over the wire protocol.

    Keeps one connection open across calls; a transport failure drops it so
    the next call reconnects. External serialization is required if used from
    multiple threads (the protocol is strict request/response).
    """

    kind = TargetKind.REMOTE_WORKER

    def __init__(self, target_id: str, endpoint: str, max_payload: int | None = None) -> None:
        from .wire import DEFAULT_MAX_PAYLOAD, WorkerClient

        self.target_id = target_id
        self.endpoint = endpoint
        self._client = WorkerClient(endpoint, max_payload or DEFAULT_MAX_PAYLOAD)

    def describe(self) -> TargetDescriptor:
        return TargetDescriptor(self.target_id, self.kind)

    def begin_episode(self, kernel_name: str) -> None:
        pass

    def execute(self, desc: "KernelDescriptor", args: Sequence[Any]) -> Any:
        wire_id = desc.impls[self.target_id]
        if not isinstance(wire_id, int):
            raise TargetError(f"worker implementation handle for {desc.name!r} must be a wire id")
        return self._client.call(wire_id, args)

    def close(self) -> None:
        self._client.close()


@dataclass
class RuntimeContext:
    """Everything an invocation needs besides the kernel itself."""

    clock: RealClock | VirtualClock
    targets: dict[str, Any]
    profiler: "Profiler | None" = None
    failure_listener: Callable[[int, str], None] | None = None

    def target(self, target_id: str):
        try:
            return self.targets[target_id]
        except KeyError:
            raise TargetError(f"no target {target_id!r} in this context") from None

    def begin_episode(self, kernel_name: str, target_id: str) -> None:
        self.target(target_id).begin_episode(kernel_name)


@dataclass(frozen=True)
class FitAnchors:
    """Calibration anchors for an affine cubic cost law."""

    crossover_size: float  # size where local and remote times are equal
    setup_ms: float
    local_time_ms: float  # local time observed at the calibration size
    speedup: float  # local/remote ratio at the calibration size


@dataclass(frozen=True)
class FitResult:
    local_per_unit_ms: float
    remote_per_unit_ms: float
    setup_ms: float
    calibration_size: float

    def entry(self, noise_stddev_ms: float = 0.0) -> CostEntry:
        # The fitted law is a per-call law: every sweep call pays the setup,
        # which is exactly why small sizes are not worth offloading.
        return CostEntry(
            setup_ms=self.setup_ms,
            local_per_unit_ms=self.local_per_unit_ms,
            remote_per_unit_ms=self.remote_per_unit_ms,
            units="n3",
            noise_stddev_ms=noise_stddev_ms,
            setup_mode="per-call",
        )

    def local_ms(self, n: float) -> float:
        return self.local_per_unit_ms * n**3

    def remote_ms(self, n: float) -> float:
        return self.setup_ms + self.remote_per_unit_ms * n**3


def fit_cost_model(anchors: FitAnchors) -> FitResult:
    """Solve t_local(n) = l*n^3 and t_remote(n) = S + r*n^3 from the anchors.

    Constraints: the two laws cross at ``crossover_size``, and at the (solved)
    calibration size the local time equals ``local_time_ms`` while the
    local/remote ratio equals ``speedup``.
    """
    nx, setup, t_local, sigma = (
        anchors.crossover_size,
        anchors.setup_ms,
        anchors.local_time_ms,
        anchors.speedup,
    )
    if nx <= 0 or setup <= 0 or t_local <= 0:
        raise CostModelError("anchors must be positive")
    if sigma <= 1.0:
        raise CostModelError(
            f"infeasible anchors: speedup {sigma} <= 1 means the remote side never wins, "
            "yet a crossover is demanded"
        )
    denom = 1.0 - sigma * setup / t_local
    if denom <= 0:
        raise CostModelError(
            f"infeasible anchors: setup {setup} ms at speedup {sigma} exceeds the local "
            f"time budget {t_local} ms (would require a negative remote rate)"
        )
    ratio = sigma / denom  # l / r
    local_rate = setup / (nx**3 * (1.0 - 1.0 / ratio))
    remote_rate = local_rate / ratio
    calibration_size = (t_local / local_rate) ** (1.0 / 3.0)
    if calibration_size <= nx:
        raise CostModelError(
            f"infeasible anchors: calibration size {calibration_size:.1f} does not lie "
            f"beyond the crossover {nx}"
        )
    return FitResult(local_rate, remote_rate, setup, calibration_size)
