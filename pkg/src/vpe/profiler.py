"""Per-invocation timing collection and running statistics.

Statistics are kept per (kernel, target) with Welford's running algorithm:
one pass, numerically stable, and exactly what a mean +/- stddev report needs.
The first W samples after each (re)binding episode are excluded from the
steady-state figures and tallied separately, so first-touch effects never
pollute a decision.
"""

from __future__ import annotations

import enum
import json
import math
import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

from .errors import ArgumentError
from .targets import ClockKind

if TYPE_CHECKING:  # pragma: no cover
    from .registry import InvocationRecord

DEFAULT_WARMUP = 3

CSV_HEADER = "kernel,target,count,mean_ms,stddev_ms,total_ms"


@dataclass(frozen=True)
class TimingSample:
    kernel_id: int
    target: str
    duration_ns: int
    seq: int
    clock_kind: ClockKind = ClockKind.REAL

    def __post_init__(self) -> None:
        if self.duration_ns < 0:
            raise ArgumentError("sample duration must be non-negative")


class _Welford:
    __slots__ = ("count", "mean", "m2", "total")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.total = 0  # exact, in ns

    def add(self, duration_ns: int) -> None:
        self.count += 1
        self.total += duration_ns
        delta = duration_ns - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (duration_ns - self.mean)

    def merged(self, other: "_Welford") -> "_Welford":
        out = _Welford()
        out.count = self.count + other.count
        out.total = self.total + other.total
        if out.count == 0:
            return out
        delta = other.mean - self.mean
        out.mean = self.mean + delta * other.count / out.count
        out.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / out.count
        return out


@dataclass(frozen=True)
class KernelStats:
    """Steady-state statistics for one (kernel, target) pair. Times in ns."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    total: int = 0
    warmup_skipped: int = 0

    @property
    def stddev(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.count - 1))

    @property
    def mean_ms(self) -> float:
        return self.mean / 1e6

    @property
    def stddev_ms(self) -> float:
        return self.stddev / 1e6

    @property
    def total_ms(self) -> float:
        return self.total / 1e6


@dataclass(frozen=True)
class ReportRow:
    kernel: str
    target: str
    count: int
    mean_ms: float
    stddev_ms: float
    total_ms: float


class _PairState:
    __slots__ = ("steady", "warm", "warmup_left")

    def __init__(self, warmup: int) -> None:
        self.steady = _Welford()
        self.warm = _Welford()
        self.warmup_left = warmup


class Profiler:
    """Collects timing samples and serves statistics, rankings and reports.

    record() may be called concurrently from invocation threads; readers see
    internally consistent per-pair statistics. Episodes (warm-up windows) are
    re-armed by begin_episode() after every rebind.
    """

    def __init__(self, warmup: int = DEFAULT_WARMUP) -> None:
        if warmup < 0:
            raise ArgumentError("warmup must be non-negative")
        self.warmup = warmup
        self._lock = threading.Lock()
        self._pairs: dict[tuple[int, str], _PairState] = {}

    def _pair(self, kernel_id: int, target: str) -> _PairState:
        key = (kernel_id, target)
        state = self._pairs.get(key)
        if state is None:
            state = _PairState(self.warmup)
            self._pairs[key] = state
        return state

    def record(self, sample: TimingSample) -> None:
        with self._lock:
            state = self._pair(sample.kernel_id, sample.target)
            if state.warmup_left > 0:
                state.warmup_left -= 1
                state.warm.add(sample.duration_ns)
            else:
                state.steady.add(sample.duration_ns)

    def record_invocation(self, record: "InvocationRecord", clock_kind: ClockKind) -> None:
        self.record(TimingSample(record.kernel_id, record.target, record.duration_ns, record.seq, clock_kind))

    def begin_episode(self, kernel_id: int, target: str) -> None:
        """Re-arm the warm-up window after a (re)binding."""
        with self._lock:
            self._pair(kernel_id, target).warmup_left = self.warmup

    def stats(self, kernel_id: int, target: str) -> KernelStats:
        with self._lock:
            state = self._pairs.get((kernel_id, target))
            if state is None:
                return KernelStats()
            s = state.steady
            return KernelStats(s.count, s.mean, s.m2, s.total, state.warm.count)

    def ranking(self, local_target: str = "local") -> list[tuple[int, int]]:
        """(kernel, total local ns) pairs, largest total first, ties by kernel id."""
        with self._lock:
            totals = [
                (kernel_id, state.steady.total)
                for (kernel_id, target), state in self._pairs.items()
                if target == local_target
            ]
        totals.sort(key=lambda item: (-item[1], item[0]))
        return totals

    def hottest(
        self,
        exclusions: Iterable[int] = (),
        min_samples: int = 1,
        local_target: str = "local",
    ) -> int | None:
        """Kernel with the greatest cumulative local time, or None."""
        excluded = set(exclusions)
        for kernel_id, _total in self.ranking(local_target):
            if kernel_id in excluded:
                continue
            if self.stats(kernel_id, local_target).count >= min_samples:
                return kernel_id
        return None

    def report(
        self,
        warmup_excluded: bool = True,
        names: Mapping[int, str] | None = None,
    ) -> list[ReportRow]:
        """One row per observed (kernel, target), ordered by (kernel, target)."""
        with self._lock:
            snapshot = {
                key: (state.steady, state.warm, state.steady.merged(state.warm))
                for key, state in self._pairs.items()
            }
        rows = []
        for (kernel_id, target) in sorted(snapshot, key=lambda k: (k[0], k[1])):
            steady, _warm, merged = snapshot[(kernel_id, target)]
            acc = steady if warmup_excluded else merged
            stddev = math.sqrt(acc.m2 / (acc.count - 1)) if acc.count >= 2 else 0.0
            rows.append(
                ReportRow(
                    kernel=names[kernel_id] if names else str(kernel_id),
                    target=target,
                    count=acc.count,
                    mean_ms=acc.mean / 1e6,
                    stddev_ms=stddev / 1e6,
                    total_ms=acc.total / 1e6,
                )
            )
        return rows

    def report_csv(self, warmup_excluded: bool = True, names: Mapping[int, str] | None = None) -> str:
        lines = [CSV_HEADER]
        for row in self.report(warmup_excluded, names):
            lines.append(
                f"{row.kernel},{row.target},{row.count},"
                f"{row.mean_ms:.6f},{row.stddev_ms:.6f},{row.total_ms:.6f}"
            )
        return "\n".join(lines) + "\n"

    def report_json(self, warmup_excluded: bool = True, names: Mapping[int, str] | None = None) -> str:
        rows = [row.__dict__ for row in self.report(warmup_excluded, names)]
        return json.dumps(rows, sort_keys=True)
