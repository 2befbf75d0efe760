"""Blind-offload decision engine.

Per kernel the engine walks a small state machine: Baseline kernels with
enough local samples get probed on an alternate target; after enough
post-warm-up probe samples the offload is committed if the measured speedup
clears the hysteresis margin, otherwise reverted into a cooldown. Committed
kernels are re-checked every round at no extra cost, since their samples keep
flowing. A candidate whose recorded statistics already demonstrate an
insufficient speedup is not probed again until the evidence changes, so a
losing kernel settles after one offload and one revert.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable

from .errors import ArgumentError
from .targets import LOCAL_TARGET, RuntimeContext, TargetError

if TYPE_CHECKING:  # pragma: no cover
    from .profiler import Profiler
    from .registry import KernelRegistry

TRACE_CSV_HEADER = "round,kernel,action,local_mean_ms,remote_mean_ms,speedup"


def speedup(local_mean: float, remote_mean: float) -> float:
    """Ratio of local to remote mean duration; > 1 means the remote side wins."""
    if local_mean <= 0 or remote_mean <= 0:
        raise ArgumentError("speedup requires positive mean durations")
    return local_mean / remote_mean


@dataclass(frozen=True)
class PolicyConfig:
    min_samples: int = 5  # post-warm-up samples needed before any judgement
    improve_margin: float = 0.05  # hysteresis: keep an offload only at >= 1.05x
    cooldown_rounds: int = 10  # rounds a reverted kernel sits out
    eval_period: int = 20  # invocations between evaluation rounds
    warmup: int = 3  # samples skipped per (kernel, target) episode
    max_concurrent_probes: int = 1

    def __post_init__(self) -> None:
        if self.min_samples < 2:
            raise ArgumentError("min_samples must be >= 2")
        if not 0 <= self.improve_margin < 1:
            raise ArgumentError("improve_margin must be in [0, 1)")
        if self.eval_period < 1:
            raise ArgumentError("eval_period must be >= 1")
        if self.cooldown_rounds < 0 or self.warmup < 0 or self.max_concurrent_probes < 1:
            raise ArgumentError("invalid policy configuration")

    @property
    def required_speedup(self) -> float:
        return 1.0 + self.improve_margin


class Phase(enum.Enum):
    BASELINE = "baseline"
    PROBING = "probing"
    COMMITTED = "committed"
    COOLDOWN = "cooldown"


@dataclass
class KernelPolicyState:
    phase: Phase = Phase.BASELINE
    target: str | None = None  # probe/committed target
    probe_started_round: int = 0
    cooldown_until_round: int = 0


class ActionKind(enum.Enum):
    OFFLOAD = "offload"
    COMMIT = "commit"
    REVERT = "revert"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    kernel_id: int
    target: str | None = None  # offload destination; None for commit/revert


@dataclass(frozen=True)
class TraceEvent:
    round: int
    kernel: str
    action: str
    local_mean_ms: float | None
    remote_mean_ms: float | None
    speedup: float | None


def trace_csv(events: Iterable[TraceEvent]) -> str:
    def fmt(x: float | None) -> str:
        return "" if x is None else f"{x:.6f}"

    lines = [TRACE_CSV_HEADER]
    for ev in events:
        lines.append(
            f"{ev.round},{ev.kernel},{ev.action},"
            f"{fmt(ev.local_mean_ms)},{fmt(ev.remote_mean_ms)},{fmt(ev.speedup)}"
        )
    return "\n".join(lines) + "\n"


def trace_json(events: Iterable[TraceEvent]) -> str:
    return json.dumps([ev.__dict__ for ev in events], sort_keys=True)


class PolicyEngine:
    """Runs the offload state machine against live profiler statistics.

    Single control thread by contract; rebinds go through the registry's
    atomic swap, so invocation threads never block on the policy.
    """

    def __init__(
        self,
        registry: "KernelRegistry",
        profiler: "Profiler",
        ctx: RuntimeContext,
        config: PolicyConfig | None = None,
        on_action: Callable[[TraceEvent], None] | None = None,
    ) -> None:
        self.registry = registry
        self.profiler = profiler
        self.ctx = ctx
        self.config = config or PolicyConfig()
        self.states: dict[int, KernelPolicyState] = {}
        self.trace: list[TraceEvent] = []
        self._on_action = on_action
        self._last_round = 0

    def state(self, kernel_id: int) -> KernelPolicyState:
        st = self.states.get(kernel_id)
        if st is None:
            st = KernelPolicyState()
            self.states[kernel_id] = st
        return st

    def _probe_target(self, kernel_id: int) -> str | None:
        """First non-local target offering this kernel."""
        for target in self.registry.descriptor(kernel_id).impls:
            if target != LOCAL_TARGET:
                return target
        return None

    def _measured(self, kernel_id: int, target: str) -> tuple[float | None, float | None, float | None]:
        lstats = self.profiler.stats(kernel_id, LOCAL_TARGET)
        rstats = self.profiler.stats(kernel_id, target)
        local = lstats.mean_ms if lstats.count else None
        remote = rstats.mean_ms if rstats.count else None
        ratio = local / remote if local and remote else None
        return local, remote, ratio

    def select_candidate(self) -> tuple[int, str] | None:
        """Hottest Baseline kernel worth probing, or None."""
        return self._pick_candidate(exclude=set())

    def evaluate(self, round_no: int) -> list[Action]:
        """One evaluation round: judge probes, re-check commits, expire cooldowns, pick offloads."""
        cfg = self.config
        self._last_round = round_no
        for kernel_id in self.registry.kernel_ids():
            self.state(kernel_id)

        actions: list[Action] = []
        leaving_probe: set[int] = set()
        for kernel_id in sorted(self.states):
            st = self.states[kernel_id]
            if st.phase is Phase.PROBING:
                assert st.target is not None
                lstats = self.profiler.stats(kernel_id, LOCAL_TARGET)
                rstats = self.profiler.stats(kernel_id, st.target)
                if rstats.count < cfg.min_samples or lstats.count == 0:
                    continue
                if lstats.mean <= 0 or rstats.mean <= 0:
                    continue
                if speedup(lstats.mean, rstats.mean) >= cfg.required_speedup:
                    actions.append(Action(ActionKind.COMMIT, kernel_id))
                else:
                    actions.append(Action(ActionKind.REVERT, kernel_id))
                leaving_probe.add(kernel_id)
            elif st.phase is Phase.COMMITTED:
                assert st.target is not None
                lstats = self.profiler.stats(kernel_id, LOCAL_TARGET)
                rstats = self.profiler.stats(kernel_id, st.target)
                if lstats.count and rstats.count >= cfg.min_samples and lstats.mean > 0 and rstats.mean > 0:
                    if speedup(lstats.mean, rstats.mean) < cfg.required_speedup:
                        actions.append(Action(ActionKind.REVERT, kernel_id))
            elif st.phase is Phase.COOLDOWN and round_no >= st.cooldown_until_round:
                st.phase = Phase.BASELINE
                st.target = None

        probing_after = sum(1 for st in self.states.values() if st.phase is Phase.PROBING) - len(leaving_probe)
        slots = cfg.max_concurrent_probes - probing_after
        offload_pending: set[int] = set()
        while slots > 0:
            candidate = self._pick_candidate(exclude=offload_pending | leaving_probe)
            if candidate is None:
                break
            kernel_id, target = candidate
            actions.append(Action(ActionKind.OFFLOAD, kernel_id, target))
            offload_pending.add(kernel_id)
            slots -= 1
        return actions

    def _pick_candidate(self, exclude: set[int]) -> tuple[int, str] | None:
        cfg = self.config
        for kernel_id, _total in self.profiler.ranking(LOCAL_TARGET):
            if kernel_id in exclude:
                continue
            if self.state(kernel_id).phase is not Phase.BASELINE:
                continue
            lstats = self.profiler.stats(kernel_id, LOCAL_TARGET)
            if lstats.count < cfg.min_samples:
                continue
            target = self._probe_target(kernel_id)
            if target is None:
                continue
            # Skip experiments whose outcome the statistics already settle.
            rstats = self.profiler.stats(kernel_id, target)
            if (
                rstats.count >= cfg.min_samples
                and lstats.mean > 0
                and rstats.mean > 0
                and speedup(lstats.mean, rstats.mean) < cfg.required_speedup
            ):
                continue
            return kernel_id, target
        return None

    def apply(self, action: Action, round_no: int) -> None:
        """Execute one action: rebind as needed and advance the state machine."""
        st = self.state(action.kernel_id)
        cfg = self.config
        name = self.registry.descriptor(action.kernel_id).name
        if action.kind is ActionKind.OFFLOAD:
            assert action.target is not None
            try:
                self.registry.rebind(action.kernel_id, action.target)
            except TargetError:
                st.phase = Phase.COOLDOWN
                st.cooldown_until_round = round_no + cfg.cooldown_rounds
                return
            self.profiler.begin_episode(action.kernel_id, action.target)
            self.ctx.begin_episode(name, action.target)
            st.phase = Phase.PROBING
            st.target = action.target
            st.probe_started_round = round_no
            self._trace(round_no, action.kernel_id, "offload", action.target)
        elif action.kind is ActionKind.COMMIT:
            st.phase = Phase.COMMITTED
            self._trace(round_no, action.kernel_id, "commit", st.target)
        elif action.kind is ActionKind.REVERT:
            probe_target = st.target
            try:
                self.registry.rebind(action.kernel_id, LOCAL_TARGET)
            except TargetError:
                pass  # local impl always exists; defensive
            self.profiler.begin_episode(action.kernel_id, LOCAL_TARGET)
            self.ctx.begin_episode(name, LOCAL_TARGET)
            st.phase = Phase.COOLDOWN
            st.target = None
            st.cooldown_until_round = round_no + cfg.cooldown_rounds
            self._trace(round_no, action.kernel_id, "revert", probe_target)

    def run_round(self, round_no: int) -> list[Action]:
        actions = self.evaluate(round_no)
        for action in actions:
            self.apply(action, round_no)
        return actions

    def on_remote_failure(self, kernel_id: int, target: str) -> None:
        """A remote call failed mid-flight; the registry already reverted the binding."""
        st = self.state(kernel_id)
        if st.phase in (Phase.PROBING, Phase.COMMITTED) and st.target == target:
            probe_target = st.target
            st.phase = Phase.COOLDOWN
            st.target = None
            st.cooldown_until_round = self._last_round + self.config.cooldown_rounds
            self.profiler.begin_episode(kernel_id, LOCAL_TARGET)
            self._trace(self._last_round, kernel_id, "revert", probe_target)

    def _trace(self, round_no: int, kernel_id: int, action: str, target: str | None) -> None:
        name = self.registry.descriptor(kernel_id).name
        if target is not None:
            local, remote, ratio = self._measured(kernel_id, target)
        else:
            local, remote, ratio = None, None, None
        event = TraceEvent(round_no, name, action, local, remote, ratio)
        self.trace.append(event)
        if self._on_action is not None:
            self._on_action(event)
