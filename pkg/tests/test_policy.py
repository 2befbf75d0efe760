"""Decision engine: candidate selection, commit/revert rules, state transitions."""

import numpy as np
import pytest

from vpe.errors import ArgumentError
from vpe.policy import ActionKind, Phase, PolicyConfig, PolicyEngine, speedup, trace_csv, trace_json
from vpe.profiler import Profiler, TimingSample
from vpe.registry import KernelRegistry
from vpe.targets import LocalTarget, RealClock, RuntimeContext
from vpe.values import ValueKind

MS = 1_000_000

TABLE1_LOCAL_MS = {
    "complement": 818.4,
    "convolution": 432.2,
    "dot": 783.8,
    "matmul": 16482.0,
    "fft": 542.7,
    "pattern": 6081.7,
}


def test_speedup_values():
    assert speedup(16482.0, 515.9) == pytest.approx(31.95, abs=0.01)
    assert speedup(542.7, 720.9) == pytest.approx(0.753, abs=0.001)
    assert speedup(3.0, 3.0) == 1.0
    with pytest.raises(ArgumentError):
        speedup(0.0, 1.0)
    with pytest.raises(ArgumentError):
        speedup(1.0, -2.0)


def test_policy_config_validation():
    with pytest.raises(ArgumentError):
        PolicyConfig(min_samples=1)
    with pytest.raises(ArgumentError):
        PolicyConfig(improve_margin=1.0)
    with pytest.raises(ArgumentError):
        PolicyConfig(eval_period=0)
    with pytest.raises(ArgumentError):
        PolicyConfig(max_concurrent_probes=0)


def dummy(*args):
    return 0


class Harness:
    """Registry + profiler + engine with hand-fed samples, no execution."""

    def __init__(self, kernels, config=None, alt_targets=("sim",)):
        self.registry = KernelRegistry()
        self.profiler = Profiler(warmup=0)
        self.ctx = RuntimeContext(RealClock(), {"local": LocalTarget()}, self.profiler)
        for target in alt_targets:
            self.ctx.targets[target] = LocalTarget(target)
        self.ids = {}
        for name in kernels:
            impls = {"local": dummy, **{t: dummy for t in alt_targets}}
            self.ids[name] = self.registry.register(name, [ValueKind.I64], ValueKind.I64, impls)
        self.engine = PolicyEngine(self.registry, self.profiler, self.ctx, config or PolicyConfig())
        self._seq = 0

    def feed(self, name, target, mean_ms, count):
        for _ in range(count):
            self.profiler.record(TimingSample(self.ids[name], target, int(mean_ms * MS), self._seq))
            self._seq += 1

    def phase(self, name):
        return self.engine.state(self.ids[name]).phase


def test_select_candidate_prefers_largest_total():
    h = Harness(TABLE1_LOCAL_MS)
    for name, mean in TABLE1_LOCAL_MS.items():
        h.feed(name, "local", mean, 5)
    kid, target = h.engine.select_candidate()
    assert h.registry.descriptor(kid).name == "matmul"
    assert target == "sim"


def test_select_candidate_skips_cooldown_kernel():
    h = Harness(TABLE1_LOCAL_MS)
    for name, mean in TABLE1_LOCAL_MS.items():
        h.feed(name, "local", mean, 5)
    state = h.engine.state(h.ids["matmul"])
    state.phase = Phase.COOLDOWN
    state.cooldown_until_round = 99
    kid, _ = h.engine.select_candidate()
    assert h.registry.descriptor(kid).name == "pattern"  # next-largest total


def test_select_candidate_absent_below_min_samples():
    h = Harness(TABLE1_LOCAL_MS)
    for name, mean in TABLE1_LOCAL_MS.items():
        h.feed(name, "local", mean, 4)  # below min_samples=5
    assert h.engine.select_candidate() is None


def test_evaluate_emits_offload_then_commit_for_winner():
    h = Harness({"matmul": 0})
    h.feed("matmul", "local", 16482.0, 5)
    actions = h.engine.run_round(1)
    assert [a.kind for a in actions] == [ActionKind.OFFLOAD]
    assert h.phase("matmul") is Phase.PROBING
    assert h.registry.current_binding(h.ids["matmul"]).target == "sim"
    h.feed("matmul", "sim", 515.9, 5)
    actions = h.engine.run_round(2)
    assert [a.kind for a in actions] == [ActionKind.COMMIT]
    assert h.phase("matmul") is Phase.COMMITTED
    assert h.registry.current_binding(h.ids["matmul"]).target == "sim"  # binding untouched


def test_evaluate_reverts_regression_and_cooldown():
    h = Harness({"fft": 0})
    h.feed("fft", "local", 542.7, 5)
    h.engine.run_round(1)
    h.feed("fft", "sim", 720.9, 5)
    actions = h.engine.run_round(2)
    assert [a.kind for a in actions] == [ActionKind.REVERT]
    state = h.engine.state(h.ids["fft"])
    assert state.phase is Phase.COOLDOWN
    assert state.cooldown_until_round == 2 + 10  # default cooldown_rounds
    assert h.registry.current_binding(h.ids["fft"]).target == "local"


def test_margin_boundary_equal_means_reverts():
    h = Harness({"dot": 0})
    h.feed("dot", "local", 100.0, 5)
    h.engine.run_round(1)
    h.feed("dot", "sim", 100.0, 5)  # speedup exactly 1.0 < 1.05
    actions = h.engine.run_round(2)
    assert [a.kind for a in actions] == [ActionKind.REVERT]


def test_commit_requires_min_remote_samples():
    h = Harness({"dot": 0})
    h.feed("dot", "local", 100.0, 5)
    h.engine.run_round(1)
    h.feed("dot", "sim", 10.0, 4)  # one short of min_samples
    assert h.engine.run_round(2) == []
    assert h.phase("dot") is Phase.PROBING


def test_committed_kernel_reverts_on_later_regression():
    h = Harness({"dot": 0})
    h.feed("dot", "local", 100.0, 5)
    h.engine.run_round(1)
    h.feed("dot", "sim", 10.0, 5)
    h.engine.run_round(2)
    assert h.phase("dot") is Phase.COMMITTED
    # pile on slow remote samples until the cumulative mean crosses the margin
    h.feed("dot", "sim", 2000.0, 40)
    actions = h.engine.run_round(3)
    assert [a.kind for a in actions] == [ActionKind.REVERT]
    assert h.registry.current_binding(h.ids["dot"]).target == "local"


def test_cooldown_expires_then_probe_memory_blocks_retry():
    h = Harness({"fft": 0}, PolicyConfig(cooldown_rounds=2))
    h.feed("fft", "local", 542.7, 5)
    h.engine.run_round(1)
    h.feed("fft", "sim", 720.9, 5)
    h.engine.run_round(2)  # revert, cooldown until round 4
    assert h.engine.run_round(3) == []
    assert h.phase("fft") is Phase.COOLDOWN
    assert h.engine.run_round(4) == []  # expiry, but stats say not worth it
    assert h.phase("fft") is Phase.BASELINE
    assert h.engine.run_round(5) == []
    assert h.registry.current_binding(h.ids["fft"]).version == 2  # offload + revert only


def test_probe_serialization_single_slot():
    h = Harness({"a": 0, "b": 0})
    h.feed("a", "local", 500.0, 5)
    h.feed("b", "local", 400.0, 5)
    actions = h.engine.run_round(1)
    assert [a.kind for a in actions] == [ActionKind.OFFLOAD]
    probing = [st for st in h.engine.states.values() if st.phase is Phase.PROBING]
    assert len(probing) == 1
    # second kernel must wait until the first resolves
    assert h.engine.run_round(2) == []
    h.feed("a", "sim", 50.0, 5)
    actions = h.engine.run_round(3)
    kinds = sorted(a.kind.value for a in actions)
    assert kinds == ["commit", "offload"]  # a commits, freeing the slot for b


def test_remote_failure_counts_as_failed_probe():
    h = Harness({"dot": 0})
    h.feed("dot", "local", 100.0, 5)
    h.engine.run_round(1)
    assert h.phase("dot") is Phase.PROBING
    h.engine.on_remote_failure(h.ids["dot"], "sim")
    assert h.phase("dot") is Phase.COOLDOWN


def test_action_sequences_deterministic():
    def run_once():
        h = Harness(TABLE1_LOCAL_MS)
        log = []
        for name, mean in TABLE1_LOCAL_MS.items():
            h.feed(name, "local", mean, 5)
        for round_no in range(1, 8):
            log.extend((round_no, a.kind.value, a.kernel_id) for a in h.engine.run_round(round_no))
            for name in TABLE1_LOCAL_MS:
                state = h.engine.state(h.ids[name])
                if state.phase is Phase.PROBING:
                    h.feed(name, "sim", TABLE1_LOCAL_MS[name] / 3, 2)
        return log, trace_csv(h.engine.trace), trace_json(h.engine.trace)

    first, second = run_once(), run_once()
    assert first == second


def test_trace_csv_shape():
    h = Harness({"matmul": 0})
    h.feed("matmul", "local", 16482.0, 5)
    h.engine.run_round(1)
    h.feed("matmul", "sim", 515.9, 5)
    h.engine.run_round(2)
    text = trace_csv(h.engine.trace)
    lines = text.strip().split("\n")
    assert lines[0] == "round,kernel,action,local_mean_ms,remote_mean_ms,speedup"
    assert lines[1].startswith("1,matmul,offload,16482.000000,,")
    assert lines[2].startswith("2,matmul,commit,16482.000000,515.900000,31.9")
