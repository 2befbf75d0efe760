"""Cost models, the simulated backend's charging rules, and the affine fit."""

import numpy as np
import pytest

from vpe.errors import CostModelError
from vpe.kernels import BENCH_FUNCTIONS, BENCH_SIGNATURES
from vpe.registry import KernelRegistry
from vpe.targets import (
    CostEntry,
    CostModel,
    FitAnchors,
    RuntimeContext,
    SimulatedTarget,
    VirtualClock,
    fit_cost_model,
    load_cost_model,
    work_units,
)


def make_sim(entry, seed=0, leg="remote"):
    model = CostModel({"dot": entry})
    clock = VirtualClock()
    target = SimulatedTarget("sim", model, clock, np.random.default_rng(seed), leg=leg)
    return model, clock, target


def dot_desc(registry=None):
    registry = registry or KernelRegistry()
    kinds, ret = BENCH_SIGNATURES["dot"]
    kid = registry.register("dot", kinds, ret, {"local": BENCH_FUNCTIONS["dot"], "sim": BENCH_FUNCTIONS["dot"]})
    return registry.descriptor(kid)


DOT_ARGS = (np.array([1, 2, 3], dtype=np.int32), np.array([4, 5, 6], dtype=np.int32))


def test_cost_entry_validation():
    with pytest.raises(CostModelError):
        CostEntry(-1.0, 0.0, 0.0, "const")
    with pytest.raises(CostModelError):
        CostEntry(0.0, 0.0, 0.0, "n4")
    with pytest.raises(CostModelError):
        CostEntry(0.0, 0.0, 0.0, "const", noise_stddev_ms=-1.0)
    with pytest.raises(CostModelError):
        CostEntry(0.0, 0.0, 0.0, "const", setup_mode="sometimes")


def test_work_units_formulas():
    a = np.zeros((4, 5), dtype=np.int32)
    b = np.zeros((5, 6), dtype=np.int32)
    image = np.zeros((32, 16), dtype=np.int32)
    kern = np.zeros((3, 3), dtype=np.int32)
    assert work_units("const", ()) == 1.0
    assert work_units("n", (np.zeros(7, dtype=np.int32),)) == 7.0
    assert work_units("n3", (a, b)) == 4 * 5 * 6
    assert work_units("hwk2", (image, kern)) == 32 * 16 * 9
    assert work_units("nlogn", (np.zeros(16, dtype=np.int16),)) == 8 * 3.0
    assert work_units("nlogn", (np.zeros(2, dtype=np.int16),)) == 0.0


def test_degenerate_model_charges_exactly_the_rate():
    entry = CostEntry(setup_ms=0.0, local_per_unit_ms=0.0, remote_per_unit_ms=100.0, units="const")
    _, clock, target = make_sim(entry)
    desc = dot_desc()
    result = target.execute(desc, DOT_ARGS)
    assert result == 32  # correctness is real
    assert clock.now_ns() == 100 * 10**6


def test_setup_charged_once_per_episode():
    entry = CostEntry(setup_ms=40.0, local_per_unit_ms=0.0, remote_per_unit_ms=10.0, units="const")
    _, clock, target = make_sim(entry)
    desc = dot_desc()
    target.execute(desc, DOT_ARGS)
    assert clock.now_ns() == 50 * 10**6
    target.execute(desc, DOT_ARGS)
    assert clock.now_ns() == 60 * 10**6  # no second setup
    target.begin_episode("dot")
    target.execute(desc, DOT_ARGS)
    assert clock.now_ns() == 110 * 10**6  # fresh episode pays setup again


def test_setup_per_call_mode():
    entry = CostEntry(40.0, 0.0, 10.0, "const", setup_mode="per-call")
    _, clock, target = make_sim(entry)
    desc = dot_desc()
    target.execute(desc, DOT_ARGS)
    target.execute(desc, DOT_ARGS)
    assert clock.now_ns() == 100 * 10**6


def test_local_leg_charges_local_rate_without_setup():
    entry = CostEntry(setup_ms=40.0, local_per_unit_ms=7.0, remote_per_unit_ms=1.0, units="const")
    _, clock, target = make_sim(entry, leg="local")
    desc = dot_desc()
    target.execute(desc, DOT_ARGS)
    assert clock.now_ns() == 7 * 10**6


def test_noise_is_seeded_and_clock_deterministic():
    entry = CostEntry(setup_ms=0.0, local_per_unit_ms=0.0, remote_per_unit_ms=515.9, units="const", noise_stddev_ms=35.0)
    desc = dot_desc()
    trajectories = []
    for _ in range(2):
        _, clock, target = make_sim(entry, seed=42)
        trajectory = []
        for _ in range(50):
            target.execute(desc, DOT_ARGS)
            trajectory.append(clock.now_ns())
        trajectories.append(trajectory)
    assert trajectories[0] == trajectories[1]
    durations = np.diff([0] + trajectories[0]) / 1e6
    assert abs(np.mean(durations) - 515.9) < 20.0  # noise averages out
    assert all(d >= 0 for d in durations)


def test_missing_model_entry_errors():
    entry = CostEntry(0.0, 0.0, 1.0, "const")
    model = CostModel({"other": entry})
    with pytest.raises(CostModelError):
        model.entry("dot")


def test_virtual_clock_never_decreases():
    clock = VirtualClock()
    with pytest.raises(ValueError):
        clock.charge_ns(-1)
    clock.charge_ms(1.5)
    assert clock.now_ns() == 1_500_000


def test_load_table1_profile(profiles_dir):
    model = load_cost_model(profiles_dir / "table1.json")
    assert set(model.entries) == {"complement", "convolution", "dot", "matmul", "fft", "pattern"}
    matmul = model.entry("matmul")
    assert matmul.local_per_unit_ms == 16482.0
    assert matmul.remote_per_unit_ms == 515.9
    assert matmul.noise_stddev_ms == 35.0
    assert matmul.units == "const"
    assert matmul.setup_mode == "per-episode"


def test_load_profile_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dot": {"setup_ms": 1.0}}')
    with pytest.raises(CostModelError):
        load_cost_model(bad)
    bad.write_text("[]")
    with pytest.raises(CostModelError):
        load_cost_model(bad)


# ---------------------------------------------------------------- fit_cost_model

ANCHORS = FitAnchors(crossover_size=75, setup_ms=100.0, local_time_ms=16482.0, speedup=31.9)


def test_fit_reproduces_derived_constants():
    fit = fit_cost_model(ANCHORS)
    assert fit.local_per_unit_ms / fit.remote_per_unit_ms == pytest.approx(39.556, rel=1e-3)
    assert fit.local_per_unit_ms == pytest.approx(2.43e-4, rel=5e-3)
    assert fit.calibration_size == pytest.approx(408, abs=1.0)


def test_fit_plugs_back_into_its_anchors():
    fit = fit_cost_model(ANCHORS)
    assert fit.local_ms(75) == pytest.approx(fit.remote_ms(75), rel=1e-6)
    assert fit.local_ms(fit.calibration_size) == pytest.approx(ANCHORS.local_time_ms, rel=0.005)
    at_cal = fit.local_ms(fit.calibration_size) / fit.remote_ms(fit.calibration_size)
    assert at_cal == pytest.approx(ANCHORS.speedup, rel=0.005)
    assert fit.setup_ms == pytest.approx(ANCHORS.setup_ms, rel=0.005)


def test_fit_rejects_speedup_of_one():
    with pytest.raises(CostModelError):
        fit_cost_model(FitAnchors(75, 100.0, 16482.0, 1.0))


def test_fit_rejects_negative_remote_rate():
    # speedup so large the setup alone exceeds the implied remote budget
    with pytest.raises(CostModelError):
        fit_cost_model(FitAnchors(75, 100.0, 500.0, 31.9))


def test_fitted_entry_matches_shipped_profile(profiles_dir):
    fit = fit_cost_model(ANCHORS)
    shipped = load_cost_model(profiles_dir / "matmul_fit.json").entry("matmul")
    assert shipped.local_per_unit_ms == pytest.approx(fit.local_per_unit_ms, rel=1e-9)
    assert shipped.remote_per_unit_ms == pytest.approx(fit.remote_per_unit_ms, rel=1e-9)
    assert shipped.setup_ms == fit.setup_ms
    assert shipped.setup_mode == "per-call"
    assert shipped.units == "n3"
