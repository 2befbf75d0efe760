"""End-to-end benchmark runs on the simulated target."""

import json

import numpy as np
import pytest

from vpe.errors import ConfigError
from vpe.pgm import read_pgm, write_pgm
from vpe.policy import PolicyConfig, trace_csv
from vpe.runner import (
    EDGE_KERNEL,
    RunConfig,
    generate_inputs,
    run_benchmark,
    run_demo_frames,
    run_sweep,
)


def table1_config(profiles_dir, kernel, **overrides):
    defaults = dict(
        kernels=(kernel,),
        size=8 if kernel in ("matmul", "convolution", "fft") else 16,
        iters=200,
        mode="auto",
        target="sim",
        profile_path=str(profiles_dir / "table1.json"),
        seed=1,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(iters=0)
    with pytest.raises(ConfigError):
        RunConfig(mode="sometimes")
    with pytest.raises(ConfigError):
        RunConfig(kernels=("nope",))
    with pytest.raises(ConfigError):
        RunConfig(target="sim", profile_path=None)
    with pytest.raises(ConfigError):
        RunConfig(target="worker", endpoint=None, profile_path="x")


def test_generate_inputs_deterministic_and_well_formed():
    a = generate_inputs("dot", 100, np.random.default_rng(3))
    b = generate_inputs("dot", 100, np.random.default_rng(3))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    (seq,) = generate_inputs("complement", 500, np.random.default_rng(3))
    assert not seq.translate(None, b"ACGT")
    with pytest.raises(ConfigError):
        generate_inputs("fft", 100, np.random.default_rng(3))  # not a power of two


def test_local_only_run_reports_result(profiles_dir):
    args = (np.array([1, 2, 3], dtype=np.int32), np.array([4, 5, 6], dtype=np.int32))
    cfg = table1_config(profiles_dir, "dot", mode="local-only", iters=1, fixed_inputs=args)
    report = run_benchmark(cfg)
    assert report.results["dot"] == "32"
    assert report.final_bindings["dot"] == "local"
    assert report.trace == []
    assert report.speedups["dot"] is None
    assert [row.target for row in report.rows] == ["local"]


def test_matmul_run_offloads_and_commits(profiles_dir):
    report = run_benchmark(table1_config(profiles_dir, "matmul"))
    assert [ev.action for ev in report.trace] == ["offload", "commit"]
    assert report.final_bindings["matmul"] == "sim"
    assert report.speedups["matmul"] == pytest.approx(31.9, rel=0.05)


def test_fft_run_offloads_then_reverts(profiles_dir):
    report = run_benchmark(table1_config(profiles_dir, "fft", size=16, iters=400))
    assert [ev.action for ev in report.trace] == ["offload", "revert"]
    assert report.final_bindings["fft"] == "local"


def test_matmul_no_flapping_over_10k_iterations(profiles_dir):
    cfg = table1_config(profiles_dir, "matmul", size=4, iters=10_000)
    report = run_benchmark(cfg)
    # a single offload, then committed for good: one rebind total
    assert [ev.action for ev in report.trace] == ["offload", "commit"]
    assert report.final_bindings["matmul"] == "sim"


def test_fft_no_flapping_over_10k_iterations(profiles_dir):
    cfg = table1_config(profiles_dir, "fft", size=4, iters=10_000)
    report = run_benchmark(cfg)
    # one offload, one revert, then the probe memory keeps it local
    assert [ev.action for ev in report.trace] == ["offload", "revert"]
    assert report.final_bindings["fft"] == "local"


def test_identical_seeds_identical_bytes(profiles_dir):
    reports = [run_benchmark(table1_config(profiles_dir, "dot")) for _ in range(2)]
    assert trace_csv(reports[0].trace) == trace_csv(reports[1].trace)
    assert reports[0].to_json() == reports[1].to_json()


def test_different_seed_changes_timings(profiles_dir):
    a = run_benchmark(table1_config(profiles_dir, "dot", seed=1))
    b = run_benchmark(table1_config(profiles_dir, "dot", seed=2))
    assert a.to_json() != b.to_json()


def test_speedup_equals_row_ratio_exactly(profiles_dir):
    report = run_benchmark(table1_config(profiles_dir, "matmul"))
    data = json.loads(report.to_json())
    rows = {(r["kernel"], r["target"]): r for r in data["rows"]}
    local = rows[("matmul", "local")]["mean_ms"]
    remote = rows[("matmul", "sim")]["mean_ms"]
    assert data["speedups"]["matmul"] == local / remote


def test_force_remote_mode(profiles_dir):
    report = run_benchmark(table1_config(profiles_dir, "dot", mode="force-remote", iters=20))
    assert {row.target for row in report.rows} == {"sim"}
    assert report.final_bindings["dot"] == "sim"
    assert report.trace == []


def test_durations_virtual_and_plausible(profiles_dir):
    report = run_benchmark(table1_config(profiles_dir, "dot", mode="local-only", iters=10))
    for sample in report.iterations:
        assert 500.0 < sample.duration_ns / 1e6 < 1100.0  # 783.8 +/- noise


# ---------------------------------------------------------------- sweep


def test_sweep_crossover(profiles_dir):
    config = RunConfig(
        kernels=("matmul",),
        iters=60,
        mode="auto",
        target="sim",
        profile_path=str(profiles_dir / "matmul_fit.json"),
        seed=1,
    )
    report = run_sweep(config, [25, 50, 75, 100, 150, 200])
    by_size = {row.size: row for row in report.rows}
    for size in (25, 50):
        assert by_size[size].final_target == "local"
        assert not by_size[size].remote_worth
    for size in (100, 150, 200):
        assert by_size[size].final_target == "sim"
        assert by_size[size].remote_worth
    assert 60 <= report.crossover_estimate <= 90
    # below the crossover the setup dominates the remote cost
    small = by_size[25]
    assert small.remote_setup_ms > small.remote_compute_ms
    assert small.remote_setup_ms == pytest.approx(100.0)


def test_sweep_single_size_below_crossover(profiles_dir):
    config = RunConfig(
        kernels=("matmul",),
        iters=60,
        mode="auto",
        target="sim",
        profile_path=str(profiles_dir / "matmul_fit.json"),
        seed=1,
    )
    report = run_sweep(config, [25])
    (row,) = report.rows
    assert not row.remote_worth
    assert row.remote_setup_ms > row.remote_compute_ms
    assert report.crossover_estimate is None  # not bracketed by one point


# ---------------------------------------------------------------- demo


def synthesize_frames(directory, count=24, shape=(20, 26), seed=7):
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        frame = rng.integers(0, 256, shape, dtype=np.uint8)
        path = directory / f"frame_{i:04d}.pgm"
        write_pgm(path, frame)
        paths.append(path)
    return paths


def demo_config(profiles_dir, **overrides):
    defaults = dict(
        kernels=("convolution",),
        iters=1,
        mode="auto",
        target="sim",
        profile_path=str(profiles_dir / "table1.json"),
        seed=1,
        enable_after=10,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def test_demo_frames_ratio_and_pixels(profiles_dir, tmp_path):
    in_dir, out_dir = tmp_path / "in", tmp_path / "out"
    paths = synthesize_frames(in_dir, count=60)
    report = run_demo_frames(in_dir, out_dir, demo_config(profiles_dir))
    assert report.transition_frame is not None
    assert report.ratio == pytest.approx(432.2 / 111.5, rel=0.1)
    assert {f.target for f in report.frames[: report.transition_frame]} == {"local"}
    assert report.frames[-1].target == "sim"
    # pixel-exact against the oracle convolution + clamp
    for path in paths:
        frame = read_pgm(path).astype(np.int64)
        oh, ow = frame.shape[0] - 2, frame.shape[1] - 2
        want = np.zeros((oh, ow), dtype=np.int64)
        for i in range(3):
            for j in range(3):
                want += int(EDGE_KERNEL[i, j]) * frame[i : i + oh, j : j + ow]
        want = np.clip(want, 0, 255).astype(np.uint8)
        got = read_pgm(out_dir / path.name)
        assert np.array_equal(got, want)


def test_demo_uniform_gray_turns_black(profiles_dir, tmp_path):
    in_dir, out_dir = tmp_path / "in", tmp_path / "out"
    in_dir.mkdir()
    write_pgm(in_dir / "gray.pgm", np.full((10, 10), 137, dtype=np.uint8))
    report = run_demo_frames(in_dir, out_dir, demo_config(profiles_dir))
    assert np.all(read_pgm(out_dir / "gray.pgm") == 0)
    assert report.ratio is None  # never offloaded with a single frame


def test_demo_rejects_mismatched_frames(profiles_dir, tmp_path):
    from vpe.errors import PgmError

    in_dir, out_dir = tmp_path / "in", tmp_path / "out"
    in_dir.mkdir()
    write_pgm(in_dir / "a.pgm", np.zeros((8, 8), dtype=np.uint8))
    write_pgm(in_dir / "b.pgm", np.zeros((9, 8), dtype=np.uint8))
    with pytest.raises(PgmError):
        run_demo_frames(in_dir, out_dir, demo_config(profiles_dir))


def test_demo_requires_frames(profiles_dir, tmp_path):
    from vpe.errors import PgmError

    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(PgmError):
        run_demo_frames(empty, tmp_path / "out", demo_config(profiles_dir))
