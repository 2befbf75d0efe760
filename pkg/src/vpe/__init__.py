"""Adaptive kernel offloading runtime.

Registered compute kernels are invoked through a dispatch indirection whose
target binding can be swapped at run time. A profiler ranks kernels by
cumulative cost, and a blind-offload policy probes the hottest one on an
alternate target, committing or reverting on measured speedup.
"""

from .errors import VpeError
from .policy import PolicyConfig, PolicyEngine, speedup
from .profiler import Profiler, TimingSample
from .registry import Binding, InvocationRecord, KernelDescriptor, KernelRegistry
from .runner import RunConfig, run_benchmark, run_demo_frames, run_sweep
from .targets import (
    CostEntry,
    CostModel,
    FitAnchors,
    LocalTarget,
    RealClock,
    RuntimeContext,
    SimulatedTarget,
    VirtualClock,
    WorkerTarget,
    fit_cost_model,
    load_cost_model,
)
from .values import ValueKind

__version__ = "0.1.0"

__all__ = [
    "Binding",
    "CostEntry",
    "CostModel",
    "FitAnchors",
    "InvocationRecord",
    "KernelDescriptor",
    "KernelRegistry",
    "LocalTarget",
    "PolicyConfig",
    "PolicyEngine",
    "Profiler",
    "RealClock",
    "RunConfig",
    "RuntimeContext",
    "SimulatedTarget",
    "TimingSample",
    "ValueKind",
    "VirtualClock",
    "VpeError",
    "WorkerTarget",
    "fit_cost_model",
    "load_cost_model",
    "run_benchmark",
    "run_demo_frames",
    "run_sweep",
    "speedup",
    "__version__",
]
