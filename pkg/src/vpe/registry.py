"""Kernel registry and dispatch indirection.

Every invocation flows through :meth:`KernelRegistry.invoke`, which reads the
kernel's current binding once at entry and executes on that target. Bindings
are immutable records swapped atomically under a lock, so a concurrent rebind
is observed either entirely or not at all, never torn. Only registered kernels
are ever profiled; anything else the process does is invisible to the runtime.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from .errors import ArgumentError, RegistrationError, RemoteCallError, TargetError, TransportError, UnknownKernelError
from .targets import LOCAL_TARGET, RuntimeContext
from .values import ValueKind, check_args

ImplHandle = Callable[..., Any] | int  # callable locally, wire id on a worker


@dataclass(frozen=True)
class KernelDescriptor:
    kernel_id: int
    name: str
    param_kinds: tuple[ValueKind, ...]
    return_kind: ValueKind
    impls: Mapping[str, ImplHandle]  # target id -> implementation handle


@dataclass(frozen=True)
class Binding:
    """Published kernel->target mapping. version increases by one per rebind."""

    kernel_id: int
    target: str
    version: int


@dataclass(frozen=True)
class InvocationRecord:
    kernel_id: int
    target: str
    duration_ns: int
    seq: int
    binding_version: int


class KernelRegistry:
    """Holds registered kernels and their atomically swappable bindings."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._kernels: dict[int, KernelDescriptor] = {}
        self._by_name: dict[str, int] = {}
        self._bindings: dict[int, Binding] = {}
        self._next_id = 1
        self._next_seq = 0

    def register(
        self,
        name: str,
        param_kinds: Sequence[ValueKind],
        return_kind: ValueKind,
        impls: Mapping[str, ImplHandle],
    ) -> int:
        """Register a kernel and bind it to the local target (version 0)."""
        if not name:
            raise RegistrationError("kernel name must be non-empty")
        if LOCAL_TARGET not in impls:
            raise RegistrationError(f"kernel {name!r} must supply a local implementation")
        for target, handle in impls.items():
            if target == LOCAL_TARGET and not callable(handle):
                raise RegistrationError(f"local implementation of {name!r} must be callable")
            if not callable(handle) and not isinstance(handle, int):
                raise RegistrationError(f"implementation for target {target!r} must be callable or a wire id")
        with self._lock:
            if name in self._by_name:
                raise RegistrationError(f"kernel name {name!r} already registered")
            kernel_id = self._next_id
            self._next_id += 1
            desc = KernelDescriptor(kernel_id, name, tuple(param_kinds), return_kind, dict(impls))
            self._kernels[kernel_id] = desc
            self._by_name[name] = kernel_id
            self._bindings[kernel_id] = Binding(kernel_id, LOCAL_TARGET, 0)
        return kernel_id

    def descriptor(self, kernel_id: int) -> KernelDescriptor:
        try:
            return self._kernels[kernel_id]
        except KeyError:
            raise UnknownKernelError(f"no kernel with id {kernel_id}") from None

    def lookup(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownKernelError(f"no kernel named {name!r}") from None

    def kernel_ids(self) -> list[int]:
        with self._lock:
            return sorted(self._kernels)

    def current_binding(self, kernel_id: int) -> Binding:
        self.descriptor(kernel_id)
        return self._bindings[kernel_id]

    def rebind(self, kernel_id: int, target: str) -> Binding:
        """Atomically point a kernel at another target; in-flight calls finish on the old one."""
        desc = self.descriptor(kernel_id)
        if target not in desc.impls:
            raise TargetError(f"kernel {desc.name!r} has no implementation for target {target!r}")
        with self._lock:
            old = self._bindings[kernel_id]
            new = Binding(kernel_id, target, old.version + 1)
            self._bindings[kernel_id] = new
        return new

    def invoke(self, kernel_id: int, args: Sequence[Any], ctx: RuntimeContext) -> tuple[Any, InvocationRecord]:
        """Run a kernel on whatever target its binding names at entry.

        The duration covers the whole dispatch (lookup, transfer, execution)
        on the context's clock -- real nanoseconds or virtual ones. One record
        is emitted to the context's profiler. A remote failure is surfaced to
        the caller, the binding auto-reverts to local for subsequent calls,
        and the context's failure listener is notified.
        """
        t0 = ctx.clock.now_ns()
        desc = self.descriptor(kernel_id)
        binding = self._bindings[kernel_id]
        check_args(args, desc.param_kinds)
        target = ctx.target(binding.target)
        try:
            result = target.execute(desc, args)
        except (TransportError, RemoteCallError):
            with self._lock:
                current = self._bindings[kernel_id]
                if current.version == binding.version:
                    self._bindings[kernel_id] = Binding(kernel_id, LOCAL_TARGET, current.version + 1)
            if ctx.failure_listener is not None:
                ctx.failure_listener(kernel_id, binding.target)
            raise
        duration = ctx.clock.now_ns() - t0
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
        record = InvocationRecord(kernel_id, binding.target, duration, seq, binding.version)
        if ctx.profiler is not None:
            ctx.profiler.record_invocation(record, ctx.clock.kind)
        return result, record
