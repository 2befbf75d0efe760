"""Exception hierarchy for the vpe runtime."""


class VpeError(Exception):
    """Base class for all errors raised by this package."""


class RegistrationError(VpeError):
    """Kernel registration rejected (duplicate name, bad signature, missing impl)."""


class UnknownKernelError(VpeError):
    """Kernel id or name not present in the registry."""


class ArgumentError(VpeError):
    """Invocation arguments do not satisfy the kernel's signature or preconditions."""


class TargetError(VpeError):
    """Target unavailable or lacks an implementation for the kernel."""


class ExecutionError(VpeError):
    """Kernel implementation failed while running."""


class CostModelError(VpeError):
    """Cost-model profile missing an entry, malformed, or infeasible to fit."""


class MarshalError(VpeError):
    """Wire payload is truncated, overlong, or otherwise undecodable."""


class TransportError(VpeError):
    """Socket-level failure talking to a worker (connect, read, write)."""


class RemoteCallError(VpeError):
    """Worker answered with a non-zero protocol status."""


class RemoteUnknownKernel(RemoteCallError):
    """Worker status 1: kernel id not loaded on the worker."""


class RemoteExecutionFailure(RemoteCallError):
    """Worker status 2: kernel raised while executing remotely."""


class RemoteMalformedPayload(RemoteCallError):
    """Worker status 3: request payload could not be decoded."""


class PgmError(VpeError):
    """PGM frame file unreadable or malformed."""


class ConfigError(VpeError):
    """Invalid run configuration."""
