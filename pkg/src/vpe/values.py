"""Typed values that cross the dispatch boundary.

Every kernel argument and return value is one of a small set of kinds, so it
can be validated at invocation time and marshalled to a worker byte-for-byte.
Shapes (matrix rows/cols, vector lengths) live on the values themselves; the
kind is only the tag. Numeric values are numpy arrays with exact dtypes,
sequences are raw ``bytes`` and scalars are Python ints.
"""

from __future__ import annotations

import enum
from typing import Any, Sequence

import numpy as np

from .errors import ArgumentError

I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1


class ValueKind(enum.Enum):
    """Tag for a value crossing the dispatch boundary. Codes are the wire tags."""

    I64 = 1
    BYTES = 2
    I32VEC = 3
    I32MAT = 4
    I64MAT = 5
    Q15VEC = 6  # interleaved re/im int16 pairs, scale 2^-15


def kind_of(value: Any) -> ValueKind:
    """Classify a runtime value, raising ArgumentError if it fits no kind."""
    if isinstance(value, bool):
        raise ArgumentError("bool is not a supported value")
    if isinstance(value, (int, np.integer)):
        v = int(value)
        if not I64_MIN <= v <= I64_MAX:
            raise ArgumentError(f"integer {v} out of 64-bit range")
        return ValueKind.I64
    if isinstance(value, (bytes, bytearray)):
        return ValueKind.BYTES
    if isinstance(value, np.ndarray):
        if value.dtype == np.int32 and value.ndim == 1:
            return ValueKind.I32VEC
        if value.dtype == np.int32 and value.ndim == 2:
            return ValueKind.I32MAT
        if value.dtype == np.int64 and value.ndim == 2:
            return ValueKind.I64MAT
        if value.dtype == np.int16 and value.ndim == 1:
            if len(value) % 2 != 0:
                raise ArgumentError("interleaved complex vector must have even length")
            return ValueKind.Q15VEC
        raise ArgumentError(f"unsupported array value: dtype={value.dtype}, ndim={value.ndim}")
    raise ArgumentError(f"unsupported value type: {type(value).__name__}")


def check_args(args: Sequence[Any], param_kinds: Sequence[ValueKind]) -> None:
    """Validate an argument list against a kernel signature's kinds."""
    if len(args) != len(param_kinds):
        raise ArgumentError(f"expected {len(param_kinds)} arguments, got {len(args)}")
    for i, (arg, want) in enumerate(zip(args, param_kinds)):
        got = kind_of(arg)
        if got is not want:
            raise ArgumentError(f"argument {i}: expected {want.name}, got {got.name}")


def values_equal(a: Any, b: Any) -> bool:
    """Bit-exact equality for any two values of the same kind."""
    ka, kb = kind_of(a), kind_of(b)
    if ka is not kb:
        return False
    if ka is ValueKind.I64:
        return int(a) == int(b)
    if ka is ValueKind.BYTES:
        return bytes(a) == bytes(b)
    return a.shape == b.shape and bool(np.array_equal(a, b))
