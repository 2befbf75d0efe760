"""Binary wire protocol: framing, value marshalling, and the worker client.

Request frame layout (all integers little-endian):

    magic      4 bytes  "VPE1"
    msg_type   1 byte   0x01 invoke | 0x02 ping | 0x03 shutdown
    kernel_id  u32
    payload_len u32
    payload    payload_len bytes

Response frame:

    status     1 byte   0 ok | 1 unknown kernel | 2 execution error | 3 malformed payload
    payload_len u32     (0 unless status 0)
    payload    payload_len bytes

A payload is a u32 value count followed by tagged values; tags are the
ValueKind codes. Vectors carry a u32 element count, matrices u32 rows and
cols; element bytes follow little-endian. Responses wrap the single result
value in the same encoding. Length fields are validated against the remaining
buffer before anything is allocated, and payloads are capped (1 MiB default).
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import (
    MarshalError,
    RemoteCallError,
    RemoteExecutionFailure,
    RemoteMalformedPayload,
    RemoteUnknownKernel,
    TransportError,
)
from .values import ValueKind, kind_of

MAGIC = b"VPE1"

MSG_INVOKE = 0x01
MSG_PING = 0x02
MSG_SHUTDOWN = 0x03

STATUS_OK = 0
STATUS_UNKNOWN_KERNEL = 1
STATUS_EXECUTION_ERROR = 2
STATUS_MALFORMED = 3

DEFAULT_MAX_PAYLOAD = 1 << 20  # 1 MiB

_HEADER = struct.Struct("<4sBII")
_RESPONSE_HEADER = struct.Struct("<BI")

_ELEM_DTYPES = {
    ValueKind.I32VEC: np.dtype("<i4"),
    ValueKind.I32MAT: np.dtype("<i4"),
    ValueKind.I64MAT: np.dtype("<i8"),
    ValueKind.Q15VEC: np.dtype("<i2"),
}


def _u32(value: int) -> bytes:
    return struct.pack("<I", value)


def marshal_value(value: Any) -> bytes:
    kind = kind_of(value)
    tag = struct.pack("<B", kind.value)
    if kind is ValueKind.I64:
        return tag + struct.pack("<q", int(value))
    if kind is ValueKind.BYTES:
        data = bytes(value)
        return tag + _u32(len(data)) + data
    dtype = _ELEM_DTYPES[kind]
    arr = np.ascontiguousarray(value, dtype=dtype)
    if kind in (ValueKind.I32MAT, ValueKind.I64MAT):
        rows, cols = arr.shape
        return tag + _u32(rows) + _u32(cols) + arr.tobytes()
    return tag + _u32(len(arr)) + arr.tobytes()


def marshal(values: Sequence[Any]) -> bytes:
    """Encode an argument list: u32 count, then each tagged value."""
    return _u32(len(values)) + b"".join(marshal_value(v) for v in values)


class _Cursor:
    """Bounded reader over a payload buffer."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or n > self.remaining():
            raise MarshalError(f"payload truncated: wanted {n} bytes, {self.remaining()} left")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _unmarshal_one(cur: _Cursor) -> Any:
    tag = cur.take(1)[0]
    try:
        kind = ValueKind(tag)
    except ValueError:
        raise MarshalError(f"unknown value tag {tag}") from None
    if kind is ValueKind.I64:
        return struct.unpack("<q", cur.take(8))[0]
    if kind is ValueKind.BYTES:
        return cur.take(cur.u32())
    dtype = _ELEM_DTYPES[kind]
    if kind in (ValueKind.I32MAT, ValueKind.I64MAT):
        rows, cols = cur.u32(), cur.u32()
        nbytes = rows * cols * dtype.itemsize
        if nbytes > cur.remaining():
            raise MarshalError(f"matrix body truncated: {rows}x{cols} needs {nbytes} bytes")
        arr = np.frombuffer(cur.take(nbytes), dtype=dtype).copy()
        return arr.reshape(rows, cols)
    count = cur.u32()
    if kind is ValueKind.Q15VEC and count % 2 != 0:
        raise MarshalError("interleaved complex vector length must be even")
    nbytes = count * dtype.itemsize
    if nbytes > cur.remaining():
        raise MarshalError(f"vector body truncated: {count} elements need {nbytes} bytes")
    return np.frombuffer(cur.take(nbytes), dtype=dtype).copy()


def unmarshal(payload: bytes) -> list[Any]:
    """Decode an argument list; exact inverse of marshal on valid input."""
    cur = _Cursor(payload)
    count = cur.u32()
    values = [_unmarshal_one(cur) for _ in range(count)]
    if cur.remaining():
        raise MarshalError(f"{cur.remaining()} trailing bytes after the last value")
    return values


@dataclass(frozen=True)
class Frame:
    msg_type: int
    kernel_id: int
    payload: bytes


def encode_frame(frame: Frame, max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    if len(frame.payload) > max_payload:
        raise MarshalError(f"payload of {len(frame.payload)} bytes exceeds the {max_payload} byte cap")
    return _HEADER.pack(MAGIC, frame.msg_type, frame.kernel_id, len(frame.payload)) + frame.payload


def decode_frame(data: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[Frame, bytes]:
    """Decode one frame from a buffer; returns the frame and unconsumed bytes."""
    if len(data) < _HEADER.size:
        raise MarshalError(f"frame header truncated: {len(data)} bytes")
    magic, msg_type, kernel_id, payload_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MarshalError(f"bad magic {magic!r}")
    if payload_len > max_payload:
        raise MarshalError(f"declared payload of {payload_len} bytes exceeds the {max_payload} byte cap")
    end = _HEADER.size + payload_len
    if len(data) < end:
        raise MarshalError(f"frame payload truncated: wanted {payload_len} bytes")
    return Frame(msg_type, kernel_id, data[_HEADER.size : end]), data[end:]


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(n - got)
        except OSError as exc:
            raise TransportError(f"recv failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Frame:
    header = _recv_exact(sock, _HEADER.size)
    magic, msg_type, kernel_id, payload_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise MarshalError(f"bad magic {magic!r}")
    if payload_len > max_payload:
        raise MarshalError(f"declared payload of {payload_len} bytes exceeds the {max_payload} byte cap")
    payload = _recv_exact(sock, payload_len) if payload_len else b""
    return Frame(msg_type, kernel_id, payload)


def write_response(sock: socket.socket, status: int, payload: bytes = b"") -> None:
    if status != STATUS_OK and payload:
        raise MarshalError("non-zero status responses carry no payload")
    try:
        sock.sendall(_RESPONSE_HEADER.pack(status, len(payload)) + payload)
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


def read_response(sock: socket.socket, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[int, bytes]:
    header = _recv_exact(sock, _RESPONSE_HEADER.size)
    status, payload_len = _RESPONSE_HEADER.unpack(header)
    if payload_len > max_payload:
        raise MarshalError(f"declared response of {payload_len} bytes exceeds the {max_payload} byte cap")
    payload = _recv_exact(sock, payload_len) if payload_len else b""
    return status, payload


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise TransportError(f"endpoint must look like host:port, got {endpoint!r}")
    try:
        return host, int(port)
    except ValueError:
        raise TransportError(f"invalid port in endpoint {endpoint!r}") from None


_STATUS_ERRORS = {
    STATUS_UNKNOWN_KERNEL: RemoteUnknownKernel,
    STATUS_EXECUTION_ERROR: RemoteExecutionFailure,
    STATUS_MALFORMED: RemoteMalformedPayload,
}


def _raise_for_status(status: int, kernel_id: int) -> None:
    exc = _STATUS_ERRORS.get(status)
    if exc is None:
        raise RemoteCallError(f"worker returned unknown status {status}")
    raise exc(f"worker status {status} for kernel id {kernel_id}")


class WorkerClient:
    """One connection to a worker; strict request/response, reconnects lazily."""

    def __init__(self, endpoint: str, max_payload: int = DEFAULT_MAX_PAYLOAD) -> None:
        self.endpoint = endpoint
        self.max_payload = max_payload
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            host, port = parse_endpoint(self.endpoint)
            try:
                self._sock = socket.create_connection((host, port), timeout=30.0)
            except OSError as exc:
                raise TransportError(f"cannot connect to worker at {self.endpoint}: {exc}") from exc
        return self._sock

    def _exchange(self, frame: Frame) -> tuple[int, bytes]:
        sock = self._connect()
        try:
            sock.sendall(encode_frame(frame, self.max_payload))
            return read_response(sock, self.max_payload)
        except (TransportError, OSError) as exc:
            self.close()
            if isinstance(exc, TransportError):
                raise
            raise TransportError(f"exchange with {self.endpoint} failed: {exc}") from exc

    def call(self, kernel_id: int, args: Sequence[Any]) -> Any:
        status, payload = self._exchange(Frame(MSG_INVOKE, kernel_id, marshal(args)))
        if status != STATUS_OK:
            _raise_for_status(status, kernel_id)
        values = unmarshal(payload)
        if len(values) != 1:
            raise MarshalError(f"expected one result value, got {len(values)}")
        return values[0]

    def ping(self) -> None:
        status, _ = self._exchange(Frame(MSG_PING, 0, b""))
        if status != STATUS_OK:
            _raise_for_status(status, 0)

    def shutdown(self) -> None:
        status, _ = self._exchange(Frame(MSG_SHUTDOWN, 0, b""))
        if status != STATUS_OK:
            _raise_for_status(status, 0)
        self.close()

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None


def client_call(endpoint: str, kernel_id: int, args: Sequence[Any], max_payload: int = DEFAULT_MAX_PAYLOAD) -> Any:
    """One-shot invoke over a fresh connection."""
    client = WorkerClient(endpoint, max_payload)
    try:
        return client.call(kernel_id, args)
    finally:
        client.close()
