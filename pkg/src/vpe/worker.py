"""Worker process serving kernel invocations over the wire protocol.

The worker plays the remote-execution role in a separate OS address space.
Implementations are pre-loaded into a kernel table keyed by wire id; no code
is shipped over the wire. One connection is served at a time, strictly
request/response. A shutdown frame is answered and then the worker exits
cleanly.
"""

from __future__ import annotations

import argparse
import socket
import sys
from typing import Any, Callable, Mapping

from .errors import MarshalError, TransportError
from .kernels import BENCH_FUNCTIONS, WIRE_KERNEL_IDS
from .wire import (
    DEFAULT_MAX_PAYLOAD,
    MAGIC,
    MSG_INVOKE,
    MSG_PING,
    MSG_SHUTDOWN,
    STATUS_EXECUTION_ERROR,
    STATUS_MALFORMED,
    STATUS_OK,
    STATUS_UNKNOWN_KERNEL,
    Frame,
    _HEADER,
    _recv_exact,
    marshal,
    parse_endpoint,
    unmarshal,
    write_response,
)

KernelTable = Mapping[int, Callable[..., Any]]


def default_kernel_table() -> dict[int, Callable[..., Any]]:
    """The six benchmark kernels under their fixed wire ids."""
    return {wire_id: BENCH_FUNCTIONS[name] for name, wire_id in WIRE_KERNEL_IDS.items()}


class _CloseConnection(Exception):
    pass


class _Shutdown(Exception):
    pass


def _read_request(conn: socket.socket, max_payload: int) -> Frame:
    header = _recv_exact(conn, _HEADER.size)
    magic, msg_type, kernel_id, payload_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise _CloseConnection  # cannot trust anything that follows
    if payload_len > max_payload:
        write_response(conn, STATUS_MALFORMED)
        raise _CloseConnection  # cannot resync past an oversize body
    payload = _recv_exact(conn, payload_len) if payload_len else b""
    return Frame(msg_type, kernel_id, payload)


def _handle(conn: socket.socket, frame: Frame, kernel_table: KernelTable, max_payload: int) -> None:
    if frame.msg_type == MSG_PING:
        write_response(conn, STATUS_OK)
        return
    if frame.msg_type == MSG_SHUTDOWN:
        write_response(conn, STATUS_OK)
        raise _Shutdown
    if frame.msg_type != MSG_INVOKE:
        write_response(conn, STATUS_MALFORMED)
        return
    impl = kernel_table.get(frame.kernel_id)
    if impl is None:
        write_response(conn, STATUS_UNKNOWN_KERNEL)
        return
    try:
        args = unmarshal(frame.payload)
    except MarshalError:
        write_response(conn, STATUS_MALFORMED)
        return
    try:
        result = impl(*args)
        payload = marshal([result])
        if len(payload) > max_payload:
            raise MarshalError("result exceeds payload cap")
    except Exception:
        write_response(conn, STATUS_EXECUTION_ERROR)
        return
    write_response(conn, STATUS_OK, payload)


def serve(
    listen_endpoint: str,
    kernel_table: KernelTable | None = None,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
    on_bound: Callable[[str], None] | None = None,
) -> None:
    """Serve invocations until a shutdown frame arrives.

    ``on_bound`` is called with the actual host:port once listening (useful
    with port 0).
    """
    table = kernel_table if kernel_table is not None else default_kernel_table()
    host, port = parse_endpoint(listen_endpoint)
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        bound = f"{server.getsockname()[0]}:{server.getsockname()[1]}"
        if on_bound is not None:
            on_bound(bound)
        while True:
            conn, _addr = server.accept()
            with conn:
                try:
                    while True:
                        frame = _read_request(conn, max_payload)
                        _handle(conn, frame, table, max_payload)
                except (_CloseConnection, TransportError):
                    continue
                except _Shutdown:
                    return


def spawn_worker(max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple["subprocess.Popen[str]", str]:
    """Start a worker subprocess on a free loopback port; returns (process, endpoint)."""
    import subprocess

    proc = subprocess.Popen(
        [sys.executable, "-m", "vpe.worker", "--listen", "127.0.0.1:0", "--max-payload", str(max_payload)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    assert proc.stdout is not None
    line = proc.stdout.readline().strip()
    if not line.startswith("listening on "):
        proc.kill()
        raise TransportError(f"worker failed to start: {line!r}")
    return proc, line.removeprefix("listening on ")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="vpe-worker", description="Serve kernel invocations to a vpe runtime.")
    parser.add_argument("--listen", required=True, metavar="ADDR:PORT", help="endpoint to listen on (port 0 picks one)")
    parser.add_argument("--max-payload", type=int, default=DEFAULT_MAX_PAYLOAD, help="frame payload cap in bytes")
    args = parser.parse_args(argv)

    def announce(bound: str) -> None:
        print(f"listening on {bound}", flush=True)

    try:
        serve(args.listen, max_payload=args.max_payload, on_bound=announce)
    except (OSError, TransportError) as exc:
        print(f"vpe-worker: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
