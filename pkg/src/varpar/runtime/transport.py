"""Transports move request frames to workers and collect responses within a window."""

from __future__ import annotations

import errno
import logging
import selectors
import socket
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol

from ..exceptions import VPError
from . import frames

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Arrival:
    node: str
    at_ms: float
    frame: bytes


@dataclass
class ExchangeResult:
    arrivals: list[Arrival]
    end_ms: float
    expected: int


class Transport(Protocol):
    def exchange(self, request_frame: bytes, request_id: int, window_ms: float, local=None) -> ExchangeResult: ...


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise VPError(f"address {text!r} must look like host:port")
    return host.strip("[]") or "127.0.0.1", int(port)


@dataclass
class _Conn:
    name: str
    address: tuple[str, int]
    sock: socket.socket | None = None
    connected: bool = False
    outbox: bytes = b""
    inbox: bytearray = field(default_factory=bytearray)

    def close(self):
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
        self.sock = None
        self.connected = False
        self.outbox = b""
        self.inbox.clear()


class TcpTransport:
    """Scatter-gather over persistent TCP connections, never blocking past the window.

    Connections are opened lazily and non-blockingly; a connection that
    fails or is left with a half-sent request is closed and reopened on the
    next request. Responses tagged with an older request id are discarded.
    """

    def __init__(self, addresses: Mapping[str, tuple[str, int]]):
        self._conns = {name: _Conn(name, tuple(addr)) for name, addr in addresses.items()}
        self._pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix="vp-master-local")

    def close(self):
        for conn in self._conns.values():
            conn.close()
        self._pool.shutdown(wait=False)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _open(self, conn: _Conn) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setblocking(False)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        rc = sock.connect_ex(conn.address)
        if rc not in (0, errno.EINPROGRESS, errno.EWOULDBLOCK):
            sock.close()
            raise OSError(rc, f"connect to {conn.address} failed")
        conn.sock = sock
        conn.connected = rc == 0

    def exchange(self, request_frame: bytes, request_id: int, window_ms: float, local=None) -> ExchangeResult:
        t0 = time.monotonic()
        deadline = t0 + window_ms / 1000.0
        local_future = self._pool.submit(local.handle, request_frame) if local is not None else None
        sel = selectors.DefaultSelector()
        waiting: set[str] = set()
        arrivals: list[Arrival] = []
        try:
            for conn in self._conns.values():
                try:
                    if conn.sock is None:
                        self._open(conn)
                except OSError as exc:
                    log.debug("worker %s unreachable: %s", conn.name, exc)
                    conn.close()
                    continue
                conn.outbox = request_frame
                sel.register(conn.sock, selectors.EVENT_READ | selectors.EVENT_WRITE, conn)
                waiting.add(conn.name)

            while waiting:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                for key, events in sel.select(timeout=remaining):
                    conn: _Conn = key.data
                    try:
                        if events & selectors.EVENT_WRITE:
                            self._on_writable(conn, sel)
                        if events & selectors.EVENT_READ and conn.sock is not None:
                            frame = self._on_readable(conn, request_id)
                            if frame is not None:
                                arrivals.append(Arrival(conn.name, (time.monotonic() - t0) * 1000.0, frame))
                                waiting.discard(conn.name)
                                sel.unregister(conn.sock)
                    except OSError as exc:
                        log.debug("worker %s failed: %s", conn.name, exc)
                        if conn.sock is not None:
                            sel.unregister(conn.sock)
                        conn.close()
                        waiting.discard(conn.name)
        finally:
            sel.close()
        for name in waiting:
            if self._conns[name].outbox:
                self._conns[name].close()

        expected = len(self._conns)
        if local_future is not None:
            expected += 1
            try:
                frame = local_future.result(timeout=max(0.0, deadline - time.monotonic()))
                arrivals.append(Arrival("master", (time.monotonic() - t0) * 1000.0, frame))
            except Exception as exc:  # timeout or predictor failure both mean "no local result"
                log.debug("local variant missed the window: %r", exc)
        end_ms = (time.monotonic() - t0) * 1000.0
        return ExchangeResult(arrivals, end_ms, expected)

    def _on_writable(self, conn: _Conn, sel: selectors.BaseSelector) -> None:
        if not conn.connected:
            err = conn.sock.getsockopt(socket.SOL_SOCKET, socket.SO_ERROR)
            if err:
                raise OSError(err, "connect failed")
            conn.connected = True
        if conn.outbox:
            sent = conn.sock.send(conn.outbox)
            conn.outbox = conn.outbox[sent:]
        if not conn.outbox:
            sel.modify(conn.sock, selectors.EVENT_READ, conn)

    def _on_readable(self, conn: _Conn, request_id: int) -> bytes | None:
        chunk = conn.sock.recv(65536)
        if not chunk:
            raise OSError(errno.ECONNRESET, "connection closed by worker")
        conn.inbox += chunk
        while len(conn.inbox) >= frames.HEADER_SIZE:
            try:
                _, rid, length = frames.parse_header(bytes(conn.inbox[: frames.HEADER_SIZE]))
            except VPError as exc:
                raise OSError(errno.EPROTO, str(exc)) from None
            total = frames.HEADER_SIZE + length
            if len(conn.inbox) < total:
                return None
            frame = bytes(conn.inbox[:total])
            del conn.inbox[:total]
            if rid == request_id:
                return frame
            log.debug("discarding stale response %d from %s", rid, conn.name)
        return None
