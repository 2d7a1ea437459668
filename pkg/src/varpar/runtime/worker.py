"""Worker side: predict, compress, encode, respond."""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass

from ..codec import HEADER_SIZE as CODEC_HEADER_SIZE
from ..codec import compress_topk, encode, h
from ..exceptions import VPError
from ..predictors import PredictionVector, Predictor
from ..variants import VariantSpec
from . import frames
from .frames import Frame, MsgType

log = logging.getLogger(__name__)


@dataclass
class WorkerAssignment:
    spec: VariantSpec
    predictor: Predictor | None = None
    k: int = 2

    def __post_init__(self):
        if self.predictor is not None and self.predictor.num_classes != self.spec.num_classes_C:
            raise VPError(
                f"predictor serves {self.predictor.num_classes} classes but "
                f"{self.spec.name} has {self.spec.num_classes_C}"
            )

    @property
    def variant_id(self) -> int:
        return self.spec.index_i

    @property
    def response_size(self) -> int:
        """Size in bytes of a full response frame."""
        return frames.HEADER_SIZE + CODEC_HEADER_SIZE + h(self.k, self.spec.num_classes_C)


class Worker:
    """Stateless request handler shared by the TCP server and the simulator."""

    def __init__(self, assignment: WorkerAssignment):
        self.assignment = assignment

    def respond(self, request_id: int, input_blob: bytes) -> bytes:
        if self.assignment.predictor is None:
            raise VPError(f"{self.assignment.spec.name} has no local predictor")
        sample = frames.decode_sample(input_blob)
        vec = self.assignment.predictor.predict(sample)
        vec = PredictionVector(self.assignment.variant_id, vec.scores)
        payload = encode(compress_topk(vec, self.assignment.k))
        return frames.encode_frame(Frame(MsgType.RESPONSE, request_id, payload))

    def handle(self, data: bytes) -> bytes:
        """Answer one request frame; protocol or predictor failures become error frames."""
        request_id = 0
        try:
            frame = frames.decode_frame(data)
            request_id = frame.request_id
            if frame.msg_type is not MsgType.REQUEST:
                return frames.error_frame(request_id, f"expected a request, got {frame.msg_type.name}")
            return self.respond(request_id, frame.payload)
        except Exception as exc:  # a crashing predictor must not take the connection down
            return frames.error_frame(request_id, f"{type(exc).__name__}: {exc}")


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: WorkerServer = self.server  # type: ignore[assignment]
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while not server.stopping.is_set():
            try:
                header = _recv_exact(sock, frames.HEADER_SIZE)
                if header is None:
                    return
                try:
                    frames.parse_header(header)
                except VPError as exc:
                    # the length field is still usable to resynchronise unless it is absurd
                    _, _, _, request_id, payload_len = struct.unpack("<2sBBQI", header)
                    if payload_len > frames.MAX_PAYLOAD:
                        return
                    if payload_len and _recv_exact(sock, payload_len) is None:
                        return
                    sock.sendall(frames.error_frame(request_id, f"{type(exc).__name__}: {exc}"))
                    continue
                payload_len = struct.unpack_from("<I", header, 12)[0]
                payload = _recv_exact(sock, payload_len) if payload_len else b""
                if payload is None:
                    return
                if server.delay_ms:
                    time.sleep(server.delay_ms / 1000.0)
                sock.sendall(server.worker.handle(header + payload))
            except OSError:
                return


class WorkerServer(socketserver.ThreadingTCPServer):
    """TCP worker: one thread per master connection, one in-flight request each."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], assignment: WorkerAssignment, delay_ms: float = 0.0):
        self.worker = Worker(assignment)
        self.delay_ms = delay_ms
        self.stopping = threading.Event()
        super().__init__(address, _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        thread.start()
        return thread

    def stop(self) -> None:
        self.stopping.set()
        self.shutdown()
        self.server_close()


def run_worker(assignment: WorkerAssignment, listen: tuple[str, int], delay_ms: float = 0.0) -> None:
    """Serve requests on ``listen`` until interrupted."""
    with WorkerServer(listen, assignment, delay_ms) as server:
        log.info("worker %s listening on %s:%d", assignment.spec.name, *server.address)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
