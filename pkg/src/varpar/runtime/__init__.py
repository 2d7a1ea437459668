"""Master/worker orchestration over a simulated or a TCP transport."""

from .frames import Frame, MsgType, decode_frame, decode_sample, encode_frame, encode_sample
from .master import (
    InferenceRequest,
    MasterOutcome,
    SessionConfig,
    TimingReport,
    run_master,
    window_for_deadline,
)
from .simnet import (
    DROPPED,
    FaultPlan,
    SimNetConfig,
    SimTransport,
    WorkerFault,
    service_time_ms,
    simulate_delivery,
)
from .transport import Arrival, ExchangeResult, TcpTransport, parse_address
from .worker import Worker, WorkerAssignment, WorkerServer, run_worker

__all__ = [
    "Arrival",
    "DROPPED",
    "ExchangeResult",
    "FaultPlan",
    "Frame",
    "InferenceRequest",
    "MasterOutcome",
    "MsgType",
    "SessionConfig",
    "SimNetConfig",
    "SimTransport",
    "TcpTransport",
    "TimingReport",
    "Worker",
    "WorkerAssignment",
    "WorkerFault",
    "WorkerServer",
    "decode_frame",
    "decode_sample",
    "encode_frame",
    "encode_sample",
    "parse_address",
    "run_master",
    "run_worker",
    "service_time_ms",
    "simulate_delivery",
    "window_for_deadline",
]
