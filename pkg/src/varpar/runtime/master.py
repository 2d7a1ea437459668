"""Master side: multicast a request, wait out the window, aggregate what arrived."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .. import codec
from ..ensemble import EnsembleResult, ScalingContext, aggregate
from ..exceptions import InvalidArgumentError, NoResultError, VPError
from ..variants import VariantSpec
from . import frames
from .frames import Frame, MsgType
from .transport import ExchangeResult, Transport
from .worker import Worker, WorkerAssignment

log = logging.getLogger(__name__)

DEFAULT_RESERVE_MS = 5.0


def window_for_deadline(deadline_ms: float, reserve_ms: float = DEFAULT_RESERVE_MS) -> float:
    """Collection window for an end-to-end deadline, keeping ``reserve_ms`` for aggregation."""
    return deadline_ms - reserve_ms


@dataclass(frozen=True)
class InferenceRequest:
    request_id: int
    input_blob: bytes
    deadline_window_ms: float

    def __post_init__(self):
        if not 0 <= self.request_id < 2**64:
            raise InvalidArgumentError("request_id must fit in u64")
        if self.deadline_window_ms <= 0:
            raise InvalidArgumentError("deadline_window_ms must be positive")


@dataclass
class SessionConfig:
    """Who runs what.

    ``workers`` maps a node name to its assignment; a remote worker's
    assignment may carry ``predictor=None`` since only its spec is needed
    for scaling. ``k`` overrides every assignment's ``k``.
    """

    workers: dict[str, WorkerAssignment]
    master: WorkerAssignment | None = None
    k: int = 2
    alpha: float = 1.0
    mask_untransmitted: bool = False

    def __post_init__(self):
        if not self.workers and self.master is None:
            raise InvalidArgumentError("a session needs at least one node")
        if "master" in self.workers:
            raise InvalidArgumentError("'master' is reserved for the master's own variant")
        for a in self.assignments.values():
            a.k = self.k
        ids = [a.variant_id for a in self.assignments.values()]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError(f"variant ids must be distinct across nodes, got {ids}")
        classes = {a.spec.num_classes_C for a in self.assignments.values()}
        if len(classes) != 1:
            raise InvalidArgumentError(f"all variants must share one class count, got {sorted(classes)}")

    @property
    def assignments(self) -> dict[str, WorkerAssignment]:
        nodes = dict(self.workers)
        if self.master is not None:
            nodes["master"] = self.master
        return nodes

    @property
    def num_classes(self) -> int:
        return next(iter(self.assignments.values())).spec.num_classes_C

    @property
    def specs(self) -> dict[str, VariantSpec]:
        return {name: a.spec for name, a in self.assignments.items()}

    def scaling_context(self) -> ScalingContext:
        return ScalingContext.from_variants(self.specs.values(), self.alpha)


@dataclass
class TimingReport:
    request_id: int
    window_ms: float
    end_ms: float
    wall_ms: float
    arrivals_ms: dict[str, float] = field(default_factory=dict)
    missed: tuple[str, ...] = ()
    errors: dict[str, str] = field(default_factory=dict)


@dataclass
class MasterOutcome:
    result: EnsembleResult
    timing: TimingReport


def _collect(session: SessionConfig, exchange: ExchangeResult, request_id: int):
    specs = session.specs
    preds, errors, arrivals = [], {}, {}
    for arrival in exchange.arrivals:
        try:
            if arrival.node not in specs:
                raise VPError("node is not part of this session")
            frame = frames.decode_frame(arrival.frame)
            if frame.request_id != request_id:
                raise VPError(f"response for request {frame.request_id}")
            if frame.msg_type is MsgType.ERROR:
                raise VPError(frame.payload.decode("utf-8", "replace"))
            if frame.msg_type is not MsgType.RESPONSE:
                raise VPError(f"unexpected {frame.msg_type.name} frame")
            pred = codec.decode(frame.payload)
            if pred.variant_id != specs[arrival.node].index_i:
                raise VPError(f"answered as variant {pred.variant_id}, configured {specs[arrival.node].index_i}")
        except VPError as exc:
            errors[arrival.node] = str(exc)
            log.debug("discarding response from %s: %s", arrival.node, exc)
            continue
        preds.append(pred)
        arrivals[arrival.node] = arrival.at_ms
    return preds, errors, arrivals


def run_master(session: SessionConfig, request: InferenceRequest, transport: Transport) -> MasterOutcome:
    """Dispatch ``request``, wait at most its window and aggregate the responders.

    Raises :class:`NoResultError` when nothing (including the master's own
    variant) arrived in time.
    """
    wall0 = time.monotonic()
    request_frame = frames.encode_frame(Frame(MsgType.REQUEST, request.request_id, request.input_blob))
    local = Worker(session.master) if session.master is not None else None
    exchange = transport.exchange(request_frame, request.request_id, request.deadline_window_ms, local)
    preds, errors, arrivals = _collect(session, exchange, request.request_id)

    specs = session.specs
    order = list(specs)
    missed = tuple(name for name in order if name not in arrivals)
    timing = TimingReport(
        request_id=request.request_id,
        window_ms=request.deadline_window_ms,
        end_ms=exchange.end_ms,
        wall_ms=(time.monotonic() - wall0) * 1000.0,
        arrivals_ms=arrivals,
        missed=missed,
        errors=errors,
    )
    if not preds:
        exc = NoResultError(f"no response within {request.deadline_window_ms} ms for request {request.request_id}")
        exc.timing = timing
        raise exc

    variant_ids = [specs[name].index_i for name in order]
    scattered = codec.decompress_scatter(preds, len(order), session.num_classes, variant_ids)
    rows = scattered.values[scattered.present]
    present_specs = [specs[name] for name, p in zip(order, scattered.present) if p]
    kept = scattered.kept[scattered.present] if session.mask_untransmitted else None
    result = aggregate(
        rows,
        [s.input_resolution_rho for s in present_specs],
        [s.width_factor_d for s in present_specs],
        session.scaling_context(),
        variant_ids=[s.index_i for s in present_specs],
        kept=kept,
    )
    return MasterOutcome(result, timing)
