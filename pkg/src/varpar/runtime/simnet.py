"""Deterministic in-memory network with fault injection.

Time is virtual (milliseconds); nothing sleeps. One-way delivery of ``n``
bytes takes ``rtt/2 + 8n/bandwidth`` plus an optional exponential jitter,
and a message may be dropped. Workers serve one request at a time with a
per-variant service time scaled by their slowdown factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..exceptions import InvalidArgumentError
from ..variants import Family, VariantSpec, audit, build_variant
from .transport import Arrival, ExchangeResult
from .worker import Worker, WorkerAssignment

__all__ = [
    "DROPPED",
    "DEFAULT_COMPUTE_MS",
    "SimNetConfig",
    "WorkerFault",
    "FaultPlan",
    "simulate_delivery",
    "service_time_ms",
    "SimTransport",
]

# Reference per-variant compute times (ms) on the target edge device.
DEFAULT_COMPUTE_MS = {1: 17.0, 2: 26.5, 3: 38.0, 4: 53.0, 5: 71.0, 6: 91.0}
BASELINE_COMPUTE_MS = 226.0
AGGREGATE_MS = 0.05


class _Dropped:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DROPPED"

    def __bool__(self):
        return False


DROPPED = _Dropped()


@dataclass(frozen=True)
class SimNetConfig:
    rtt_ms: float = 2.0
    bandwidth_bps: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.rtt_ms < 0:
            raise InvalidArgumentError("rtt_ms must be >= 0")
        if self.bandwidth_bps <= 0:
            raise InvalidArgumentError("bandwidth_bps must be > 0")


@dataclass(frozen=True)
class WorkerFault:
    """Fault behaviour of one worker.

    ``fail_stop_at_ms`` is an absolute virtual time after which the worker
    never finishes another request; ``extra_latency_ms`` is the mean of an
    exponential jitter added to each message.
    """

    fail_stop_at_ms: float | None = None
    slowdown_factor: float = 1.0
    drop_probability: float = 0.0
    extra_latency_ms: float = 0.0

    def __post_init__(self):
        if self.slowdown_factor < 1:
            raise InvalidArgumentError("slowdown_factor must be >= 1")
        if not 0 <= self.drop_probability < 1:
            raise InvalidArgumentError("drop_probability must lie in [0, 1)")
        if self.extra_latency_ms < 0:
            raise InvalidArgumentError("extra_latency_ms must be >= 0")


HEALTHY = WorkerFault()


@dataclass(frozen=True)
class FaultPlan:
    faults: Mapping[str, WorkerFault] = field(default_factory=dict)

    def get(self, worker: str) -> WorkerFault:
        return self.faults.get(worker, HEALTHY)

    @classmethod
    def fail_all_except(cls, workers, survivors) -> "FaultPlan":
        survivors = set(survivors)
        return cls({w: WorkerFault(fail_stop_at_ms=0.0) for w in workers if w not in survivors})


def simulate_delivery(config: SimNetConfig, payload_size: int, fault: WorkerFault = HEALTHY,
                      rng: np.random.Generator | None = None):
    """One-way delivery time in ms, or ``DROPPED``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if fault.drop_probability > 0 and rng.random() < fault.drop_probability:
        return DROPPED
    latency = config.rtt_ms / 2 + payload_size * 8 / config.bandwidth_bps * 1000.0
    if fault.extra_latency_ms > 0:
        latency += rng.exponential(fault.extra_latency_ms)
    return latency


def service_time_ms(spec: VariantSpec, table: Mapping[int, float] = DEFAULT_COMPUTE_MS) -> float:
    """Compute time of a variant.

    Standard-family variants with a measured time use it; anything else is
    scaled from the largest measured variant by MAC count.
    """
    if spec.index_i == 0:
        return BASELINE_COMPUTE_MS
    if spec.family is Family.STANDARD and spec.index_i in table:
        return float(table[spec.index_i])
    ref_index = max(table)
    ref = audit(build_variant(ref_index, Family.STANDARD, spec.num_classes_C))
    return float(table[ref_index]) * audit(spec).mac_count / ref.mac_count


class SimTransport:
    """Runs the real worker handlers against a virtual clock.

    Each worker gets its own random stream per request, keyed by
    ``(seed, request_id, worker position)``, so results do not depend on the
    order in which workers are simulated.
    """

    def __init__(self, workers: Mapping[str, WorkerAssignment], config: SimNetConfig = SimNetConfig(),
                 plan: FaultPlan | None = None, service_ms: Mapping[str, float] | None = None):
        self.workers = {name: Worker(a) for name, a in workers.items()}
        self.config = config
        self.plan = plan or FaultPlan()
        service_ms = dict(service_ms or {})
        self.service_ms = {
            name: service_ms.get(name, service_time_ms(a.spec)) for name, a in workers.items()
        }
        self.now_ms = 0.0
        self._busy_until = {name: 0.0 for name in self.workers}

    def exchange(self, request_frame: bytes, request_id: int, window_ms: float,
                 local: Worker | None = None) -> ExchangeResult:
        start = self.now_ms
        pending = []
        for pos, (name, worker) in enumerate(self.workers.items()):
            fault = self.plan.get(name)
            rng = np.random.default_rng([self.config.seed, request_id, pos])
            outbound = simulate_delivery(self.config, len(request_frame), fault, rng)
            if outbound is DROPPED:
                continue
            begin = max(start + outbound, self._busy_until[name])
            done = begin + self.service_ms[name] * fault.slowdown_factor
            if fault.fail_stop_at_ms is not None and done > fault.fail_stop_at_ms:
                continue
            self._busy_until[name] = done
            inbound = simulate_delivery(self.config, worker.assignment.response_size, fault, rng)
            if inbound is DROPPED:
                continue
            at = done + inbound - start
            if at <= window_ms:
                pending.append((at, pos, name, worker))
        expected = len(self.workers)
        if local is not None:
            expected += 1
            at = service_time_ms(local.assignment.spec)
            if at <= window_ms:
                pending.append((at, -1, "master", local))
        pending.sort(key=lambda item: (item[0], item[1]))
        arrivals = [Arrival(name, at, worker.handle(request_frame)) for at, _, name, worker in pending]
        end = pending[-1][0] if len(pending) == expected and pending else window_ms
        self.now_ms = start + end + AGGREGATE_MS
        return ExchangeResult(arrivals, end, expected)
