"""Protocol-level experiments: k sweep, variant ablations, availability under
failures, latency/speedup estimates and output-size tables.

Accuracy experiments run on calibrated synthetic variants (or fixture
files), so absolute numbers are synthetic; the trends are what matter.
Every report is a deterministic function of its configuration and seeds.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .codec import TopKCompressor, h, index_width
from .ensemble import VariantEnsemble, top_m_hits
from .exceptions import InvalidArgumentError, NoResultError
from .predictors import (
    CalibrationProfile,
    LabeledSample,
    Predictor,
    calibrate,
    load_fixture,
    make_samples,
)
from .runtime.frames import encode_sample
from .runtime.master import InferenceRequest, SessionConfig, run_master
from .runtime.simnet import (
    AGGREGATE_MS,
    BASELINE_COMPUTE_MS,
    DEFAULT_COMPUTE_MS,
    FaultPlan,
    SimNetConfig,
    SimTransport,
    WorkerFault,
)
from .runtime.worker import WorkerAssignment
from .variants import Family, VariantSpec, audit, build_variant

__all__ = [
    "CIFAR10_TOP1",
    "ExperimentConfig",
    "ExperimentReport",
    "EnsembleSetup",
    "LatencyModel",
    "build_setup",
    "standalone_accuracy",
    "sweep_k",
    "ablate_variants",
    "availability_curve",
    "run_with_survivors",
    "estimate_latency",
    "bandwidth_report",
]

# Single-variant top-1 on CIFAR-10, V1..V5.
CIFAR10_TOP1 = (0.9176, 0.9307, 0.9381, 0.9443, 0.9462)


@dataclass
class ExperimentConfig:
    """Everything an experiment needs; JSON-compatible via :meth:`to_dict`.

    ``predictor`` is ``"synthetic"`` or ``"fixture:<template>"`` where the
    template contains ``{i}`` for the variant index; fixture runs also need
    ``labels_path`` (one true class per line).
    """

    num_classes: int = 10
    family: str = "standard"
    targets: tuple[float, ...] = CIFAR10_TOP1
    indices: tuple[int, ...] | None = None
    concentration: float = 1.5
    error_spread: float = 4.0
    runner_up: float = 0.7
    correlation: float = 0.0
    predictor: str = "synthetic"
    labels_path: str | None = None
    alpha: float = 1.0
    mask_untransmitted: bool = False
    k: int = 2
    num_samples: int = 10_000
    seed: int = 0
    num_seeds: int = 1
    window_ms: float = 250.0
    rtt_ms: float = 2.0
    bandwidth_bps: float = 1e6
    master_variant: int | None = None
    faults: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        self.targets = tuple(float(t) for t in self.targets)
        if self.indices is None:
            self.indices = tuple(range(1, len(self.targets) + 1))
        self.indices = tuple(int(i) for i in self.indices)
        if len(self.indices) != len(self.targets):
            raise InvalidArgumentError("indices and targets must have the same length")
        if self.master_variant is not None and self.master_variant not in self.indices:
            raise InvalidArgumentError("master_variant must be one of the configured indices")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + s for s in range(self.num_seeds)]

    @property
    def top_m(self) -> int:
        return 2 if self.num_classes < 100 else 5

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    name: str
    config: dict
    records: list[dict]
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.records:
            writer = csv.DictWriter(buf, fieldnames=list(self.records[0]), lineterminator="\n")
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: _fmt(v) for k, v in rec.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"experiment": self.name, "config": self.config, "summary": self.summary},
            indent=2, sort_keys=True, default=_json_default,
        )


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "+".join(str(v) for v in value)
    return value


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


@dataclass
class EnsembleSetup:
    specs: list[VariantSpec]
    predictors: list[Predictor]
    samples: list[LabeledSample]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.true_class for s in self.samples])

    def predictions(self) -> np.ndarray:
        """Raw scores of every variant, shape ``(n_samples, V, C)``."""
        cols = [p.predict_batch(self.samples) for p in self.predictors]
        return np.stack(cols, axis=1)


def build_setup(cfg: ExperimentConfig, seed: int, num_samples: int | None = None) -> EnsembleSetup:
    n = cfg.num_samples if num_samples is None else num_samples
    family = Family.parse(cfg.family)
    specs = [build_variant(i, family, cfg.num_classes) for i in cfg.indices]
    if cfg.predictor == "synthetic":
        predictors = [
            calibrate(
                CalibrationProfile(
                    variant_id=i,
                    target_top1=t,
                    concentration=cfg.concentration,
                    seed=seed,
                    error_spread=cfg.error_spread,
                    runner_up=cfg.runner_up,
                    correlation=cfg.correlation,
                ),
                cfg.num_classes,
            )
            for i, t in zip(cfg.indices, cfg.targets)
        ]
        samples = make_samples(n, cfg.num_classes, seed)
    elif cfg.predictor.startswith("fixture:"):
        if cfg.labels_path is None:
            raise InvalidArgumentError("fixture predictors need labels_path")
        template = cfg.predictor.split(":", 1)[1]
        predictors = [load_fixture(template.format(i=i), cfg.num_classes, variant_id=i) for i in cfg.indices]
        with open(cfg.labels_path, encoding="utf-8") as fh:
            labels = [int(line) for line in fh if line.strip()]
        samples = [LabeledSample(i, c) for i, c in enumerate(labels[:n])]
    else:
        raise InvalidArgumentError(f"unknown predictor {cfg.predictor!r}")
    return EnsembleSetup(specs, predictors, samples)


def _ensemble(specs: Sequence[VariantSpec], cfg: ExperimentConfig) -> VariantEnsemble:
    return VariantEnsemble(
        resolutions=[s.input_resolution_rho for s in specs],
        width_factors=[s.width_factor_d for s in specs],
        alpha=cfg.alpha,
        mask_untransmitted=cfg.mask_untransmitted,
    )


def _evaluate(X, y, specs, cfg, k):
    Xk = TopKCompressor(k).fit_transform(X)
    P = _ensemble(specs, cfg).fit(Xk).predict_proba(Xk)
    return P, float(top_m_hits(P, y, 1).mean()), float(top_m_hits(P, y, cfg.top_m).mean())


def standalone_accuracy(X, y) -> list[float]:
    """Top-1 of each variant on its own, from ``(n, V, C)`` raw scores."""
    return [float((np.argmax(X[:, v], axis=-1) == y).mean()) for v in range(X.shape[1])]


def sweep_k(cfg: ExperimentConfig, k_values: Iterable[int | None], seeds: Sequence[int] | None = None,
            include_uncompressed: bool = True) -> ExperimentReport:
    """Ensemble accuracy for each ``k``; ``None`` (or ``include_uncompressed``) means no compression."""
    k_values = list(k_values)
    for k in k_values:
        if k is not None and not 1 <= k <= cfg.num_classes:
            raise InvalidArgumentError(f"k={k} outside [1, {cfg.num_classes}]")
    if include_uncompressed and None not in k_values:
        k_values.append(None)
    seeds = cfg.seeds if seeds is None else list(seeds)
    records = []
    for seed in seeds:
        setup = build_setup(cfg, seed)
        X, y = setup.predictions(), setup.labels
        for k in k_values:
            _, top1, topm = _evaluate(X, y, setup.specs, cfg, k)
            records.append({
                "seed": seed,
                "k": "none" if k is None else k,
                "bytes_per_variant": 4 * cfg.num_classes if k is None else h(k, cfg.num_classes),
                "top1": top1,
                f"top{cfg.top_m}": topm,
            })
    summary = {}
    for k in k_values:
        key = "none" if k is None else k
        rows = [r for r in records if r["k"] == key]
        summary[str(key)] = {
            "mean_top1": float(np.mean([r["top1"] for r in rows])),
            f"mean_top{cfg.top_m}": float(np.mean([r[f"top{cfg.top_m}"] for r in rows])),
        }
    return ExperimentReport("sweep-k", cfg.to_dict(), records, summary)


def _subsets(n: int, mode: str):
    if mode == "cumulative":
        return [(list(range(i + 1)), None) for i in range(n)]
    if mode == "leave_one_out":
        return [(list(range(n)), None)] + [([j for j in range(n) if j != i], i) for i in range(n)]
    raise InvalidArgumentError(f"unknown ablation mode {mode!r}")


def ablate_variants(cfg: ExperimentConfig, mode: str = "cumulative", seeds: Sequence[int] | None = None) -> ExperimentReport:
    """Accuracy of variant subsets against the mean MACs of the participants.

    ``cumulative`` evaluates {V1}, {V1, V2}, ...; ``leave_one_out`` evaluates
    the full set and every set missing exactly one variant.
    """
    if len(cfg.indices) < 2:
        raise InvalidArgumentError("ablation needs at least two variants")
    seeds = cfg.seeds if seeds is None else list(seeds)
    records = []
    for seed in seeds:
        setup = build_setup(cfg, seed)
        X, y = setup.predictions(), setup.labels
        macs = [audit(s).mac_count for s in setup.specs]
        for members, excluded in _subsets(len(setup.specs), mode):
            specs = [setup.specs[j] for j in members]
            _, top1, topm = _evaluate(X[:, members], y, specs, cfg, cfg.k)
            records.append({
                "seed": seed,
                "mode": mode,
                "variants": [s.name for s in specs],
                "excluded": "" if excluded is None else setup.specs[excluded].name,
                "n_variants": len(members),
                "mean_macs": float(np.mean([macs[j] for j in members])),
                "top1": top1,
                f"top{cfg.top_m}": topm,
            })
    summary = {}
    for rec in records:
        key = "+".join(rec["variants"])
        summary.setdefault(key, []).append(rec["top1"])
    summary = {key: {"mean_top1": float(np.mean(v)), "n_seeds": len(v)} for key, v in summary.items()}
    return ExperimentReport(f"ablate-{mode}", cfg.to_dict(), records, summary)


def build_session(cfg: ExperimentConfig, setup: EnsembleSetup) -> SessionConfig:
    workers, master = {}, None
    for spec, predictor in zip(setup.specs, setup.predictors):
        assignment = WorkerAssignment(spec, predictor, cfg.k)
        if spec.index_i == cfg.master_variant:
            master = assignment
        else:
            workers[spec.name] = assignment
    return SessionConfig(workers, master=master, k=cfg.k, alpha=cfg.alpha, mask_untransmitted=cfg.mask_untransmitted)


def _simnet(cfg: ExperimentConfig, seed: int) -> SimNetConfig:
    return SimNetConfig(rtt_ms=cfg.rtt_ms, bandwidth_bps=cfg.bandwidth_bps, seed=seed)


def _request(sample: LabeledSample, window_ms: float) -> InferenceRequest:
    return InferenceRequest(sample.sample_id, encode_sample(sample), window_ms)


def run_with_survivors(cfg: ExperimentConfig, survivors: Iterable[int], seed: int | None = None,
                       num_samples: int | None = None) -> ExperimentReport:
    """Run the full SimNet pipeline with every worker except ``survivors`` fail-stopped."""
    seed = cfg.seed if seed is None else seed
    setup = build_setup(cfg, seed, num_samples)
    session = build_session(cfg, setup)
    names = {a.variant_id: name for name, a in session.workers.items()}
    keep = {names[i] for i in survivors if i in names}
    transport = SimTransport(session.workers, _simnet(cfg, seed), FaultPlan.fail_all_except(session.workers, keep))
    records = []
    for sample in setup.samples:
        try:
            out = run_master(session, _request(sample, cfg.window_ms), transport)
        except NoResultError:
            records.append({"sample_id": sample.sample_id, "answered": 0, "correct": 0, "contributing": ""})
            continue
        records.append({
            "sample_id": sample.sample_id,
            "answered": 1,
            "correct": int(out.result.top1 == sample.true_class),
            "contributing": list(out.result.contributing_variant_ids),
        })
    answered = [r for r in records if r["answered"]]
    summary = {
        "survivors": sorted(survivors),
        "availability": len(answered) / len(records) if records else 0.0,
        "accuracy": float(np.mean([r["correct"] for r in answered])) if answered else float("nan"),
    }
    return ExperimentReport("survivors", cfg.to_dict(), records, summary)


def _fault_from_dict(d: dict) -> WorkerFault:
    return WorkerFault(**d)


def availability_curve(cfg: ExperimentConfig, failure_rates: Sequence[float], num_trials: int | None = None,
                       seed: int | None = None) -> ExperimentReport:
    """Fraction of requests answered, and accuracy of the answers, as workers fail.

    For each trial every worker independently fail-stops with probability
    ``rate``; configured ``faults`` (slowdowns, drops, jitter) apply on top.
    """
    seed = cfg.seed if seed is None else seed
    for rate in failure_rates:
        if not 0 <= rate < 1:
            raise InvalidArgumentError(f"failure rate {rate} outside [0, 1)")
    setup = build_setup(cfg, seed, num_trials)
    session = build_session(cfg, setup)
    base = {name: _fault_from_dict(f) for name, f in cfg.faults.items()}
    transport = SimTransport(session.workers, _simnet(cfg, seed))
    records = []
    for r_idx, rate in enumerate(failure_rates):
        for trial, sample in enumerate(setup.samples):
            rng = np.random.default_rng([seed, r_idx, trial])
            failed = rng.random(len(session.workers)) < rate
            plan = dict(base)
            for name, dead in zip(session.workers, failed):
                if dead:
                    plan[name] = WorkerFault(fail_stop_at_ms=0.0)
            transport.plan = FaultPlan(plan)
            rec = {"rate": float(rate), "trial": trial, "failed": int(failed.sum())}
            try:
                out = run_master(session, _request(sample, cfg.window_ms), transport)
                rec.update(answered=1, correct=int(out.result.top1 == sample.true_class),
                           n_contributing=len(out.result.contributing_variant_ids),
                           latency_ms=float(out.timing.end_ms))
            except NoResultError as exc:
                rec.update(answered=0, correct=0, n_contributing=0, latency_ms=float(exc.timing.end_ms))
            records.append(rec)
    summary = {}
    for rate in failure_rates:
        rows = [r for r in records if r["rate"] == float(rate)]
        answered = [r for r in rows if r["answered"]]
        summary[repr(float(rate))] = {
            "availability": len(answered) / len(rows) if rows else 0.0,
            "accuracy": float(np.mean([r["correct"] for r in answered])) if answered else float("nan"),
            "mean_contributing": float(np.mean([r["n_contributing"] for r in answered])) if answered else 0.0,
            "survivable_trials": sum(
                1 for r in rows if r["failed"] < len(session.workers) or session.master is not None
            ),
        }
    return ExperimentReport("availability", cfg.to_dict(), records, summary)


@dataclass
class LatencyModel:
    """Per-variant compute times (ms) plus link parameters for speedup estimates."""

    compute_ms: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_COMPUTE_MS))
    baseline_ms: float = BASELINE_COMPUTE_MS
    aggregate_ms: float = AGGREGATE_MS
    rtt_ms: float = 2.0
    bandwidth_bps: float = 1e6
    input_size_bytes: int = 0
    response_size_bytes: int = 30

    def __post_init__(self):
        times = list(self.compute_ms.values()) + [self.baseline_ms, self.aggregate_ms]
        if any(t <= 0 for t in times):
            raise InvalidArgumentError("all compute times must be positive")


def estimate_latency(model: LatencyModel, variant_set: Iterable[int]) -> list[dict]:
    """Compute-only and distributed speedups over the baseline.

    The distributed response time is ``compute + 2 * rtt``; serialisation of
    the input and response is reported separately and only folded into
    ``speedup_with_transfer``. The final ``set`` row uses the slowest member.
    """
    variant_set = list(variant_set)
    if not variant_set:
        raise InvalidArgumentError("variant_set must not be empty")
    missing = [i for i in variant_set if i not in model.compute_ms]
    if missing:
        raise InvalidArgumentError(f"no compute time for variants {missing}")
    transfer = (model.input_size_bytes + model.response_size_bytes) * 8 / model.bandwidth_bps * 1000.0

    def row(label, compute):
        response = compute + 2 * model.rtt_ms
        return {
            "variant": label,
            "compute_ms": float(compute),
            "speedup_compute": model.baseline_ms / compute,
            "response_ms": float(response),
            "speedup_rtt": model.baseline_ms / response,
            "transfer_ms": transfer,
            "speedup_with_transfer": model.baseline_ms / (response + transfer),
        }

    rows = [row(f"V{i}", model.compute_ms[i]) for i in variant_set]
    rows.append(row("set", max(model.compute_ms[i] for i in variant_set)))
    return rows


def bandwidth_report(k_values: Iterable[int], class_counts: Iterable[int], fp_size: int = 4) -> list[dict]:
    """Compressed output size per variant against the dense vector and 10-20 float replies."""
    rows = []
    for C in class_counts:
        for k in k_values:
            if not 1 <= k <= C:
                continue
            size = h(k, C, fp_size)
            rows.append({
                "k": k,
                "C": C,
                "index_bytes": index_width(C),
                "bytes": size,
                "dense_bytes": fp_size * C,
                "dense_ratio": fp_size * C / size,
                "cp10_ratio": 10 * fp_size / size,
                "cp20_ratio": 20 * fp_size / size,
            })
    return rows
