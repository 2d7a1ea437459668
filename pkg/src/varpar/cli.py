"""Command-line interface: ``varpar <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from . import harness
from .config import env_seed, load_config
from .exceptions import NoResultError, VPError
from .predictors import CalibrationProfile, calibrate, load_fixture, make_samples
from .runtime import (
    InferenceRequest,
    SessionConfig,
    TcpTransport,
    WorkerAssignment,
    encode_sample,
    parse_address,
    run_master,
    run_worker,
    window_for_deadline,
)
from .variants import Family, build_variant, catalog_table

log = logging.getLogger("varpar")


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if text and not text.endswith("\n"):
            sys.stdout.write("\n")


def _emit_report(report: harness.ExperimentReport, args) -> None:
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.output)


def _emit_rows(rows: list[dict], args) -> None:
    _emit(json.dumps(rows, indent=2) if args.format == "json" else _rows_to_csv(rows), args.output)


def _experiment_config(args):
    return load_config(
        args.config,
        num_classes=args.classes,
        family=args.family,
        targets=_floats(args.targets) if args.targets else None,
        indices=_ints(args.variants) if args.variants else None,
        predictor=args.predictor,
        labels_path=args.labels,
        num_samples=args.samples,
        seed=args.seed,
        num_seeds=args.seeds,
        alpha=args.alpha,
        k=args.k,
        mask_untransmitted=True if args.mask_untransmitted else None,
        window_ms=args.window_ms,
        master_variant=args.master_variant,
    )


def cmd_gen_variants(args) -> int:
    rows = []
    for spec, audit in catalog_table(args.family, args.classes):
        rows.append({
            "variant": spec.name,
            "index": spec.index_i,
            "family": spec.family.value,
            "resolution": spec.input_resolution_rho,
            "width_factor": spec.width_factor_d,
            "head_width_j": spec.head_width_j,
            "last_filters": spec.last_pointwise_filters,
            "num_classes": spec.num_classes_C,
            "params": audit.param_count,
            "macs": audit.mac_count,
        })
    _emit_rows(rows, args)
    return 0


def cmd_sweep_k(args) -> int:
    cfg = _experiment_config(args)
    k_values = _ints(args.k_values) if args.k_values else [1, 2, cfg.num_classes]
    _emit_report(harness.sweep_k(cfg, k_values), args)
    return 0


def cmd_ablate(args) -> int:
    cfg = _experiment_config(args)
    _emit_report(harness.ablate_variants(cfg, args.mode), args)
    return 0


def cmd_availability(args) -> int:
    cfg = _experiment_config(args)
    _emit_report(harness.availability_curve(cfg, _floats(args.rates), args.trials), args)
    return 0


def cmd_estimate_latency(args) -> int:
    model = harness.LatencyModel(rtt_ms=args.rtt_ms, bandwidth_bps=args.bandwidth_bps,
                                 input_size_bytes=args.input_bytes)
    _emit_rows(harness.estimate_latency(model, _ints(args.variants)), args)
    return 0


def cmd_bandwidth(args) -> int:
    _emit_rows(harness.bandwidth_report(_ints(args.k_values), _ints(args.class_counts)), args)
    return 0


def _make_predictor(text: str, variant: int, num_classes: int, target: float, seed: int):
    if text == "synthetic":
        return calibrate(CalibrationProfile(variant_id=variant, target_top1=target, seed=seed), num_classes)
    if text.startswith("fixture:"):
        return load_fixture(text.split(":", 1)[1], num_classes, variant_id=variant)
    raise VPError(f"unknown predictor {text!r}; use 'synthetic' or 'fixture:<path>'")


def cmd_serve_worker(args) -> int:
    spec = build_variant(args.variant, args.family, args.classes)
    target = args.target_top1
    if target is None:
        target = harness.CIFAR10_TOP1[min(args.variant, len(harness.CIFAR10_TOP1)) - 1]
    predictor = _make_predictor(args.predictor, args.variant, args.classes, target, env_seed(args.seed))
    run_worker(WorkerAssignment(spec, predictor, args.k), parse_address(args.listen), args.delay_ms)
    return 0


def cmd_run_master(args) -> int:
    addresses = [parse_address(a) for a in args.workers.split(",") if a.strip()]
    indices = _ints(args.variants) if args.variants else list(range(1, len(addresses) + 1))
    if len(indices) != len(addresses):
        raise VPError("--variants must list one variant index per worker address")
    workers, names = {}, {}
    for addr, i in zip(addresses, indices):
        spec = build_variant(i, args.family, args.classes)
        workers[spec.name] = WorkerAssignment(spec, None, args.k)
        names[spec.name] = addr
    session = SessionConfig(workers, k=args.k, alpha=args.alpha)
    window = window_for_deadline(args.deadline_ms, args.reserve_ms)
    if window <= 0:
        raise VPError(f"deadline {args.deadline_ms} ms leaves no collection window after the reserve")
    seed = env_seed(args.seed)
    samples = make_samples(args.samples, args.classes, seed)
    rows = []
    with TcpTransport(names) as transport:
        for sample in samples:
            request = InferenceRequest(sample.sample_id, encode_sample(sample), window)
            try:
                out = run_master(session, request, transport)
            except NoResultError as exc:
                rows.append({"request_id": sample.sample_id, "true_class": sample.true_class, "top1": "",
                             "correct": 0, "contributing": "", "missed": "+".join(exc.timing.missed),
                             "elapsed_ms": round(exc.timing.wall_ms, 3)})
                continue
            rows.append({
                "request_id": sample.sample_id,
                "true_class": sample.true_class,
                "top1": out.result.top1,
                "correct": int(out.result.top1 == sample.true_class),
                "contributing": "+".join(f"V{v}" for v in out.result.contributing_variant_ids),
                "missed": "+".join(out.timing.missed),
                "elapsed_ms": round(out.timing.wall_ms, 3),
            })
    _emit_rows(rows, args)
    answered = [r for r in rows if r["top1"] != ""]
    acc = sum(r["correct"] for r in answered) / len(answered) if answered else float("nan")
    print(f"answered {len(answered)}/{len(rows)} requests, top-1 {acc:.4f}", file=sys.stderr)
    return 0


def _add_output(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", help="write to a file instead of stdout")


def _add_experiment(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--classes", type=int)
    p.add_argument("--family", choices=[f.value for f in Family])
    p.add_argument("--targets", help="comma-separated top-1 targets, one per variant")
    p.add_argument("--variants", help="comma-separated variant indices")
    p.add_argument("--predictor", help="synthetic | fixture:<path template with {i}>")
    p.add_argument("--labels", help="true-class file for fixture predictors")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds to run")
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--window-ms", type=float)
    p.add_argument("--master-variant", type=int)
    p.add_argument("--mask-untransmitted", action="store_true")
    _add_output(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varpar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-variants", help="emit the variant catalog with parameter and MAC counts")
    p.add_argument("--family", choices=[f.value for f in Family], default="standard")
    p.add_argument("--classes", type=int, default=101)
    _add_output(p)
    p.set_defaults(func=cmd_gen_variants)

    p = sub.add_parser("sweep-k", help="ensemble accuracy as a function of k")
    _add_experiment(p)
    p.add_argument("--k-values", help="comma-separated k values (default 1,2,C)")
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("ablate", help="cumulative or leave-one-out variant ablation")
    _add_experiment(p)
    p.add_argument("--mode", choices=("cumulative", "leave_one_out"), default="cumulative")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("availability", help="availability and accuracy under worker failures")
    _add_experiment(p)
    p.add_argument("--rates", default="0,0.2,0.4,0.6,0.8")
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_availability)

    p = sub.add_parser("estimate-latency", help="compute-only and RTT-adjusted speedups")
    p.add_argument("--variants", default="1,2,3,4,5,6")
    p.add_argument("--rtt-ms", type=float, default=2.0)
    p.add_argument("--bandwidth-bps", type=float, default=1e6)
    p.add_argument("--input-bytes", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_estimate_latency)

    p = sub.add_parser("bandwidth", help="compressed output size per variant")
    p.add_argument("--k", dest="k_values", default="1,2,5,10")
    p.add_argument("--classes", dest="class_counts", default="10,100,101,1000")
    _add_output(p)
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("serve-worker", help="serve one variant over TCP")
    p.add_argument("--listen", default="127.0.0.1:7000")
    p.add_argument("--variant", type=int, required=True)
    p.add_argument("--family", choices=[f.value for f in Family], default="standard")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--predictor", default="synthetic")
    p.add_argument("--target-top1", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delay-ms", type=float, default=0.0, help="emulated compute time per request")
    p.set_defaults(func=cmd_serve_worker)

    p = sub.add_parser("run-master", help="send requests to TCP workers and aggregate")
    p.add_argument("--workers", required=True, help="comma-separated host:port list")
    p.add_argument("--variants", help="variant index per worker (default 1..n)")
    p.add_argument("--family", choices=[f.value for f in Family], default="standard")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--deadline-ms", type=float, default=100.0)
    p.add_argument("--reserve-ms", type=float, default=5.0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_run_master)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (VPError, OSError) as exc:
        print(f"varpar: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
