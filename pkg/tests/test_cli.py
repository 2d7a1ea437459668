import csv
import io
import json
import subprocess
import sys

import pytest

from varpar.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_variants_csv(capsys):
    code, out, _ = run(capsys, "gen-variants", "--family", "standard", "--classes", "101")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["variant"] for r in rows] == [f"V{i}" for i in range(1, 8)]
    assert rows[0]["resolution"] == "96"


def test_gen_variants_json(capsys):
    code, out, _ = run(capsys, "gen-variants", "--family", "imagenet", "--classes", "1000", "--format", "json")
    rows = json.loads(out)
    assert rows[-1]["variant"] == "Vim7" and rows[-1]["width_factor"] == 0.5


def test_sweep_and_output_file(capsys, tmp_path):
    out_file = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep-k", "--samples", "300", "--k-values", "1,2", "-o", str(out_file))
    assert code == 0
    rows = list(csv.DictReader(out_file.open()))
    assert [r["k"] for r in rows] == ["1", "2", "none"]


def test_ablate_and_availability(capsys):
    code, out, _ = run(capsys, "ablate", "--mode", "leave_one_out", "--samples", "200")
    assert code == 0 and len(out.strip().splitlines()) == 7
    code, out, _ = run(capsys, "availability", "--trials", "50", "--rates", "0,0.5", "--format", "json")
    assert json.loads(out)["summary"]["0.0"]["availability"] == 1.0


def test_latency_and_bandwidth(capsys):
    _, out, _ = run(capsys, "estimate-latency", "--format", "json")
    rows = json.loads(out)
    assert rows[0]["variant"] == "V1" and round(rows[0]["speedup_rtt"], 1) == 10.8
    _, out, _ = run(capsys, "bandwidth", "--k", "2", "--classes", "101,1000")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["bytes"] for r in rows] == ["10", "12"]


def test_errors_exit_2(capsys):
    code, _, err = run(capsys, "sweep-k", "--samples", "10", "--k-values", "50")
    assert code == 2 and "error" in err


def test_vp_seed_determinism(tmp_path):
    def once(seed):
        env = {"VP_SEED": str(seed), "PATH": ""}
        return subprocess.run([sys.executable, "-m", "varpar", "sweep-k", "--samples", "300"],
                              capture_output=True, env=env, check=True).stdout

    assert once(5) == once(5)
    assert once(5) != once(6)


def test_run_master_over_tcp(capsys):
    from varpar.harness import ExperimentConfig, build_setup
    from varpar.runtime import WorkerAssignment, WorkerServer

    setup = build_setup(ExperimentConfig(num_samples=5), 0)
    servers = [WorkerServer(("127.0.0.1", 0), WorkerAssignment(s, p)) for s, p in zip(setup.specs[:2], setup.predictors)]
    for s in servers:
        s.start()
    try:
        addrs = ",".join(f"{h}:{p}" for h, p in (s.address for s in servers))
        code, out, err = run(capsys, "run-master", "--workers", addrs, "--samples", "5", "--deadline-ms", "500")
    finally:
        for s in servers:
            s.stop()
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 5 and all(r["contributing"] == "V1+V2" for r in rows)
    assert "answered 5/5" in err


@pytest.mark.parametrize("argv", [["run-master", "--workers", "127.0.0.1:1", "--variants", "1,2"],
                                  ["run-master", "--workers", "nohostport"],
                                  ["run-master", "--workers", "127.0.0.1:1", "--deadline-ms", "3"]])
def test_run_master_argument_errors(capsys, argv):
    assert main(argv) == 2
