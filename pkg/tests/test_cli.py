import json
import subprocess
import sys

import pytest

from ipgkit import bench
from ipgkit.bench import BENCH_COLUMNS, TRACE_COLUMNS, halving_ratios, parse_csv, predicted_scale, run_sweep, to_csv
from ipgkit.cli import main
from ipgkit.instance import InstanceParams
from ipgkit.ipg import IpgConfig

SMALL = ["--m1", "2", "--m2", "1", "--bd", "5", "--eps", "0.1"]
FAST = ["--delta-mode", "explicit", "--delta", "1e-6", "--max-outer", "5"]


def test_instance_file(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["instance", *SMALL, "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["dimensions"]["m"] == 6 and data["dimensions"]["d"] == 30
    assert abs(data["kappa"] - 3.7320508) < 1e-7
    assert data["previews"]["K_eps"] >= 1
    again = tmp_path / "again.json"
    main(["instance", *SMALL, "-o", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_even_block_dimension_is_config_error(capsys):
    assert main(["instance", "--m1", "2", "--m2", "1", "--bd", "4", "--eps", "0.1"]) == 2
    assert "odd" in capsys.readouterr().err


def test_missing_params_and_bad_config(tmp_path, capsys):
    assert main(["instance", "--m1", "2"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["instance", "--config", str(bad)]) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": {"m1": 2, "m2": 1, "bd": 7, "eps": 0.1}}))
    out = tmp_path / "i.json"
    assert main(["instance", "--config", str(cfg), "--bd", "5", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["params"]["bd"] == 5


def test_solve_outputs(tmp_path):
    trace, rep = tmp_path / "t.csv", tmp_path / "r.json"
    args = ["solve", *SMALL, *FAST, "--trace-output", str(trace), "-o", str(rep)]
    assert main(args) == 0
    text = trace.read_text()
    assert text.splitlines()[0] == ",".join(TRACE_COLUMNS) and "\r" not in text
    rows = parse_csv(text)
    report = json.loads(rep.read_text())
    assert len(rows) == report["outer_iters"]
    assert report["stationarity"]["problem_kind"] == "SP"
    first = trace.read_bytes()
    main(args)
    assert trace.read_bytes() == first


def test_solve_zero_budget(tmp_path):
    trace, rep = tmp_path / "t.csv", tmp_path / "r.json"
    assert main(["solve", *SMALL, "--max-outer", "0", "--trace-output", str(trace), "-o", str(rep)]) == 0
    assert trace.read_text() == ",".join(TRACE_COLUMNS) + "\n"
    assert json.loads(rep.read_text())["certified"] is False


def test_verify_and_fault(capsys):
    assert main(["verify", "--quick"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert main(["verify", "--quick", "--fault", "negate_grad_branch"]) == 3
    assert "FAIL  gradient finite differences" in capsys.readouterr().out


def test_span_outputs(tmp_path):
    js, csv = tmp_path / "s.json", tmp_path / "s.csv"
    assert main(["span", *SMALL, "--model", "A3", "-o", str(js), "--summary-output", str(csv)]) == 0
    data = json.loads(js.read_text())
    assert data["model"] == "A3" and not data["violations"]
    assert csv.read_text().startswith("coordinate,first_activation_t\n")
    assert main(["span", *SMALL, "--model", "A2", "--schedule", "penalty"]) == 2


def test_bench_single_eps_matches_solve(tmp_path):
    out, rep = tmp_path / "b.csv", tmp_path / "r.json"
    assert main(["bench", *SMALL, *FAST, "--sweep", "0.1", "-o", str(out)]) == 0
    assert main(["solve", *SMALL, *FAST, "--trace-output", str(tmp_path / "t.csv"), "-o", str(rep)]) == 0
    (row,) = parse_csv(out.read_text())
    report = json.loads(rep.read_text())
    assert row["apg_steps"] == report["total_inner_steps"]
    assert row["grad_calls"] == report["counters"]["grad_f0_calls"]
    params = InstanceParams(**report["instance"])
    assert row["predicted_scale"] == float(f"{predicted_scale(params, 0.1):.17g}")


def test_bench_rejects_bad_workers(monkeypatch):
    monkeypatch.setenv("IPGKIT_WORKERS", "zero")
    assert main(["bench", *SMALL, *FAST]) == 2


def test_sweep_parallel_equals_serial():
    base = IpgConfig(eps=0.1, delta_mode="explicit", delta=1e-6, max_outer=4, early_exit=False)
    params = InstanceParams(2, 1, 5, 0.1)
    serial = run_sweep(params, [0.2, 0.1], base, workers=1)
    parallel = run_sweep(params, [0.2, 0.1], base, workers=2)
    assert serial == parallel


def test_failed_run_is_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("inner solve diverged")

    monkeypatch.setattr(bench, "solve", boom)
    rows = run_sweep(InstanceParams(2, 1, 5, 0.1), [0.2, 0.1], IpgConfig(eps=0.1), workers=1)
    assert [r["exit_reason"] for r in rows] == ["error", "error"]
    assert "diverged" in rows[0]["error"]


def test_csv_round_trip():
    rows = [{"eps": 0.1, "outer_iters": 3, "certified": True, "error": ""}]
    back = parse_csv(to_csv(rows, BENCH_COLUMNS))
    assert back[0]["eps"] == 0.1 and back[0]["outer_iters"] == 3 and back[0]["certified"] is True
    assert to_csv([{"eps": 1 / 3}], ("eps",)) == "eps\n0.33333333333333331\n"


def test_halving_ratios():
    rows = [{"eps": 0.2, "apg_steps": 10}, {"eps": 0.1, "apg_steps": 30}, {"eps": 0.05, "apg_steps": 90}]
    assert halving_ratios(rows) == [3.0, 3.0]


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "ipgkit", "instance", "--bd", "4"],
                          capture_output=True, text=True)
    assert done.returncode == 2
