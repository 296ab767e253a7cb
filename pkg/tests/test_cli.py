import csv
import io
import json
import math

import pytest

from ustatbound import checks
from ustatbound.cli import main


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bound_closed_form(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair", "params": {"t": 10}}})
    code, out, _ = run(["bound", "--config", cfg], capsys)
    assert code == 0
    rep = json.loads(out)["report"]
    assert rep["term2"] == 0.0
    assert rep["total"] == pytest.approx(math.sqrt(2 * math.pi) / math.sqrt(2.5), rel=1e-9)


def test_output_carries_provenance(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair", "params": {"t": 10}}, "seeds": {"root": 5}})
    out_path = tmp_path / "b.json"
    code, _, _ = run(["bound", "--config", cfg, "--out", str(out_path), "--wiring", "grouped"], capsys)
    assert code == 0
    data = json.loads(out_path.read_text())
    assert data["config"]["seeds"]["root"] == 5
    assert data["config"]["flags"] == {"wiring": "grouped", "paper_literal": False}
    assert "mc_samples" in data["config"]["budgets"]
    assert "threads" not in out_path.read_text()


def test_non_pd_target_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair"}, "C": [[1, 0], [0, -1]]})
    assert run(["bound", "--config", cfg], capsys)[0] == 2


def test_missing_model_name_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"params": {"t": 10}}})
    assert run(["bound", "--config", cfg], capsys)[0] == 1


@pytest.mark.parametrize("bad", [
    {"model": {"name": "order1-pair"}, "budgets": {"mc_samples": 0}},
    {"model": {"name": "order1-pair"}, "sweep": {"t": [20, 10]}},
    {"model": {"name": "order1-pair"}, "flags": {"wiring": "other"}},
    {"model": {"name": "order1-pair"}, "seeds": {"root": -1}},
    {"model": {"name": "order1-pair"}, "extra": 1},
    {"model": {"name": "order1-pair", "params": {"t": 0}}},
])
def test_invalid_configs_exit_1(tmp_path, capsys, bad):
    assert run(["bound", "--config", write(tmp_path, bad)], capsys)[0] == 1


def test_unreadable_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "x.json"
    bad.write_text("{not json")
    assert run(["bound", "--config", str(bad)], capsys)[0] == 1
    assert run(["bound", "--config", str(tmp_path / "missing.json")], capsys)[0] == 1


def test_verify_too_few_replicates(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair"}, "budgets": {"replicates": 5}})
    assert run(["verify", "--config", cfg], capsys)[0] == 1


def test_verify_order1_pair_passes(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair", "params": {"t": 10}},
                           "budgets": {"replicates": 100000}})
    code, out, _ = run(["verify", "--config", cfg], capsys)
    data = json.loads(out)
    assert code == 0 and data["passed"]
    assert {c["name"] for c in data["criteria"]} == {"bound-domination", "covariance-match"}


def test_verify_two_radii_passes(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "two-radii-edges", "params": {"t": 50}},
                           "budgets": {"replicates": 10000, "mc_samples": 262144}})
    code, out, _ = run(["verify", "--config", cfg], capsys)
    assert code == 0 and json.loads(out)["passed"]


def test_sweep_single_point_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair"}, "sweep": {"t": [10]}})
    assert run(["sweep", "--config", cfg], capsys)[0] == 1


def test_sweep_order1_decay(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "order1-pair"}, "budgets": {"replicates": 2000},
                           "sweep": {"t": [10, 20, 40, 80]}})
    code, out, _ = run(["sweep", "--config", cfg], capsys)
    assert code == 0
    assert "\r" not in out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0])[:8] == ["t", "term1", "term2", "total", "total_SE", "delta_lower", "delta_SE", "cov_err"]
    for row in rows:
        t = float(row["t"])
        assert float(row["total"]) == pytest.approx(math.sqrt(2 * math.pi) / math.sqrt(t / 4), rel=1e-6)
        assert row["dominated"] == "1"


def test_selftest_list(capsys):
    code, out, _ = run(["selftest", "--list"], capsys)
    assert code == 0 and out.split() == list(checks.SELFTESTS)


def test_selftest_default_passes(capsys):
    code, out, _ = run(["selftest"], capsys)
    assert code == 0, out


def test_selftest_mutation_exit_3(capsys):
    code, out, _ = run(["selftest", "--mutate", "partition-predicate"], capsys)
    assert code == 3
    assert "FAIL  partition-counts" in out


def test_bound_and_verify_thread_invariant(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "two-radii-edges", "params": {"t": 20}},
                           "budgets": {"replicates": 500, "mc_samples": 65536}})
    for cmd in ("bound", "verify"):
        outs = []
        for threads in ("1", "8"):
            path = tmp_path / f"{cmd}{threads}.json"
            run([cmd, "--config", cfg, "--threads", threads, "--out", str(path)], capsys)
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]
