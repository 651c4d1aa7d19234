import csv
import json
import subprocess
import sys

import pytest

from qael.cli import build_parser, initial_state, main, parse_horizon
from qael.errors import ModelError

CAVITY = ["--example", "cavity-qubit", "--n-trunc", "12"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(path)


PURCELL_TWO_JUMPS = {
    "factors": [{"name": "A", "dim": 2}, {"name": "B", "dim": 2}],
    "fast": {"hamiltonian": "0", "jumps": ["kron(sigmam, eye(2))", "0.5*kron(sigmam, eye(2))"]},
    "slow": {"hamiltonian": "kron(sigmap, sigmam) + kron(sigmam, sigmap)"},
    "epsilon": 0.05,
}


def test_analyze_cavity(capsys):
    code, out, _ = run(["analyze", *CAVITY], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["gap"] == pytest.approx(5.0, rel=1e-9)
    assert report["qualifies"] is True


def test_analyze_unitary_fast_generator(tmp_path, capsys):
    path = write(tmp_path, "u.json", {"factors": [{"name": "q", "dim": 2}],
                                      "fast": {"hamiltonian": "sigmaz"},
                                      "slow": {"hamiltonian": "sigmax"}, "epsilon": 0.1})
    code, out, err = run(["analyze", path], capsys)
    assert code == 2
    assert "not_dissipative" in err
    assert json.loads(out)["failed_check"] == "not_dissipative"


def test_malformed_input(tmp_path, capsys):
    code, _, err = run(["analyze", write(tmp_path, "bad.json", "{nope")], capsys)
    assert code == 1 and "invalid JSON" in err
    code, _, err = run(["analyze", write(tmp_path, "s.json", {"factors": []})], capsys)
    assert code == 1 and "schema" in err
    code, _, _ = run(["analyze"], capsys)
    assert code == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["reduce", "--order", "3", *CAVITY])
    assert info.value.code == 1


def test_reduce_cavity(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, _, err = run(["reduce", *CAVITY, "--kappa", "10", "--g", "0.1", "--u", "1",
                        "--order", "2", "--out", str(out_dir)], capsys)
    assert code == 0
    assert "slow_dim=2" in err
    data = json.loads((out_dir / "reduced_model.json").read_text())
    (jump,) = data["generator"]["jumps"]
    assert abs(jump[0][1][0]) == pytest.approx(0.004**0.5, rel=1e-9)
    assert data["residuals"]["order2"] < 1e-8


def test_reduce_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["reduce", *CAVITY, "--out", str(a)], capsys)[0] == 0
    assert run(["reduce", *CAVITY, "--out", str(b)], capsys)[0] == 0
    assert (a / "reduced_model.json").read_bytes() == (b / "reduced_model.json").read_bytes()


def test_reduce_order2_precondition(tmp_path, capsys):
    path = write(tmp_path, "two.json", PURCELL_TWO_JUMPS)
    code, _, err = run(["reduce", path, "--order", "2"], capsys)
    assert code == 3
    assert "exactly one jump" in err
    code, out, _ = run(["reduce", path, "--order", "1"], capsys)
    assert code == 0
    assert json.loads(out)["order"] == 1


def test_validate(tmp_path, capsys):
    out_dir = tmp_path / "v"
    code, _, _ = run(["validate", "--example", "purcell", "--order", "2", "--epsilon", "0.05",
                      "--horizon", "fixed:4", "--points", "50", "--out", str(out_dir)], capsys)
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["passed"] is True
    rows = list(csv.reader(open(out_dir / "comparison.csv", newline="")))
    assert rows[0] == ["t", "error", "trace", "min_eig"]
    assert len(rows) == 51


def test_validate_zero_epsilon(tmp_path, capsys):
    out_dir = tmp_path / "z"
    code, _, _ = run(["validate", "--example", "purcell", "--epsilon", "0", "--points", "10",
                      "--out", str(out_dir)], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(out_dir / "comparison.csv", newline="")))
    assert all(float(r["error"]) < 1e-12 for r in rows)


def test_validate_invariant_failure(tmp_path, capsys, monkeypatch):
    import qael.simulate as sim

    monkeypatch.setitem(sim.RESIDUAL_THRESHOLDS, "order1", -1.0)
    code, _, err = run(["validate", "--example", "purcell", "--points", "10"], capsys)
    assert code == 4
    assert "residual_order1" in err


def test_sweep(tmp_path, capsys):
    out_dir = tmp_path / "s"
    code, _, err = run(["sweep", "--example", "purcell", "--epsilons", "0.04,0.02,0.01",
                        "--points", "60", "--jobs", "2", "--initial", "basis:1",
                        "--out", str(out_dir)], capsys)
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    errs = [p["max_error"] for p in summary["points"]]
    assert errs[0] > errs[1] > errs[2]
    assert summary["slope"] is not None
    for p in summary["points"]:
        assert (out_dir / p["csv"]).exists()


def test_sweep_needs_three_epsilons(capsys):
    code, _, err = run(["sweep", *CAVITY, "--epsilons", "0.1,0.05"], capsys)
    assert code == 1
    assert "need >= 3 epsilons" in err


def test_example_emit_model(tmp_path, capsys):
    code, out, _ = run(["example", "cavity-qubit", "--n-trunc", "10", "--emit-model"], capsys)
    assert code == 0
    path = write(tmp_path, "m.json", out)
    code, out2, _ = run(["analyze", path], capsys)
    assert code == 0
    code, out3, _ = run(["analyze", "--example", "cavity-qubit", "--n-trunc", "10"], capsys)
    assert out2 == out3
    code, out, _ = run(["example", "purcell"], capsys)
    assert json.loads(out)["dim"] == 4


def test_tolerance_env(monkeypatch, capsys):
    monkeypatch.setenv("QAEL_TOL_OVERRIDES", "{not json")
    code, _, err = run(["analyze", "--example", "purcell"], capsys)
    assert code == 1 and "QAEL_TOL_OVERRIDES" in err


def test_helpers():
    assert parse_horizon("fixed") == ("fixed", None)
    assert parse_horizon("slow:2") == ("slow", 2.0)
    rho = initial_state("random", 3, seed=0)
    assert rho.shape == (3, 3)
    assert (initial_state("random", 3, seed=0) == rho).all()
    with pytest.raises(ModelError):
        initial_state("basis:5", 2, 0)
    assert build_parser().parse_args(["example", "purcell"]).seed == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qael", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("qael ")
