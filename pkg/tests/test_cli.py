import json

import pytest

from renewal_dynamics.cli import clean, run


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_intensities_constant_one(capsys):
    code, out, _ = _run(capsys, "analytic", "intensities", "--dist", "constant:1")
    assert code == 0
    d = json.loads(out)
    assert {k: d[k] for k in ("lambda_o", "lambda_s", "lambda_e")} == {"lambda_o": 1, "lambda_s": 1, "lambda_e": 0}
    assert '"lambda_o": 1,' in out


def test_markov_row(capsys):
    code, out, _ = _run(capsys, "markov", "--s", "0.5", "--k", "2")
    assert code == 0
    assert json.loads(out)["row"] == [0.25, 0.5, 0.25]


def test_markov_csv(capsys):
    code, out, _ = _run(capsys, "markov", "--s", "0.5", "--k", "1", "--format", "csv")
    assert out == "to,probability\n1,0.5\n2,0.5\n"


def test_clean_formats_floats():
    assert clean([1.0, 2.5, 1 / 3, float("nan")]) == [1, 2.5, 0.333333333333, None]


def test_analytic_pgf_and_mgf(capsys):
    _, out, _ = _run(capsys, "analytic", "pgf", "--dist", "geometric:0.5", "--z", "1")
    d = json.loads(out)
    assert d["value"] == 1 and d["mean"] == 2 and d["factorial_moment_2"] == pytest.approx(8 / 3)
    _, out, _ = _run(capsys, "analytic", "mgf", "--dist", "constant:1", "--t", "0")
    assert json.loads(out)["value"] == 1


def test_seed_is_mandatory(capsys):
    code, _, err = _run(capsys, "marks", "--dist", "constant:1", "--window", "5")
    assert code == 2 and "seed" in err


@pytest.mark.parametrize("argv,field", [
    (["--dist", "bogus:1"], "dist"),
    (["--dist", "zeta:1.5"], "dist"),
    (["--window", "0"], "window"),
    (["--eps", "2"], "eps"),
    (["--reps", "0"], "reps"),
])
def test_invalid_config(capsys, argv, field):
    code, _, err = _run(capsys, "pop", "--seed", "1", *argv)
    assert code == 2
    assert err.startswith(f"error: {field}:")


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"dist": "constant:2", "window": 10, "seed": 3, "eps": 0.5}))
    code, out, _ = _run(capsys, "marks", "--config", str(cfg))
    assert code == 0 and out.splitlines()[1] == "0,2"
    # flags override the file
    code, out, _ = _run(capsys, "marks", "--config", str(cfg), "--dist", "constant:1")
    assert out.splitlines()[1] == "0,1"


def test_config_unknown_field(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"windw": 5}))
    code, _, err = _run(capsys, "marks", "--config", str(cfg), "--seed", "1")
    assert code == 2 and "windw" in err


def test_insufficient_window(capsys):
    code, _, err = _run(capsys, "pop", "--dist", "geometric:0.5", "--window", "100", "--seed", "1")
    assert code == 3 and "burn-in" in err


def test_marks_json(capsys):
    code, out, _ = _run(capsys, "marks", "--dist", "constant:1", "--window", "5", "--seed", "0",
                        "--format", "json")
    assert json.loads(out)["marks"] == [1, 1, 1, 1, 1]


def test_pop_outputs(capsys):
    base = ["pop", "--dist", "geometric:0.5", "--window", "20000", "--seed", "4"]
    code, out, _ = _run(capsys, *base)
    rep = json.loads(out)["replications"][0]
    assert code == 0 and rep["burn_in"] == 30 and rep["cycles"] > 100
    _, out, _ = _run(capsys, *base, "--format", "csv")
    assert out.splitlines()[0] == "n,a_n,nhat_n" and len(out.splitlines()) == 20001
    _, out, _ = _run(capsys, *base, "--format", "csv", "--cycles")
    assert out.splitlines()[0] == "start,length"


def test_pop_replications_deterministic(capsys):
    argv = ["pop", "--dist", "geometric:0.5", "--window", "5000", "--seed", "4", "--reps", "3"]
    _, serial, _ = _run(capsys, *argv, "--workers", "1")
    _, pooled, _ = _run(capsys, *argv, "--workers", "3")
    assert serial == pooled
    d = json.loads(serial)
    assert [r["rep"] for r in d["replications"]] == [0, 1, 2]
    assert "across_replications" in d


def test_tree_outputs(capsys):
    base = ["tree", "--dist", "geometric:0.5", "--window", "200", "--seed", "1", "--eps", "1e-3"]
    _, out, _ = _run(capsys, *base, "--format", "dot")
    assert out.startswith("digraph family {")
    _, out, _ = _run(capsys, *base)
    rows = json.loads(out)
    assert len(rows) == 200 and {r["label"] for r in rows} >= {"successful", "ephemeral"}
    code, _, err = _run(capsys, "tree", "--dist", "geometric:0.5", "--window", "20000", "--seed", "1",
                        "--format", "dot")
    assert code == 2 and "DOT" in err


def test_out_file(tmp_path, capsys):
    path = tmp_path / "row.json"
    code, out, _ = _run(capsys, "markov", "--s", "0.5", "--k", "1", "--out", str(path))
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["row"] == [0.5, 0.5]


def test_byte_identical_runs(capsys):
    argv = ["marks", "--dist", "zeta:2.5", "--window", "1000", "--seed", "9", "--eps", "0.5"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv)
    assert a == b


def test_verify_subset(capsys):
    code, out, _ = _run(capsys, "verify", "--seed", "7", "--window", "100000", "--criteria", "1,5,12")
    d = json.loads(out)
    assert code == 0 and d["all_pass"]
    assert {c["criterion"] for c in d["checks"]} == {1, 5, 12}
    assert all(c["paper_ref"] for c in d["checks"])


def test_verify_full_suite(capsys):
    code, out, err = _run(capsys, "verify", "--dist", "geometric:0.5", "--window", "1000000",
                          "--seed", "7", "--eps", "1e-9")
    d = json.loads(out)
    assert {c["criterion"] for c in d["checks"]} == set(range(1, 14))
    failing = [c["name"] for c in d["checks"] if c["pass"] is False]
    assert code == (1 if failing else 0)
    assert all(name in err for name in failing)
    assert code == 0, f"failing checks: {failing}"
