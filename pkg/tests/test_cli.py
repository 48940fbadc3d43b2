"""Command-line interface: subcommands, exit codes, file outputs."""

import csv
import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from lipcert.cli import main
from lipcert.model import forward, load_model

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
TOY_MODEL = str(FIXTURES / "toy_model.json")
TOY_W0 = str(FIXTURES / "toy_w0.json")


def test_gen_random_round_trip(tmp_path, capsys):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    args = ["gen-random", "--n", "5", "--m", "4", "--l", "3", "--seed", "9"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_text() == out2.read_text()
    model = load_model(out1)
    assert (model.n, model.m, model.l) == (5, 4, 3)
    capsys.readouterr()


def test_reduce_stdout_and_file(tmp_path, capsys):
    assert main(["reduce", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1"]) == 0
    cap = capsys.readouterr()
    obj = json.loads(cap.out)
    assert obj["n"] == 2
    assert obj["partition"]["n_plus"] == [2, 3, 5]
    assert obj["partition"]["n_zero"] == [1]
    assert obj["partition"]["n_res"] == [4, 6]
    assert "|N+| = 3, |N0| = 1, |N_r| = 2" in cap.err

    out = tmp_path / "reduced.json"
    assert main([
        "reduce", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1",
        "--out", str(out),
    ]) == 0
    cap = capsys.readouterr()
    assert "|N_r| = 2" in cap.out
    assert json.loads(out.read_text())["n"] == 2


def test_reduce_zero_eps(capsys):
    assert main(["reduce", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["n"] == 0
    assert obj["partition"]["n_res"] == []


def test_bound_toy(capsys):
    assert main(["bound", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "gamma = 0.108805" in out
    assert "exact = true" in out
    assert "n_r = 2" in out
    assert "w_star = " in out


def test_bound_report_and_dump(tmp_path, capsys):
    report = tmp_path / "cert.json"
    dump = tmp_path / "sdp.json"
    assert main([
        "bound", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1",
        "--report", str(report), "--dump-sdp", str(dump),
    ]) == 0
    capsys.readouterr()
    cert = json.loads(report.read_text())
    assert cert["gamma_upper"] == pytest.approx(0.108805, abs=1e-5)
    assert cert["exact"] is True
    assert len(cert["w_star"]) == 3
    prog = json.loads(dump.read_text())
    assert any(c["name"] == "lmi" for c in prog["matrix_constraints"])


def test_bound_multiplier_ordering(capsys):
    gammas = {}
    for mc in ("nn", "ozf", "faz"):
        assert main([
            "bound", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1",
            "--multiplier", mc,
        ]) == 0
        line = next(
            ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("gamma = ")
        )
        gammas[mc] = float(line.split("=")[1])
    assert gammas["nn"] <= gammas["ozf"] * (1 + 1e-6)
    assert gammas["nn"] <= gammas["faz"] * (1 + 1e-6)
    assert gammas["ozf"] == pytest.approx(0.110757, abs=1e-5)


def test_certify_not_certified_exit_code(capsys):
    rc = main([
        "certify", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1",
        "--restarts", "10",
    ])
    assert rc == 1
    out = capsys.readouterr().out
    assert "margin = 0.0741" in out
    assert "verdict = not_certified" in out
    assert "lower_bound = 0.108" in out


def test_certify_certified_exit_code(capsys):
    rc = main([
        "certify", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.01",
        "--restarts", "5",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "verdict = certified_robust" in out


def test_certify_report_round_trip(tmp_path, capsys):
    report = tmp_path / "cert.json"
    main([
        "certify", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1",
        "--restarts", "5", "--report", str(report),
    ])
    capsys.readouterr()
    cert = json.loads(report.read_text())
    assert cert["robust_verdict"] == "not_certified"
    assert cert["margin_value"] == pytest.approx(0.074108, abs=1e-5)
    assert cert["timings"]["total_s"] > 0


def test_lower_bound_command(capsys):
    assert main([
        "lower-bound", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.1",
        "--restarts", "20", "--steps", "200",
    ]) == 0
    out = capsys.readouterr().out
    lb = float(out.splitlines()[0].split("=")[1])
    assert 0.10 <= lb <= 0.108806


def test_malformed_model_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 2, "m": 2,\n  "l": ]')
    rc = main(["bound", "--model", str(bad), "--input", TOY_W0, "--eps", "0.1"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_missing_field_model(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    obj = json.loads(pathlib.Path(TOY_MODEL).read_text())
    del obj["b_in"]
    bad.write_text(json.dumps(obj))
    rc = main(["bound", "--model", str(bad), "--input", TOY_W0, "--eps", "0.1"])
    assert rc == 2
    assert "missing field" in capsys.readouterr().err


def test_wrong_w0_length(tmp_path, capsys):
    w = tmp_path / "w.json"
    w.write_text('{"w0": [0.1, 0.2]}')
    rc = main(["bound", "--model", TOY_MODEL, "--input", str(w), "--eps", "0.1"])
    assert rc == 2
    assert "expects 3" in capsys.readouterr().err


def test_negative_eps_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bound", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "-1"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_bench_curve(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    assert main([
        "bench", "--model", TOY_MODEL, "--input", TOY_W0, "--eps", "0.3",
        "--grid-points", "7", "--out", str(out),
    ]) == 0
    capsys.readouterr()
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["eps", "n_r"]
    assert len(rows) == 8
    counts = [int(r[1]) for r in rows[1:]]
    assert counts[0] == 0
    assert counts == sorted(counts)


def test_bench_curve_needs_input(tmp_path, capsys):
    rc = main(["bench", "--model", TOY_MODEL, "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    assert "--input" in capsys.readouterr().err


def test_bench_ensemble(tmp_path, capsys):
    out1 = tmp_path / "b1.csv"
    out2 = tmp_path / "b2.csv"
    args = ["bench", "--count", "3", "--n", "6", "--m", "4", "--l", "3"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2), "--workers", "2"]) == 0
    capsys.readouterr()

    def rows(path):
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))

    r1, r2 = rows(out1), rows(out2)
    assert len(r1) == len(r2) == 3
    assert [r["seed"] for r in r1] == ["1", "2", "3"]
    for a, b in zip(r1, r2):
        for key in ("seed", "n", "m", "l", "eps", "class", "gamma", "gap", "n_r", "exact"):
            assert a[key] == b[key], key
        assert float(a["gamma"]) > 0


def test_console_entry_point(tmp_path):
    # the installed script and `python -m` path both work
    res = subprocess.run(
        [sys.executable, "-m", "lipcert", "bound", "--model", TOY_MODEL,
         "--input", TOY_W0, "--eps", "0.1"],
        capture_output=True, text=True, timeout=300,
    )
    assert res.returncode == 0
    assert "gamma = 0.108805" in res.stdout


def test_no_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit):
        main([])
    capsys.readouterr()
