from __future__ import annotations

import json

import numpy as np
import pytest

from etaform.cli import InputError, frames_document, parse_frames_document, run
from etaform.families import cp2_triple
from etaform.maslov import model_triple
from etaform.symplectic import standard_space


def _write(path, space, frames):
    path.write_text(json.dumps(frames_document(space, frames)))
    return str(path)


@pytest.fixture
def model_doc(tmp_path):
    L0, L1, L2 = model_triple()
    return _write(tmp_path / "model.json", standard_space(1), {"L0": L0, "L1": L1, "L2": L2})


def _report(capsys):
    return json.loads(capsys.readouterr().out)


def test_maslov_model(model_doc, capsys):
    assert run(["maslov", model_doc]) == 0
    rep = _report(capsys)
    assert rep["results"] == {"n": 0, "m": 1, "tau0": -1}
    assert rep["diagnostics"]["eta_cocycle_sum"] == pytest.approx(-1.0)
    assert rep["tolerances"]["transversality"] == 1e-8
    assert set(rep["versions"]) >= {"etaform", "numpy", "scipy"}


def test_maslov_cp2_vertex(tmp_path, capsys):
    L0, L1, L2 = cp2_triple(0.8, 1.9)
    path = _write(tmp_path / "v.json", standard_space(2), {"L0": L0, "L1": L1, "L2": L2})
    assert run(["maslov", path]) == 0
    assert _report(capsys)["results"]["tau0"] == 0


def test_report_is_deterministic(model_doc, capsys):
    run(["maslov", model_doc])
    first = capsys.readouterr().out
    run(["maslov", model_doc])
    assert capsys.readouterr().out == first


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"dim\": 2,")
    assert run(["maslov", str(bad)]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_missing_frame(tmp_path, capsys):
    L0, L1, _ = model_triple()
    path = _write(tmp_path / "pair.json", standard_space(1), {"L0": L0, "L1": L1})
    assert run(["maslov", path]) == 1
    assert "L2" in capsys.readouterr().err


def test_non_lagrangian_reports_residual():
    doc = frames_document(standard_space(1), {"L0": np.array([[1.0], [0.0]])})
    with pytest.raises(InputError, match="residual"):
        parse_frames_document(doc)


def test_bad_complex_structure():
    doc = frames_document(standard_space(1), {})
    doc["I"] = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
    with pytest.raises(InputError, match="complex structure"):
        parse_frames_document(doc)


def test_degenerate_triple(tmp_path, capsys):
    L0, L1, _ = model_triple()
    path = _write(tmp_path / "deg.json", standard_space(1), {"L0": L0, "L1": L1, "L2": L0})
    assert run(["maslov", path]) == 2
    assert "residual" in capsys.readouterr().err


@pytest.mark.parametrize("method", ["closed", "zeta", "heat", "galerkin"])
def test_eta_methods(model_doc, method, capsys):
    assert run(["eta", model_doc, "--method", method]) == 0
    assert _report(capsys)["results"]["eta"] == pytest.approx(0.0, abs=1e-3)
    assert run(["eta", model_doc, "--method", method, "--pair", "L1,L2", "--basis", "64"]) == 0
    assert _report(capsys)["results"]["eta"] == pytest.approx(-0.5, abs=1e-3)


def test_eta_all_cross_check(tmp_path, capsys):
    space = standard_space(3)
    from etaform.symplectic import random_transverse_triple

    L0, L1, _ = random_transverse_triple(space, 17)
    path = _write(tmp_path / "p.json", space, {"L0": L0, "L1": L1})
    assert run(["eta", path, "--method", "all", "--basis", "64"]) == 0
    rep = _report(capsys)
    assert rep["status"] == "pass" and rep["diagnostics"]["cross_check"]["passed"]


def test_verify_cocycle0(capsys):
    assert run(["verify", "--suite", "cocycle0", "--count", "50"]) == 0
    rep = _report(capsys)
    assert rep["status"] == "pass" and rep["results"]["max_residual"] < 1e-8


def test_verify_gauge_rotating(capsys):
    assert run(["verify", "--suite", "gauge"]) == 0
    rep = _report(capsys)
    assert rep["results"]["max_f0_diff"] < 1e-6


def test_timeout_is_distinct(capsys):
    assert run(["verify", "--suite", "cocycle0", "--count", "100000", "--timeout", "0.05"]) == 4
    assert "resource guard" in capsys.readouterr().err


@pytest.mark.parametrize(
    "args,dim,count",
    [
        (["cp2", "--n-theta", "16", "--n-phi", "32"], 2, 512),
        (["rotating-l1"], 1, 21),
        (["three-param-test"], 3, 125),
    ],
)
def test_example(args, dim, count, tmp_path, capsys):
    out = tmp_path / "fam.json"
    assert run(["example", *args, "--out", str(out)]) == 0
    rep = _report(capsys)
    assert rep["results"]["dim"] == dim and rep["results"]["vertices"] == count
    assert rep["results"]["min_transversality_gap"] >= 0.1
    assert json.loads(out.read_text())["dim"] == dim


def test_example_unknown(tmp_path):
    assert run(["example", "klein-bottle", "--out", str(tmp_path / "x.json")]) == 1


def test_unknown_command():
    assert run(["frobnicate"]) == 1


def test_example_roundtrip_reproduces_results(tmp_path, capsys):
    out = tmp_path / "cp2.json"
    run(["example", "cp2", "--n-theta", "6", "--n-phi", "12", "--out", str(out)])
    capsys.readouterr()
    run(["--threads", "1", "verify", "--suite", "cp2", "--n-theta", "6", "--n-phi", "12"])
    built = _report(capsys)
    run(["--threads", "1", "verify", "--suite", "cp2", "--family", str(out)])
    loaded = _report(capsys)
    assert built["results_digest"] == loaded["results_digest"]


def test_report_file(model_doc, tmp_path):
    path = tmp_path / "report.json"
    assert run(["--report", str(path), "maslov", model_doc]) == 0
    assert json.loads(path.read_text())["command"] == "maslov"
