import json

import pytest

from ncdirichlet import cli


def _run(tmp_path, monkeypatch, *args):
    monkeypatch.chdir(tmp_path)
    return cli.main(list(args))


@pytest.fixture
def thm51_file(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "gen", "--family", "thm51", "--blocks", "2,3",
                "--nderiv", "2", "--seed", "7", "--out", "inst.json") == 0
    return tmp_path / "inst.json"


def test_gen_thm51(thm51_file):
    doc = json.loads(thm51_file.read_text())
    assert doc["schema"] == "instance-v1"
    assert doc["provenance"]["seed"] == 7 and doc["provenance"]["family"] == "thm51"
    assert len(doc["derivations"]) == 2 and "C" in doc
    assert doc["algebra"]["block_dims"] == [2, 3]


def test_gen_reim(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "gen", "--family", "reim", "--blocks", "2", "--seed", "1",
                "--out", "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text())["family"] == "reim"


def test_gen_coercivity_failure(tmp_path, monkeypatch, capsys):
    code = _run(tmp_path, monkeypatch, "gen", "--family", "thm52", "--coercivity", "0.5",
                "--seed", "1")
    assert code == 2
    assert "smallest eigenvalue" in capsys.readouterr().err


def test_gen_bad_blocks(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "gen", "--blocks", "0,2") == 2


def test_verify_all_passes(thm51_file, tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "verify", "inst.json", "--samples", "60",
                "--out", "rep.json") == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["schema"] == "report-v1" and rep["status"] == "PASS"
    assert set(rep["results"]) == {"dirichlet", "submarkov", "cp", "lp", "sector"}
    assert rep["seeds"]["samples"] == 60 and rep["grids"]["t"] == [0.01, 0.1, 1.0, 10.0]


def test_verify_cp_fails_on_transpose(tmp_path, monkeypatch):
    _run(tmp_path, monkeypatch, "gen", "--family", "custom-L", "--kind", "transpose",
         "--out", "t.json")
    assert _run(tmp_path, monkeypatch, "verify", "t.json", "--check", "cp", "--out", "rep.json") == 1
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["results"]["cp"]["status"] == "FAIL"
    assert "witness" in rep["results"]["cp"]


def test_verify_malformed(tmp_path, monkeypatch):
    (tmp_path / "bad.json").write_text("{oops")
    assert _run(tmp_path, monkeypatch, "verify", "bad.json") == 3
    (tmp_path / "shape.json").write_text(json.dumps({"algebra": {"block_dims": [2],
                                                                 "trace_weights": [1.0]}}))
    assert _run(tmp_path, monkeypatch, "verify", "shape.json") == 3


def test_triangle_consistent(thm51_file, tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "triangle", "inst.json", "--samples", "60",
                "--out", "tri.json") == 0
    rep = json.loads((tmp_path / "tri.json").read_text())
    for variant in ("plain", "adjoint"):
        legs = rep["triangles"][variant]["legs"]
        assert len(legs) == 4 and all(l["status"] != "FAIL" for l in legs.values())


def test_triangle_non_dirichlet(tmp_path, monkeypatch):
    _run(tmp_path, monkeypatch, "gen", "--family", "custom-L", "--kind", "anti-dissipative",
         "--out", "a.json")
    assert _run(tmp_path, monkeypatch, "triangle", "a.json", "--samples", "40",
                "--out", "tri.json") == 0
    legs = json.loads((tmp_path / "tri.json").read_text())["triangles"]["plain"]["legs"]
    assert all(l["status"] == "FAIL" for l in legs.values())


def test_triangle_corrupted_instance(thm51_file, tmp_path, monkeypatch):
    doc = json.loads(thm51_file.read_text())
    doc["generator"]["matrix"][0][0] = [3.0, 0.0]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert _run(tmp_path, monkeypatch, "triangle", "bad.json", "--out", "tri.json") == 4
    assert json.loads((tmp_path / "tri.json").read_text())["status"] == "INCONSISTENT"


def test_sweep(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "sweep", "--family", "thm51", "--count", "3",
                "--samples", "30", "--out", "s.json") == 0
    rep = json.loads((tmp_path / "s.json").read_text())
    assert sorted(rep["instances"]) == ["0", "1", "2"]


def test_sweep_half_kind_is_consistent(tmp_path, monkeypatch):
    # plain legs all pass and adjoint legs all fail, so no triangle is mixed
    assert _run(tmp_path, monkeypatch, "sweep", "--family", "custom-L", "--kind", "half",
                "--count", "1", "--samples", "40", "--out", "s.json") == 0


def test_grid_parsing(thm51_file, tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "verify", "inst.json", "--check", "submarkov",
                "--t-grid", "0.5,2", "--alpha-grid", "1", "--out", "rep.json") == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["grids"]["t"] == [0.5, 2.0]
    with pytest.raises(SystemExit):
        cli.main(["verify", "inst.json", "--t-grid", "a,b"])
