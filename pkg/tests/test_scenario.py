from __future__ import annotations

import csv
import dataclasses
import json

import numpy as np
import pytest

from critlab.degree import ZeroRecord
from critlab.errors import InvalidParams
from critlab.jets import Jet3
from critlab.scenario import (CHECKS, OUTPUT_ROOT_ENV, ScenarioConfig, Verdict, _verdicts,
                              exit_code, load_config, output_dir_for, run_scenario, sweep)

from conftest import scenario_config

DISK = {"family": "disk", "params": {"r": 1.0}}


def _cfg(**kw):
    return ScenarioConfig(dict(DISK), {"kind": "constant", "lambda": 1.0}, **kw)


def test_config_validation():
    with pytest.raises(InvalidParams):
        ScenarioConfig({"family": "torus"}, {"kind": "constant"})
    with pytest.raises(InvalidParams):
        ScenarioConfig(dict(DISK), {"kind": "sine"})
    with pytest.raises(InvalidParams):
        _cfg(mesh_h=0.0)
    with pytest.raises(InvalidParams):
        _cfg(epsilon=-1.0)
    with pytest.raises(InvalidParams):
        _cfg(checks=["degree_one", "bogus"])
    with pytest.raises(InvalidParams):
        _cfg(theta_samples=0)


def test_load_toml_and_json(tmp_path):
    (tmp_path / "a.toml").write_text(
        'name = "t"\nmesh_h = 0.1\n[domain]\nfamily = "ellipse"\n[domain.params]\na = 2.0\nb = 1.0\n'
        '[nonlinearity]\nkind = "gelfand"\nlambda = 0.5\n')
    (tmp_path / "b.json").write_text(json.dumps({
        "name": "t", "mesh_h": 0.1, "domain": {"family": "ellipse", "params": {"a": 2.0, "b": 1.0}},
        "nonlinearity": {"kind": "gelfand", "lambda": 0.5}}))
    a, b = load_config(tmp_path / "a.toml"), load_config(tmp_path / "b.json")
    assert a.to_dict() == b.to_dict()
    nl = a.nonlinearity_obj()
    assert (nl.kind, nl.lam) == ("gelfand", 0.5)
    assert a.domain_obj().family == "ellipse"


def test_spline_csv_relative_to_config(tmp_path):
    t = 2 * np.pi * np.arange(30) / 30
    (tmp_path / "pts.csv").write_text("x,y\n" + "\n".join(f"{np.cos(s)},{np.sin(s)}" for s in t))
    (tmp_path / "c.json").write_text(json.dumps({"domain": {"family": "spline", "params": {"csv": "pts.csv"}},
                                                 "nonlinearity": {"kind": "constant"}}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.domain_obj().area == pytest.approx(np.pi, rel=1e-2)


def test_with_value():
    cfg = scenario_config("dumbbell_0.9")
    new = cfg.with_value("domain.params.w", 0.6)
    assert new.domain["params"]["w"] == 0.6 and cfg.domain["params"]["w"] == 0.9
    assert cfg.with_value("nonlinearity.lambda", 2.0).nonlinearity_obj().lam == 2.0
    with pytest.raises(InvalidParams):
        cfg.with_value("nonlinearity.nope", 1)
    with pytest.raises(InvalidParams):
        cfg.with_value("mesh.h", 1)


def test_exit_code_contract():
    p, f, i = (Verdict("x", s) for s in ("pass", "fail", "inconclusive"))
    assert exit_code([p, p]) == 0
    assert exit_code([p, f, i]) == 1
    assert exit_code([p, i]) == 2
    assert exit_code([p, Verdict("y", "fail", asserted=False)]) == 0
    assert exit_code([]) == 0


def test_output_dir(monkeypatch, tmp_path):
    cfg = _cfg(name="abc", output_dir=str(tmp_path / "explicit"))
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert output_dir_for(cfg) == tmp_path / "explicit"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert output_dir_for(cfg) == tmp_path / "root" / "abc"
    assert output_dir_for(cfg, tmp_path / "cli") == tmp_path / "cli"


def test_disk_scenario_passes(scenario):
    r = scenario("disk_constant")
    assert [v.name for v in r.verdicts] == list(CHECKS)
    assert all(v.status == "pass" for v in r.verdicts), [v.to_dict() for v in r.verdicts]
    assert r.exit_code == 0


def test_unresolved_zero_makes_verdicts_inconclusive(scenario):
    an = scenario("disk_constant").analysis
    bad = ZeroRecord(np.array([0.5, 0.0]), "unresolved", 0.0, 0,
                     Jet3.from_array((0.5, 0.0), np.zeros(10)))
    deg = dataclasses.replace(an.degree, zeros=an.degree.zeros + [bad], consistent=False)
    vs = {v.name: v for v in _verdicts(dataclasses.replace(an, degree=deg),
                                       an.config.nonlinearity_obj(), list(CHECKS))}
    assert vs["unique_critical"].status == "inconclusive"
    assert vs["poincare_hopf_consistent"].status == "inconclusive"
    assert vs["degree_one"].status == "pass"


def test_solve_failure_is_inconclusive(tmp_path):
    cfg = ScenarioConfig(dict(DISK), {"kind": "gelfand", "lambda": 3.0}, mesh_h=0.1, name="fold")
    r = run_scenario(cfg, write=True, out_dir=tmp_path)
    assert r.exit_code == 2
    assert all(v.status == "inconclusive" for v in r.verdicts)
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["error"].startswith("FoldBeforeTarget")


def test_gelfand_sweep_mu1_decreasing():
    cfg = ScenarioConfig(dict(DISK), {"kind": "gelfand", "lambda": 0.5}, mesh_h=0.1,
                         checks=["semistable"], name="g")
    rows = sweep(cfg, "nonlinearity.lambda", [0.5, 1.0, 1.5, 1.9], write=False)
    mu = [r["mu1"] for r in rows]
    assert np.all(np.diff(mu) < 0) and mu[-1] > 0
    assert all(r["exit_code"] == 0 for r in rows)


def test_sweep_writes_table(tmp_path):
    cfg = _cfg(mesh_h=0.1, checks=["semistable", "degree_one"], name="s")
    rows = sweep(cfg, "domain.params.r", [1.0, 0.8], write=True, out_dir=tmp_path)
    assert [r["value"] for r in rows] == [1.0, 0.8]
    with open(tmp_path / "sweep.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in table] == [1.0, 0.8]
    assert {r["winding"] for r in table} == {"1"}
    assert (tmp_path / "s_000" / "report.json").exists()


def test_sweep_records_failures():
    rows = sweep(_cfg(mesh_h=0.1), "domain.params.r", [-1.0], write=False)
    assert rows[0]["exit_code"] == 2 and rows[0]["error"]
    assert sweep(_cfg(), "domain.params.r", [], write=False) == []
