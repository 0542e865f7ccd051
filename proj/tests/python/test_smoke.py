import json
import math

import pytest

import flowsilt


def test_mass_moments():
    assert flowsilt.mixed_moment("bm1d", [None] * 4, [1.0] * 4)[0] == pytest.approx(19.0, abs=1e-8)
    assert flowsilt.mixed_moment("bm1d", [None, None], [0.5, 0.9])[0] == pytest.approx(1.5, abs=1e-10)
    assert [flowsilt.term_count(k) for k in (1, 2, 3, 4)] == [1, 2, 5, 14]


def test_gaussian_first_moment():
    value, _ = flowsilt.mixed_moment("bm1d", [{"center": [0.0]}], [0.5])
    assert value == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-10)


def test_simulation_is_reproducible():
    a = flowsilt.terminal_masses("bm1d", n=20, replicates=50, seed=3)
    b = flowsilt.terminal_masses("bm1d", n=20, replicates=50, seed=3, threads=2)
    assert a == b
    assert len(a) == 50
    assert all(m >= 0 for m in a)


def test_green_and_mollifier():
    assert flowsilt.green("bm1d", 1.0, [0.0]) == pytest.approx(0.5)
    assert flowsilt.green("bm1d", 1.0, [1.0]) == pytest.approx(0.5 * math.exp(-1.0))
    assert flowsilt.mollified_integral("bm1d", 2.0, 0.1) == pytest.approx(0.5, abs=1e-8)


def test_genealogy():
    topo, gens = flowsilt.classify(["(1;0,0)", "(1;0,1)", "(1;1,0)", "(1;1,1)"])
    assert topo == "VA"
    assert gens == [0, 1, 1]
    assert flowsilt.arrangement_count("IV") == 48


def test_report_and_errors(tmp_path):
    cfg = {"sim": {"n": 10, "replicates": 50, "seed": 4}, "suites": [{"name": "genealogy", "tuples": 200}]}
    ok, digest, rows = flowsilt.run_report(json.dumps(cfg), str(tmp_path))
    assert ok
    assert len(digest) == 16
    assert rows and all(r["pass"] for r in rows)
    assert (tmp_path / "report.md").exists()
    with pytest.raises(flowsilt.FlowsiltError, match="sim.seed"):
        flowsilt.run_report(json.dumps({"sim": {"n": 10}}))
