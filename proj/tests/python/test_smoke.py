import json
import math

import numpy as np
import pytest

import efwi


def test_damping_and_speedup():
    assert efwi.dual_damping_factor(0, 4.0) == 0.0
    assert efwi.dual_damping_factor(4, 4.0) == pytest.approx(0.5)
    assert [efwi.sketch_speedup_percent(q, 134) for q in (2, 5, 10, 15)] == [98.5, 96.2, 92.5, 88.8]
    assert efwi.schedule_iterations([(3, 6, 0.5), (3, 7.5, 0.5), (3, 13, 0.5)], 20, 10) == 410


def test_brocher_is_vectorized():
    vs = efwi.brocher_vs(np.array([2.7, 6.0]))
    assert vs.shape == (2,)
    assert vs[0] == pytest.approx(1.0448, abs=5e-4)
    assert efwi.brocher_vs(6.0) == pytest.approx(vs[1])


def test_projection_lands_in_both_sets():
    p, s, ok = efwi.project(7.0, 0.0, (2.0, 1.0, 6.0, 3.5), (-0.5, 1.0, -0.6), (-0.5, 1.0, 0.4))
    assert ok
    assert 2.0 - 1e-8 <= p <= 6.0 + 1e-8
    assert 1.0 - 1e-8 <= s <= 3.5 + 1e-8
    assert -0.6 - 1e-8 <= s - 0.5 * p <= 0.4 + 1e-8
    assert efwi.project(3.0, 1.5, (2.0, 1.0, 6.0, 3.5), (-0.5, 1.0, -0.6), (-0.5, 1.0, 0.4))[:2] == (3.0, 1.5)


def test_scenario_arrays_have_grid_shape():
    sc = efwi.scenario("double-circle", sources=8)
    grid = sc["grid"]
    assert (grid.nz, grid.nx) == (100, 100)
    assert sc["truth"]["vp"].shape == (100, 100)
    assert sc["frequencies"] == [2.5, 5.0]
    assert sc["iterations"] == 70
    assert sc["truth"]["vp"].max() > sc["initial"]["vp"].max()
    with pytest.raises(efwi.EfwiError):
        efwi.scenario("nope")


def test_grid_roundtrip(tmp_path):
    g = efwi.Grid(4, 3, 10.0, 12.0)
    img = np.arange(12, dtype=float).reshape(4, 3)
    efwi.write_grid(tmp_path / "a.grid", g, img, "vp")
    g2, back, name, unit = efwi.read_grid(tmp_path / "a.grid")
    assert (g2.nz, g2.nx, name, unit) == (4, 3, "vp", "m/s")
    np.testing.assert_array_equal(back, img)


def test_run_manifest_is_deterministic(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({
        "scenario": "homogeneous",
        "scenario_options": {"nz": 24, "nx": 24, "sources": 2, "receivers": 8},
        "schedule": {"stages": [{"freqs": [3.0], "iterations": 2}]},
        "seed": 5,
    }))
    a = efwi.run_manifest(manifest, output_dir=tmp_path / "a")
    b = efwi.run_manifest(manifest, output_dir=tmp_path / "b", mode="wri")
    assert len(a["log"]) == 2
    assert all(math.isfinite(r["data_res"]) for r in a["log"])
    assert (tmp_path / "a" / "log.csv").read_bytes() != b""
    c = efwi.run_manifest(manifest, output_dir=tmp_path / "c")
    assert (tmp_path / "a" / "log.csv").read_bytes() == (tmp_path / "c" / "log.csv").read_bytes()
    assert b["model"]["vp"].shape == (24, 24)
