import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import labprod

DATA = Path(__file__).resolve().parent.parent / "data"
ALL = labprod.ModelParams(beta=-1.25e-4, mu=-2.32e4, A=5.84e7, gamma=1.18)


def test_closed_form_values():
    assert labprod.capacity(3.14e4, 5.84e7, 1.18) == pytest.approx(288.4269665308725, rel=1e-13)
    n = labprod.mean_occupancy(np.array([3.14e4]), ALL)
    assert n[0] == pytest.approx(219.6181302228666, rel=1e-12)
    assert labprod.peak_productivity(ALL) == pytest.approx(3.14e4, rel=0.05)
    lim = labprod.Limiter.linear_ramp(labprod.CapacityLaw(ALL.A, ALL.gamma))
    assert labprod.solve_occupancy_fixed_point(3.14e4, lim, ALL.beta, ALL.mu) == pytest.approx(n[0], rel=1e-12)


def test_vectorized_occupancy_matches_scalar():
    c = np.logspace(3, 6, 7)
    v = labprod.mean_occupancy(c, ALL)
    assert v.shape == (7,)
    for ci, vi in zip(c, v):
        assert labprod.mean_occupancy(ci, ALL) == vi


def test_errors_map_to_python_exceptions():
    with pytest.raises(labprod.PreconditionError):
        labprod.peak_productivity(labprod.ModelParams(beta=1e-4, mu=0.0, A=1e6, gamma=1.0))
    with pytest.raises(labprod.DomainError):
        labprod.CapacityLaw(-1.0, 1.0)
    curve = labprod.BinnedCurve([1e3, 1e4, 1e5], [5.0, 50.0, 40.0])
    with pytest.raises(labprod.IllPosedError):
        labprod.fit(curve)
    assert issubclass(labprod.IllPosedError, labprod.DataError)


def test_simulation_conserves_and_is_seeded():
    grid = labprod.ProductivityGrid(20, 1.0)
    lim = labprod.Limiter.unbounded()
    state = labprod.init_state(grid, lim, workers=500, output_index=6000)
    a = labprod.simulate(grid, lim, state, steps=200_000, seed=42)
    b = labprod.simulate(grid, lim, state, steps=200_000, seed=42)
    final = a["final_state"]
    assert final.workers == 500
    assert final.output_index == 6000
    assert final == b["final_state"]
    assert a["mean"] == b["mean"]
    line = labprod.g_linearity_check(a["mean"], lim, grid)
    assert line.r_squared > 0.9


def test_fit_round_trip():
    curve = labprod.synthetic_curve(ALL)
    assert len(curve) == 50
    assert labprod.chi_square(ALL, curve) <= 1e-20
    r = labprod.fit(curve)
    assert r.converged
    assert r.params.beta == pytest.approx(ALL.beta, rel=1e-3)
    assert r.params.gamma == pytest.approx(ALL.gamma, rel=1e-3)
    assert math.log(r.params.A) == pytest.approx(math.log(ALL.A), rel=1e-3)


def test_pipeline_on_fixture():
    records, rejected = labprod.clean_records_file(str(DATA / "records6.csv"))
    assert [r.firm_id for r in records] == ["F4", "F6"]
    assert sum(rejected.values()) == 4
    pdf = labprod.firm_pdf(records)
    width = math.log(10.0) / 20
    assert sum(pdf["density"]) * width == pytest.approx(1.0, abs=1e-12)
    curve = labprod.mean_workers_curve(records)
    assert curve.n_mean == [2.0, 5.0]


def test_cli_in_process(tmp_path):
    out = tmp_path / "syn"
    code, text, err = labprod.run_cli(["synth", "--kind", "curve", "--out", str(out)])
    assert code == 0, err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert labprod.run_cli(["verify", "bogus"])[0] == 64


def test_verify_closed_form():
    checks = labprod.verify("closed-form")
    assert checks and all(c["passed"] for c in checks)
