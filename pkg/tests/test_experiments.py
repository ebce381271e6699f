import json
import math
from dataclasses import replace

import numpy as np
import pytest

from kramerslab.config import RunConfig, load_config, load_profile, parse_eps_list
from kramerslab.errors import ConfigurationError, FitError
from kramerslab.experiments import (fit_rate, minimality_probe, rayleigh_table, simulate, strictly_decreasing,
                                    sweep)

QUICK = RunConfig(T=0.5, dt=0.01, n_perturbations=6)


def test_fit_rate_recovers_a_power_law():
    eps = [0.4, 0.3, 0.2, 0.1]
    slope, r2 = fit_rate([(e, 3.0 * e**2.5) for e in eps])
    assert slope == pytest.approx(2.5, rel=1e-12)
    assert r2 == pytest.approx(1.0)


def test_fit_rate_matches_numpy_polyfit():
    rng = np.random.default_rng(0)
    eps = np.array([0.35, 0.3, 0.25, 0.2])
    err = eps**1.7 * np.exp(rng.normal(scale=0.1, size=4))
    assert fit_rate(zip(eps, err))[0] == pytest.approx(np.polyfit(np.log(eps), np.log(err), 1)[0], rel=1e-12)


@pytest.mark.parametrize("pts", [
    [(0.3, 1e-3), (0.2, 1e-4)],
    [(0.3, 1e-3), (0.2, 0.0), (0.1, 1e-5)],
    [(0.3, 1e-3), (0.3, 1e-4), (0.3, 1e-5)],
    [(0.3, 1e-3), (0.2, math.nan), (0.1, 1e-5)],
])
def test_fit_rate_refuses_degenerate_input(pts):
    with pytest.raises(FitError):
        fit_rate(pts)


def test_strictly_decreasing():
    assert strictly_decreasing([3.0, 2.0, 1.0])
    assert not strictly_decreasing([3.0, 3.0, 1.0])
    assert strictly_decreasing([1e-14, 2e-14, 0.0])  # all at the floor
    assert not strictly_decreasing([1.0, None, 0.5])


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[potential]\nname = sextic\nshape = 0.25\n[run]\neps = 0.3, 0.25\nT = 1\n"
                    "[time]\ndt = auto\n")
    cfg = load_config(path)
    assert cfg.potential == "sextic" and cfg.potential_params == {"shape": 0.25}
    assert cfg.epsilons == (0.3, 0.25) and cfg.T == 1.0 and cfg.dt is None
    cfg.validate()


@pytest.mark.parametrize("text", ["[run]\nepsilon = 0.3\n", "[grid]\nn_base = many\n", "[extra]\nx = 1\n",
                                  "[potential]\nshape = wide\n"])
def test_config_rejects_unknown_or_bad_settings(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_config(path)


@pytest.mark.parametrize("over", [dict(epsilons=(0.05,)), dict(alpha=1.0), dict(u0=2.0), dict(T=0.0),
                                  dict(theta=0.2), dict(grading="cubic"), dict(dt=-1.0)])
def test_config_validation(over):
    with pytest.raises(ConfigurationError):
        replace(RunConfig(), **over).validate()


def test_eps_list_parsing():
    assert parse_eps_list("0.3, 0.25;0.2") == (0.3, 0.25, 0.2)
    with pytest.raises(ConfigurationError):
        parse_eps_list("0.3, x")


def test_custom_profile_loading(tmp_path):
    path = tmp_path / "u.dat"
    np.savetxt(path, np.column_stack([np.arange(5.0), np.linspace(0.5, 1.5, 5)]))
    np.testing.assert_allclose(load_profile(path, 5), np.linspace(0.5, 1.5, 5))
    with pytest.raises(ConfigurationError):
        load_profile(path, 6)


def test_minimality_probe_is_seeded_and_nonnegative():
    run = simulate(QUICK, 0.3)
    a = minimality_probe(run.traj, run.ctx, 12, seed=5)
    b = minimality_probe(run.traj, run.ctx, 12, seed=5)
    assert a == b and len(a) == 12
    assert a[0] == 0.0
    assert min(a) >= -1e-6
    assert minimality_probe(run.traj, run.ctx, 12, seed=6)[1:] != a[1:]


def test_quick_sweep_structure_and_determinism():
    r1 = sweep(QUICK)
    r2 = sweep(QUICK)
    assert r1.to_json() == r2.to_json()
    assert r1.epsilons == [0.35, 0.3, 0.25]
    doc = json.loads(r1.to_json())
    assert set(doc) == {"epsilons", "per_eps", "fitted_rates", "verdicts", "metadata"}
    assert "out" not in doc["metadata"]["config"]
    assert all(row["status"] == "ok" for row in doc["per_eps"])
    assert set(r1.overlays) == {0.35, 0.3, 0.25}
    assert r1.verdicts["C4_mass_conservation"] and r1.verdicts["C7_minimality"]


def test_parallel_sweep_matches_serial():
    assert sweep(QUICK, workers=3).to_json() == sweep(QUICK).to_json()


def test_stationary_sweep_passes_everything():
    rep = sweep(replace(QUICK, u0=1.0))
    assert rep.passed, rep.failures
    assert max(rep.series("sup_tracking_error")) < 1e-8


def test_sweep_records_failed_runs_instead_of_raising():
    # alpha = 0.2 makes eps^alpha so wide that the I-intervals are empty
    rep = sweep(replace(QUICK, alpha=0.2))
    assert all(r["status"].startswith("error: ConfigurationError") for r in rep.per_eps)
    assert rep.verdicts == {"all_runs_completed": False}


def test_sweep_rejects_out_of_range_and_duplicate_eps():
    with pytest.raises(ConfigurationError):
        sweep(QUICK, epsilons=(0.3, 0.05))
    with pytest.raises(ConfigurationError):
        sweep(QUICK, epsilons=(0.3, 0.3))


def test_rayleigh_table_rows():
    rows = rayleigh_table(QUICK, epsilons=(0.35, 0.3))
    assert [r["epsilon"] for r in rows] == [0.35, 0.3]
    assert all(r["J_eps"] < 0 and r["min_minimality_gap"] >= -1e-6 for r in rows)
