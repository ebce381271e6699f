import json
import math

import numpy as np
import pytest

from kramerslab.cli import main, read_snapshots
from kramerslab.config import RunConfig
from kramerslab.experiments import simulate

QUICK_INI = "[run]\nT = 0.5\nn_perturbations = 4\n[time]\ndt = 0.01\n"


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "quick.ini"
    path.write_text(QUICK_INI)
    return str(path)


def test_rate_json_single_eps(capsys):
    assert main(["rate", "--eps", "0.2", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["k"] == pytest.approx(4 * math.sqrt(2) / math.pi, rel=1e-14)
    assert doc["tau"] == pytest.approx(25 * math.exp(-25), rel=1e-12)
    assert set(doc) >= {"k", "tau", "Z_asym"}


def test_rate_json_lists_for_several_eps(capsys):
    assert main(["rate", "--eps", "0.3,0.2", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["tau"]) == 2 and len(doc["Z_asym"]) == 2


def test_rate_table_output(capsys):
    assert main(["rate", "--potential", "sextic"]) == 0
    assert capsys.readouterr().out.startswith("k = ")


def test_check_passes_for_quartic(tmp_path, capsys):
    assert main(["check", "--eps", "0.3", "--out", str(tmp_path)]) == 0
    assert "int_J0_tau_over_gamma" in capsys.readouterr().out
    assert (tmp_path / "assumptions.csv").is_file() and (tmp_path / "lemma_L0.csv").is_file()


@pytest.mark.parametrize("argv", [["rate", "--potential", "triple"], ["rate", "--eps", "0.3,abc"],
                                  ["simulate", "--eps", "0.05"], ["rate", "--config", "/nonexistent.ini"],
                                  ["simulate", "--u0", "2.5"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_simulate_writes_outputs_and_snapshots_round_trip(tmp_path, quick_config, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", quick_config, "--eps", "0.3", "--out", str(out)]) == 0
    snaps = read_snapshots(out / "snapshots.csv")
    assert set(snaps) == {"t", "x", "u", "rho", "log_gamma"}
    times = np.unique(snaps["t"])
    assert times[0] == 0.0 and times[-1] == pytest.approx(0.5)
    # full precision survives the text round trip
    run = simulate(RunConfig(T=0.5, dt=0.01), 0.3)
    last = snaps["u"][snaps["t"] == times[-1]]
    np.testing.assert_array_equal(last, run.traj.states[-1])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mass_drift"] <= 1e-12
    header = (out / "diagnostics.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "u_plus", "u_minus"]


def test_sweep_writes_report_and_plot_data(tmp_path, quick_config, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", quick_config, "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    assert code == (0 if all(report["verdicts"].values()) else 1)
    for name in ("rates.csv", "limit_u_plus.dat", "error_sup_tracking_error.dat", "overlay_eps0.3.dat"):
        assert (out / name).is_file()


def test_sweep_reports_byte_identical(tmp_path, quick_config, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["sweep", "--config", quick_config, "--out", str(a), "--seed", "7"])
    main(["sweep", "--config", quick_config, "--out", str(b), "--seed", "7"])
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_failing_criterion_exits_1(tmp_path, capsys):
    # steps of 0.5 are far too coarse to track the limit ODE within the cap
    path = tmp_path / "coarse.ini"
    path.write_text("[run]\nT = 1\nn_perturbations = 3\n[time]\ndt = 0.5\n")
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "C5_tracking_cap" in capsys.readouterr().err


def test_rayleigh_command(tmp_path, quick_config, capsys):
    assert main(["rayleigh", "--config", quick_config, "--eps", "0.35,0.3", "--out", str(tmp_path), "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert len(rows) == 2
    assert (tmp_path / "rayleigh.csv").is_file()
