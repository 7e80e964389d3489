import csv
import json

import numpy as np
import pytest

from seir_pmp.cli import (
    CONFIG_KEYS,
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_NONCONVERGED,
    EXIT_OK,
    EXIT_UNREACHABLE,
    ConfigError,
    forecast,
    main,
    parse_config,
)
from seir_pmp.data import SolverGrid, synth_twin
from seir_pmp.forward import solve_forward

TWIN = """\
source = twin
twin_theta = theta_star.csv
twin_days = 20
population = 100000
initial_infected = 50
stride = 2
windows = 0,10,20
substeps = 10
tau_base = 3e-3
tol = 1e-8
max_iters = 3000
"""


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def twin_dir(tmp_path):
    (tmp_path / "theta_star.csv").write_text("t,beta,epsilon,gamma,mu\n0,0.4,0.2,0.1,0.006\n10,0.3,0.2,0.1,0.004\n")
    (tmp_path / "run.cfg").write_text(TWIN + f"out = {tmp_path / 'out'}\n")
    return tmp_path


def test_parse_config_types_and_paths(tmp_path):
    cfg = parse_config("region = US  # trailing comment\nwindows = 0, 30,60\nstride=1\n"
                       "confirmed = data/c.csv\nstep_control = no\nmu0 = 0.003\n", tmp_path)
    assert cfg.region == "US" and cfg.windows == (0, 30, 60) and cfg.stride == 1
    assert cfg.confirmed == tmp_path / "data/c.csv"
    assert cfg.step_control is False and cfg.mu0 == 0.003
    assert cfg.tau == (0.1, 1e-3, 1e-3, 1e-5)


@pytest.mark.parametrize("text", [
    "colour = blue", "stride = 2\nstride = 3", "stride = two", "windows = 0,30,30",
    "weight_policy = median", "beta_bounds = 1", "beta_bounds = 2,1", "just words",
    "source = web", "step_control = maybe", "tau_base = 0",
])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_keys_documented_in_readme():
    from pathlib import Path
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    missing = [k for k in CONFIG_KEYS if f"`{k}`" not in readme]
    assert not missing


def test_fit_predict_control_workflow(twin_dir, capsys):
    out = twin_dir / "out"
    assert main(["fit", "--config", str(twin_dir / "run.cfg")]) == EXIT_OK
    report = json.loads((out / "fit_report.json").read_text())
    assert set(report) >= {"loss_history", "iterations", "converged", "misfit"}
    assert all(report["converged"]) and len(report["iterations"]) == 2
    assert report["misfit"]["max_I"] <= 0.01 and report["misfit"]["max_D"] <= 0.01
    theta = read(out / "theta.csv")
    assert list(theta[0]) == ["t", "beta", "epsilon", "gamma", "mu", "R0"]
    assert len(theta) == 10 * 10 + 1
    for row in theta:
        assert 0 <= float(row["beta"]) <= 5 and 0.2 <= float(row["epsilon"]) <= 0.25
        assert float(row["R0"]) == pytest.approx(float(row["beta"]) / (float(row["gamma"]) + float(row["mu"])))
    traj = read(out / "trajectory.csv")
    assert list(traj[0]) == ["t", "S", "E", "I", "R", "D"] and float(traj[-1]["t"]) == 20
    assert read(out / "plots" / "infections.csv")[0].keys() == {"t", "reported", "fitted"}

    assert main(["predict", "--config", str(twin_dir / "run.cfg"), "--horizon", "0"]) == EXIT_OK
    fc = read(out / "forecast.csv")
    assert len(fc) == 1 and fc[0] == traj[-1]
    assert main(["predict", "--config", str(twin_dir / "run.cfg"), "--horizon", "5"]) == EXIT_OK
    assert float(read(out / "forecast.csv")[-1]["t"]) == 25

    rows = [r for r in traj if 10 < float(r["t"]) <= 20 and float(r["t"]) % 2 == 0]
    I10 = float(next(r for r in traj if float(r["t"]) == 10)["I"])
    D10 = float(next(r for r in traj if float(r["t"]) == 10)["D"])
    with open(twin_dir / "sched.csv", "w") as fh:
        fh.write("t,I_d,D_d\n")
        for r in rows:
            fh.write(f"{r['t']},{I10 + 0.5 * (float(r['I']) - I10)},{D10 + 0.5 * (float(r['D']) - D10)}\n")
    ctl_cfg = twin_dir / "ctl.cfg"
    ctl_cfg.write_text(TWIN.replace("tol = 1e-8", "tol = 1e-6") + f"control_start = 10\nout = {out}\n")
    code = main(["control", "--config", str(ctl_cfg), "--schedule", str(twin_dir / "sched.csv")])
    assert code == EXIT_OK
    comp = read(out / "control" / "comparison.csv")
    assert np.mean([float(r["beta_diff"]) for r in comp]) < 0
    assert "mean beta" in capsys.readouterr().out


def test_forecast_with_generating_theta_extends_twin():
    theta = (0.3, 0.2, 0.1, 0.004)
    U0 = (1e5 - 50, 0, 50, 0, 0)
    long = solve_forward(U0, theta, SolverGrid(tuple(np.arange(0, 31.0)), 10))
    short = solve_forward(U0, theta, SolverGrid(tuple(np.arange(0, 21.0)), 10))
    fc = forecast(short.final, theta, 20.0, 10, 10)
    np.testing.assert_allclose(fc[-1, 1:], long.final, rtol=1e-12)
    still = forecast(short.final, (0.0, 0.2, 0.1, 0.004), 20.0, 10, 10)
    assert np.all(np.diff(still[50:, 3]) <= 0)


def test_nonconvergence_exit_code_still_writes_report(twin_dir):
    cfg = twin_dir / "run.cfg"
    cfg.write_text(cfg.read_text().replace("max_iters = 3000", "max_iters = 2"))
    assert main(["fit", "--config", str(cfg)]) == EXIT_NONCONVERGED
    report = json.loads((twin_dir / "out" / "fit_report.json").read_text())
    assert report["converged"] == [False, False]


def test_unreachable_schedule_exit_code(twin_dir):
    assert main(["fit", "--config", str(twin_dir / "run.cfg")]) == EXIT_OK
    (twin_dir / "sched.csv").write_text("t,I_d,D_d\n12,1e7,10\n14,9e7,20\n")
    ctl_cfg = twin_dir / "ctl.cfg"
    ctl_cfg.write_text(TWIN.replace("max_iters = 3000", "max_iters = 100")
                       + f"control_start = 10\nout = {twin_dir / 'out'}\n")
    assert main(["control", "--config", str(ctl_cfg), "--schedule", str(twin_dir / "sched.csv")]) \
        == EXIT_UNREACHABLE
    (twin_dir / "sched.csv").write_text("t,I_d,D_d\n12,1e3,10\n14,2e3,0\n")
    assert main(["control", "--config", str(ctl_cfg), "--schedule", str(twin_dir / "sched.csv")]) \
        == EXIT_UNREACHABLE


def test_config_and_data_error_codes(tmp_path, fixtures_dir, capsys):
    assert main(["fit", "--config", str(tmp_path / "none.cfg")]) == EXIT_CONFIG
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"confirmed = {fixtures_dir / 'confirmed_small.csv'}\n"
                   f"deaths = {fixtures_dir / 'deaths_small.csv'}\nregion = Nowhere\npopulation = 1e6\n"
                   "stride = 1\n")
    assert main(["fit", "--config", str(cfg)]) == EXIT_DATA
    assert "not found" in capsys.readouterr().err
    cfg.write_text(f"confirmed = {tmp_path / 'missing.csv'}\ndeaths = {tmp_path / 'missing.csv'}\n")
    assert main(["fit", "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["predict", "--config", str(cfg), "--out", str(tmp_path / "empty"),
                 "--horizon", "3"]) == EXIT_CONFIG


def test_region_flag_overrides_config(tmp_path, fixtures_dir):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"confirmed = {fixtures_dir / 'confirmed_small.csv'}\n"
                   f"deaths = {fixtures_dir / 'deaths_small.csv'}\nregion = Nowhere\npopulation = 1e6\n"
                   f"stride = 1\nmax_iters = 50\nout = {tmp_path / 'o'}\n")
    code = main(["fit", "--config", str(cfg), "--region", "Korea, South"])
    assert code in (EXIT_OK, EXIT_NONCONVERGED)
    assert json.loads((tmp_path / "o" / "fit_report.json").read_text())["region"] == "Korea, South"


def test_twin_seed_makes_noisy_runs_reproducible(twin_dir):
    cfg = twin_dir / "run.cfg"
    cfg.write_text(cfg.read_text().replace("max_iters = 3000", "max_iters = 20") + "noise = 0.02\n")
    main(["fit", "--config", str(cfg), "--seed", "3", "--out", str(twin_dir / "a")])
    main(["fit", "--config", str(cfg), "--seed", "3", "--out", str(twin_dir / "b")])
    main(["fit", "--config", str(cfg), "--seed", "4", "--out", str(twin_dir / "c")])
    a = (twin_dir / "a" / "plots" / "infections.csv").read_text()
    assert a == (twin_dir / "b" / "plots" / "infections.csv").read_text()
    assert a != (twin_dir / "c" / "plots" / "infections.csv").read_text()
    assert (twin_dir / "a" / "theta.csv").read_text() == (twin_dir / "b" / "theta.csv").read_text()


@pytest.mark.parametrize("theta,outcome", [
    ("0.0945,0.2,0.1,0.005", "extinction"), ("0.42,0.2,0.1,0.005", "persistence")])
def test_simulate(tmp_path, capsys, theta, outcome):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(f"theta = {theta}\ninitial = 9990,0,10,0,0\ndays = 50\nbirth_rate = 0.001\n"
                   f"fraction_days = 500\nfraction_dt = 0.5\nout = {tmp_path}\n")
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "sigma =" in text and "R0 =" in text and outcome in text
    traj = read(tmp_path / "trajectory.csv")
    assert len(traj) == 501
    assert read(tmp_path / "fractions.csv")[0].keys() == {"t", "s", "e", "i"}


def test_simulate_without_transmission_keeps_s(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(f"theta = 0,0.2,0.1,0.005\ninitial = 9990,5,10,0,0\ndays = 20\nfraction_days = 10\n"
                   f"out = {tmp_path}\n")
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    S = {float(r["S"]) for r in read(tmp_path / "trajectory.csv")}
    assert S == {9990.0}


def test_twin_series_matches_synth(twin_dir):
    from seir_pmp.cli import make_twin, load_config
    cfg = load_config(twin_dir / "run.cfg")
    s = make_twin(cfg)
    grid = SolverGrid(tuple(np.arange(0, 21.0)), 10)
    th = np.zeros((20, 10, 4))
    th[:10] = (0.4, 0.2, 0.1, 0.006)
    th[10:] = (0.3, 0.2, 0.1, 0.004)
    ref, _ = synth_twin(th, (1e5 - 50, 0, 50, 0, 0), grid)
    np.testing.assert_array_equal(s.I_c, ref.I_c)
