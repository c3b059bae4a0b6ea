import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtmpc.harness import Config, ConfigError, PlanCache, build_scenario, load_config, run_closed_loop
from dtmpc.harness.cli import main
from dtmpc.harness.config import from_dict
from dtmpc.harness.experiments import run_adaptation, run_comparison
from dtmpc.harness.logs import BOX_COLUMNS, read_csv, write_box_csv, write_run_csv
from dtmpc.harness.metrics import (CD_BANDS, BandSummary, band_of, bin_cycles, compute_metrics,
                                   trend_holds)
from dtmpc.harness.scenarios import RESTRICTED_CAPS
from dtmpc.harness.sim import STEP_COLUMNS, CycleRecord, RunLog
from dtmpc.plant import PI

SPEC_COLUMNS = ("t", "theta", "theta_dot", "u", "u_star", "s", "phi", "omega", "alpha", "d")


def synthetic_log(n=1001, dt=0.002, **cols):
    t = np.arange(n) * dt
    steps = {c: np.zeros(n) for c in STEP_COLUMNS}
    steps["t"] = t
    for k, v in cols.items():
        steps[k] = np.broadcast_to(np.asarray(v, float), (n,)).copy()
    return RunLog("synthetic", 0, steps, [], [], [], settled=True, end_time=float(t[-1]))


# ---------------------------------------------------------------- config

def test_defaults_match_parameter_table():
    c = Config()
    assert (c.ocp.horizon, c.ocp.dt, c.ocp.disturbance) == (45, 0.010, 20.0)
    assert (c.gains.lam, c.gains.eta, c.gains.alpha_min, c.gains.alpha_max, c.gains.dalpha_max) == \
        (4.0, 0.1, 40.0, 140.0, 300.0)
    assert (c.ocp.u_max, c.ocp.du_max, c.ocp.theta_dot_max) == (2.0, 4.5, 15.0)
    assert c.ocp.Q == (10.0, 0.1) and c.ocp.R == 1.0 and c.ocp.M == 0.01
    assert (c.ocp.drag_nominal, c.ocp.drag_error) == (1.0e-3, 1.0e-3)


def test_toml_overrides(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('[plant]\npreset = "scoop"\n[ocp]\nhorizon = 30\nQ = [5, 1]\n'
                 '[scenario]\nkind = "a"\ncontroller = "tmpc"\n[smid]\nprior_cd = [0, 0.006]\n')
    c = load_config(p)
    assert c.plant.preset == "scoop" and c.ocp.horizon == 30 and c.ocp.Q == (5.0, 1.0)
    assert c.smid.prior_cd == (0.0, 0.006) and c.gains == Config().gains
    assert build_scenario(c).kind == "restricted-tube"


@pytest.mark.parametrize("data", [
    {"ocp": {"horizn": 45}},
    {"bogus": {}},
    {"ocp": {"horizon": 4.5}},
    {"ocp": {"dt": "fast"}},
    {"scenario": {"kind": "moon"}},
    {"scenario": {"controller": "pid"}},
    {"gains": {"alpha_min": 200.0}},
    {"smid": {"enabled": 1}},
    {"scenario": {"inner_dt": 0.05}},
])
def test_invalid_config_rejected(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_malformed_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[ocp\nhorizon = ")
    with pytest.raises(ConfigError):
        load_config(p)


# ------------------------------------------------------------- scenarios

@pytest.mark.parametrize("theta,cap", [(0.0, 0.2), (1.6 * PI, 0.1), (2.5 * PI, 0.05), (3.2 * PI, 0.1),
                                       (4.0 * PI, 0.2), (5 * PI, 0.2)])
def test_restricted_caps(theta, cap):
    assert RESTRICTED_CAPS(theta) == cap


@pytest.mark.parametrize("theta,scale", [(0.5, 0.0), (1.7 * PI, 0.5), (2.5 * PI, 1.0), (3.3 * PI, 0.5),
                                         (4.5 * PI, 0.0)])
def test_regional_disturbance_scales(theta, scale):
    sc = build_scenario(Config(), kind="b")
    assert sc.disturbance.region_level(theta) == pytest.approx(scale * 20.0)
    assert sc.ocp.omega_max(theta) == pytest.approx(math.radians(7.5))


def test_adaptation_scenario_uses_prior_midpoint():
    sc = build_scenario(Config().replace(smid={"prior_cd": (0.0, 6e-3)}), kind="adapt", controller="adtmpc")
    assert sc.ocp.model.drag_nominal == pytest.approx(3e-3) and sc.ocp.model.drag_error == pytest.approx(3e-3)
    assert sc.setpoints == (5 * PI, PI) and sc.cycle and sc.adaptive
    assert sc.ocp.omega_max(1.0) == pytest.approx(math.radians(11.5))
    assert sc.prior.contains(sc.truth_vector)


# --------------------------------------------------------------- metrics

def test_zero_input_has_zero_effort():
    assert compute_metrics(synthetic_log(u=0.0)).effort == 0.0


def test_unit_input_for_two_seconds():
    m = compute_metrics(synthetic_log(n=1000, u=1.0))
    assert m.effort == pytest.approx(2.0, rel=1e-12)
    assert m.mean_ancillary == pytest.approx(1.0)


def test_constant_tracking_error_of_one_degree():
    m = compute_metrics(synthetic_log(theta=math.radians(1.0)))
    assert m.mean_error_deg == pytest.approx(1.0, rel=1e-12)


def test_rise_time_and_absent_rise():
    log = synthetic_log(n=501)
    log.steps["theta"] = np.linspace(0.0, 1.0, 501)
    m = compute_metrics(log, setpoint=1.0, band=0.1)
    assert m.rise_time == pytest.approx(0.9, abs=0.002)
    assert compute_metrics(log, setpoint=2.0, band=0.1).rise_time is None


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=50), st.lists(st.floats(-15, 15), min_size=2, max_size=50))
def test_metrics_nonnegative(us, ws):
    n = min(len(us), len(ws))
    log = synthetic_log(n=n)
    log.steps["u"], log.steps["theta_dot"] = np.array(us[:n]), np.array(ws[:n])
    m = compute_metrics(log)
    assert m.effort >= 0 and m.max_speed >= 0 and m.mean_error_deg >= 0 and m.mean_ancillary >= 0


def test_band_assignment():
    assert band_of(6e-3) == 0 and band_of(4.0001e-3) == 0 and band_of(4e-3) == 1
    assert band_of(2.5e-3) == 1 and band_of(0.6e-3) == 2 and band_of(0.0) == 2 and band_of(7e-3) is None


def test_binning_and_trend():
    def cyc(cd):
        return CycleRecord(0.0, 1.0, 0.0, cd)

    def met(a, e, v):
        from dtmpc.harness.metrics import Metrics
        return Metrics(0.0, 1.0, v, e, a, 1.0)

    per = [(cyc(6e-3), met(0.4, 3.0, 8.0)), (cyc(3e-3), met(0.3, 2.0, 10.0)), (cyc(1e-3), met(0.2, 1.5, 14.0)),
           (cyc(0.9e-3), met(0.2, 1.3, 14.2))]
    bands = bin_cycles(per)
    assert [b.cycles for b in bands] == [1, 1, 2]
    assert bands[2].mean_max_speed == pytest.approx(14.1)
    assert trend_holds(bands)
    worse = bin_cycles(per[:1] + [(cyc(1e-3), met(0.5, 1.0, 14.0))])
    assert not trend_holds(worse)
    assert not trend_holds([BandSummary(b, 0, math.nan, math.nan, math.nan) for b in CD_BANDS])


# ------------------------------------------------------------ closed loop

@pytest.fixture(scope="module")
def regional_runs():
    sc = build_scenario(Config(), kind="b", controller="dtmpc")
    cache = PlanCache()
    return sc, [run_closed_loop(sc, s, cache) for s in range(3)]


def test_hover_stays_put():
    sc = build_scenario(Config(), kind="hover", controller="dtmpc")
    log = run_closed_loop(sc, 0)
    assert log.settled and log.aborted is None
    assert np.max(np.abs(log.steps["theta"])) <= 1e-3


def test_regional_run_reaches_goal_inside_tube(regional_runs):
    sc, logs = regional_runs
    cfg = sc.ocp
    for log in logs:
        st = log.steps
        assert log.settled and log.aborted is None
        assert abs(st["theta"][-1] - 5 * PI) <= math.radians(1.0)
        assert np.all(np.abs(st["theta"] - st["theta_ref"]) <= st["omega"] + 1e-3)
        assert np.all(np.abs(st["s"]) <= st["phi"] * (1 + 1e-3))
        assert np.max(np.abs(st["u"])) <= cfg.u_max
        assert np.max(np.abs(st["theta_dot"])) <= cfg.theta_dot_max
        assert np.all(np.diff(st["t"]) > 0)
        assert all(s.used for s in log.solves)


def test_region_disturbance_is_realized(regional_runs):
    _, logs = regional_runs
    st = logs[0].steps
    inside = (st["theta"] > 2.1 * PI) & (st["theta"] < 2.9 * PI)
    outside = st["theta"] > 4.0 * PI
    assert np.max(np.abs(st["d"][inside])) > 25.0  # base plus regional part
    assert np.max(np.abs(st["d"][outside])) <= 20.0


def test_byte_identical_logs(tmp_path):
    sc = build_scenario(Config(), kind="b", controller="tmpc")
    a = write_run_csv(run_closed_loop(sc, 7), tmp_path / "a.csv")
    b = write_run_csv(run_closed_loop(sc, 7, PlanCache()), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    other = write_run_csv(run_closed_loop(sc, 8), tmp_path / "c.csv")
    assert other.read_bytes() != a.read_bytes()


def test_log_columns(tmp_path, regional_runs):
    _, logs = regional_runs
    header, rows = read_csv(write_run_csv(logs[0], tmp_path / "run.csv"))
    assert tuple(header[:len(SPEC_COLUMNS)]) == SPEC_COLUMNS
    assert len(rows) == len(logs[0])


def test_zero_uncertainty_controllers_agree():
    cfg = Config().replace(ocp={"drag_error": 0.0, "drag_nominal": 0.46e-3, "disturbance": 0.0},
                           plant={"base_disturbance": 0.0}, scenario={"region_bound": 0.0})
    cmp = run_comparison(cfg, "b", 1)
    t, d = cmp.mean("tmpc"), cmp.mean("dtmpc")
    for attr in ("effort", "rise_time", "max_speed"):
        assert getattr(d, attr) == pytest.approx(getattr(t, attr), rel=0.05)


def test_disabled_adaptation_keeps_box(tmp_path):
    cfg = Config().replace(smid={"enabled": False}, scenario={"max_adapt_time": 6.0})
    res = run_adaptation(cfg, "plate", 0)
    assert [b.box for b in res.log.boxes] == [res.prior]
    header, rows = read_csv(write_box_csv(res.log, tmp_path / "box.csv"))
    assert tuple(header) == BOX_COLUMNS and len(rows) == 1


# ------------------------------------------------------------------- cli

def test_cli_run_writes_logs(tmp_path, capsys):
    assert main(["run", "--scenario", "hover", "--controller", "tmpc", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "effort" in out
    files = sorted(p.name for p in tmp_path.iterdir())
    assert "hover_tmpc_seed0.csv" in files and "hover_tmpc_seed0_summary.csv" in files


def test_cli_single_trial_comparison_is_quick(tmp_path, capsys):
    t0 = time.perf_counter()
    assert main(["compare", "--scenario", "b", "--trials", "1", "--out", str(tmp_path)]) == 0
    assert time.perf_counter() - t0 < 60.0
    out = capsys.readouterr().out
    for label in ("Control Effort", "Rise Time", "Maximum Speed", "Mean Tracking Error"):
        assert label in out
    assert (tmp_path / "regional-disturbance_table.csv").exists()


def test_cli_reports_bad_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    p = tmp_path / "bad.toml"
    p.write_text("[ocp]\nhorizon = -1\n")
    assert main(["run", "--config", str(p)]) == 2
    assert "error" in capsys.readouterr().err
