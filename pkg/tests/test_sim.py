import math

import numpy as np
import pytest

from nonovershoot import (BlowupError, GainConfig, Scenario, bound_report,
                          es_control, example_lyapunov_spec, refine_dt,
                          rk4_step, run_scenario, sweep)
from nonovershoot.sim import fmt, gains_text

from conftest import chain_integrator


def chain_gains():
    return GainConfig(c=(2.0, 1.5), kappa=1.1, lam=4.0, beta=0.8, omega=60.0)


# --- integrator -------------------------------------------------------------------

def test_rk4_exponential_decay():
    x = np.array([1.0])
    for k in range(10):
        x = rk4_step(lambda t, v: -v, k * 0.1, x, 0.1)
    assert x[0] == pytest.approx(math.exp(-1.0), abs=1e-6)


def test_rk4_constant_field():
    x = rk4_step(lambda t, v: np.zeros_like(v), 0.0, np.array([2.0, -3.0]), 0.5)
    assert x == pytest.approx([2.0, -3.0])


def test_rk4_unit_rate_exact():
    x = np.array([1.0])
    for k in range(4):
        x = rk4_step(lambda t, v: np.ones_like(v), k * 0.25, x, 0.25)
    assert x[0] == 2.0


def test_rk4_rejects_bad_step():
    with pytest.raises(ValueError):
        rk4_step(lambda t, v: v, 0.0, np.array([1.0]), 0.0)


def test_rk4_flags_nonfinite():
    with pytest.raises(BlowupError):
        rk4_step(lambda t, v: v * float("inf"), 0.0, np.array([1.0]), 0.1)


def test_refine_dt():
    assert refine_dt(1e-3, 60.0) == 1e-3
    refined = refine_dt(1e-3, 240.0)
    assert refined == pytest.approx(5e-4)
    assert refined <= 2 * math.pi / 240.0 / 40.0
    k = 1e-3 / refine_dt(1e-3, 960.0)
    assert k == pytest.approx(round(k))


# --- run_scenario -----------------------------------------------------------------

def test_regulation_equilibrium_is_exact():
    sys = chain_integrator(2)
    sc = Scenario(x0=(0.0, 0.0), t_end=2.0, dt=1e-3, reference="constant:0")
    traj, rep = run_scenario(sys, "nominal", chain_gains(), sc)
    assert rep.max_h1 <= 1e-9
    assert rep.tail_abs_h1 <= 1e-9
    assert np.max(np.abs(traj.u)) <= 1e-9


def test_trajectory_grid_invariants(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=1.0, dt=1e-3)
    traj, _ = run_scenario(demo, "es", gains, sc)
    assert len(traj.t) == 1001
    steps = np.diff(traj.t)
    assert np.allclose(steps, 1e-3, rtol=0, atol=1e-12)
    for col in (traj.x, traj.h, traj.u, traj.yr, traj.margin):
        assert np.all(np.isfinite(col))
        assert len(col) == len(traj.t)
    assert traj.complete


def test_recorded_input_matches_library_law(demo, gains):
    # the hot-path inline dither must agree with the public control law
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.5, dt=1e-3)
    spec = example_lyapunov_spec(demo, gains, scale=0.0025)
    traj, _ = run_scenario(demo, "es", gains, sc, lyap_spec=spec)
    rng = np.random.default_rng(0)
    for k in rng.integers(0, len(traj.t), size=25):
        want = es_control(spec, gains, traj.t[k], traj.h[k])
        assert traj.u[k] == pytest.approx(want, rel=1e-12)


def test_dither_resolution_precondition(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=1.0, dt=5e-3)
    with pytest.raises(ValueError):
        run_scenario(demo, "es", gains, sc)
    # the same step is fine for the dither-free comparator
    run_scenario(demo, "nussbaum", gains, Scenario(x0=(-0.5, 0.0), t_end=0.1, dt=5e-3))


def test_unknown_controller(demo, gains):
    with pytest.raises(KeyError):
        run_scenario(demo, "pid", gains, Scenario(x0=(0, 0), t_end=1.0, dt=1e-3))


def test_blowup_keeps_partial_trajectory(demo, gains):
    cert = example_lyapunov_spec(demo, gains, scale=1.0)
    sc = Scenario(x0=(-0.5, 0.0), t_end=1.0, dt=1e-3)
    with pytest.raises(BlowupError) as exc_info:
        run_scenario(demo, "es", gains, sc, lyap_spec=cert)
    partial = exc_info.value.partial_trajectory
    assert not partial.complete
    assert 0 < len(partial.t) < 1001
    assert np.all(np.isfinite(partial.x))


def test_safety_filter_mode_column(demo, gains):
    sc = Scenario(x0=(0.2, 0.0), t_end=2.0, dt=1e-3)
    traj, rep = run_scenario(demo, "safety-filter", gains, sc)
    # mode decided from the margin sign at every sample
    assert np.all((traj.margin >= 0) == (traj.mode == 0))
    assert set(np.unique(traj.mode)) <= {0, 1}
    assert rep.min_margin < 0  # starts unsafe


def test_csv_format(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.01, dt=1e-3)
    traj, _ = run_scenario(demo, "es", gains, sc)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,x1,x2,h1,h2,u,yr,H,mode"
    assert len(lines) == 12
    cell = lines[1].split(",")[1]
    assert cell == fmt(-0.5)
    assert lines[1].split(",")[-1] == "-"


def test_csv_seventeen_digits():
    assert fmt(1 / 3) == "0.33333333333333331"
    assert fmt(0.1) == "0.10000000000000001"


def test_determinism_bitwise(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=1.0, dt=1e-3)
    a, _ = run_scenario(demo, "es", gains, sc)
    b, _ = run_scenario(demo, "es", gains, sc)
    assert a.to_csv() == b.to_csv()


def test_gain_floor_holds_along_demo_trajectory(demo, gains):
    # the squared input gain never grazes its declared floor on a real run
    sc = Scenario(x0=(-0.5, 0.0), t_end=5.0, dt=1e-3)
    traj, _ = run_scenario(demo, "es", gains, sc)
    g2 = (0.2 * np.sin(traj.x[:, 1]) + 1.2) ** 2
    assert np.min(g2) >= demo.xi1 - 1e-12


def test_envelope_violation_small_for_both_inits(demo, gains):
    for x0 in ((-0.5, 0.0), (0.2, 0.0)):
        sc = Scenario(x0=x0, t_end=5.0, dt=1e-3)
        _, rep = run_scenario(demo, "es", gains, sc)
        assert rep.envelope_violation <= 0.1


def test_report_states_delta_source(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.5, dt=1e-3)
    _, rep = run_scenario(demo, "es", gains, sc, delta_est=0.37,
                          delta_source="study")
    assert rep.delta_est == 0.37
    assert rep.delta_source == "study"


def test_scalar_plant_paths():
    # n = 1: no stabilizing stages, trivial error coordinate
    sys = chain_integrator(1)
    g = GainConfig(c=(2.0,), kappa=1.1, lam=4.0, beta=0.8, omega=60.0)
    sc = Scenario(x0=(0.4,), t_end=4.0, dt=1e-3, reference="constant:1")
    traj, rep = run_scenario(sys, "nominal", g, sc)
    assert abs(traj.x[-1, 0] - 1.0) < 1e-3
    from nonovershoot import DriftBound, LyapunovSpec

    spec = LyapunovSpec(DriftBound(growth_coeffs=(0.0, 0.1), offset=0.0), 2.0, 1.1)
    traj2, _ = run_scenario(sys, "es", g, sc, lyap_spec=spec)
    assert traj2.complete and np.all(np.isfinite(traj2.h))


# --- report ------------------------------------------------------------------------

def test_report_on_reference_run():
    sys = chain_integrator(2)
    sc = Scenario(x0=(0.0, 0.0), t_end=1.0, dt=1e-3, reference="constant:0")
    _, rep = run_scenario(sys, "nominal", chain_gains(), sc)
    assert rep.max_h1 == pytest.approx(0.0, abs=1e-12)
    assert rep.envelope_violation == pytest.approx(0.0, abs=1e-12)


def test_report_envelope_anchored_at_initial_errors(demo, gains):
    sc = Scenario(x0=(0.2, 0.0), t_end=1.0, dt=1e-3)
    traj, rep = run_scenario(demo, "es", gains, sc, delta_est=0.1)
    bounds = bound_report(gains, "descending")
    # h(0) = [0.2, 0.8]; envelope at t=0 is d2 + delta + 0.2 + 2*0.8
    env0 = bounds.envelope(np.abs(traj.h[0]), gains.c, 0.0, 0.1)
    assert env0 == pytest.approx(0.30303 + 0.1 + 0.2 + 1.6, abs=1e-5)
    assert rep.envelope_violation == 0.0
    assert rep.delta_est == 0.1
    assert rep.delta_source == "configured"


def test_report_csv_row(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.5, dt=1e-3)
    _, rep = run_scenario(demo, "es", gains, sc)
    row = rep.csv_row().split(",")
    assert len(row) == 7
    assert row[0] == "example/es/x0=-0.5|0"
    assert row[1] == gains_text(gains)


def test_gains_text(gains):
    assert gains_text(gains) == "c1=2;c2=1.5;kappa_n=1.1;lambda=4;beta=0.8;omega=60"


# --- sweep -------------------------------------------------------------------------

def test_sweep_empty_grid(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.1, dt=1e-3)
    result = sweep(demo, "es", gains, sc, {})
    assert result.to_csv().splitlines()[0].endswith("verdict")
    assert len(result.rows) == 1  # product of nothing is one empty point


def test_sweep_invalid_point_not_simulated(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.1, dt=1e-3)
    result = sweep(demo, "es", gains, sc, {"lambda": [4.0, 0.1]}, mode="descending")
    assert result.rows[0][1] == "valid"
    assert result.rows[1][0] is None
    assert result.rows[1][1].startswith("invalid")
    lines = result.to_csv().splitlines()
    assert len(lines) == 3


def test_sweep_refines_dt_for_fast_dither(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.05, dt=1e-3)
    result = sweep(demo, "es", gains, sc, {"omega": [60.0, 960.0]})
    assert all(v == "valid" for _, v, _ in result.rows)


def test_sweep_row_order_stable(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.05, dt=1e-3)
    grid = {"kappa_n": [1.1, 3.0], "beta": [0.8, 0.9]}
    result = sweep(demo, "es", gains, sc, grid)
    labels = [row[2] for row in result.rows]
    assert labels == [{"kappa_n": 1.1, "beta": 0.8}, {"kappa_n": 1.1, "beta": 0.9},
                      {"kappa_n": 3.0, "beta": 0.8}, {"kappa_n": 3.0, "beta": 0.9}]


def test_sweep_rejects_unknown_key(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.05, dt=1e-3)
    with pytest.raises(KeyError):
        sweep(demo, "es", gains, sc, {"mass": [1.0]})


def test_sweep_x0_axis(demo, gains):
    sc = Scenario(x0=(-0.5, 0.0), t_end=0.05, dt=1e-3)
    result = sweep(demo, "es", gains, sc, {"x0": [(-0.5, 0.0), (0.2, 0.0)]})
    assert len(result.rows) == 2
    assert "x0=0.2|0" in result.rows[1][0].scenario
