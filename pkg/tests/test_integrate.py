from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitpatch import (
    Constant,
    DomainError,
    IntegrationError,
    IntegrationOptions,
    OutcomeKind,
    PeriodicImpulsive,
    PiecewiseConstant,
    classify_outcome,
    detect_extinction,
    integrate,
    mat_exp_2x2,
    uniform_bounds,
)
from sitpatch._io import csv_text
from sitpatch.integrate import OutcomeReport, integrate_system
from sitpatch.model import sterile_drift_matrix

from .oracles import expm_taylor, reference_trajectory

Y0 = (80.0, 30.0, 20.0, 0.0, 70.0, 30.0, 30.0, 0.0)


def test_options_validation():
    with pytest.raises(ValueError):
        IntegrationOptions(method="euler")
    with pytest.raises(ValueError):
        IntegrationOptions(dt_max=0.0)
    assert IntegrationOptions().with_(t_end=5.0).t_end == 5.0


def test_initial_state_validation(base):
    with pytest.raises(DomainError):
        integrate(base, Constant(0.0), [1.0] * 7)
    with pytest.raises(DomainError):
        integrate(base, Constant(0.0), [1, 1, 1, 1, -1, 1, 1, 1])


@pytest.mark.parametrize("rate", [0.0, 200.0])
def test_matches_scipy_reference_constant(base, rate):
    # [DERIVED] SciPy DOP853 at rtol=atol=1e-12 as oracle
    opts = IntegrationOptions(t_end=60.0, rel_tol=1e-10, abs_tol=1e-12)
    traj = integrate(base, Constant(rate), Y0, opts)
    ref = reference_trajectory(base, rate, Y0, traj.times)
    assert np.allclose(traj.states, ref, rtol=1e-7, atol=1e-8)


def test_matches_scipy_reference_impulsive(base):
    opts = IntegrationOptions(t_end=45.0, rel_tol=1e-10, abs_tol=1e-12)
    sch = PeriodicImpulsive(200.0, 10.0)
    traj = integrate(base, sch, Y0, opts)
    ref = reference_trajectory(base, 0.0, Y0, traj.times, impulses=(10.0, 2000.0))
    assert np.allclose(traj.states, ref, rtol=1e-7, atol=1e-8)


def test_impulse_jump_is_exact(base):
    sch = PeriodicImpulsive(300.0, 10.0)
    traj = integrate(base, sch, Y0, IntegrationOptions(t_end=35.0))
    assert traj.impulse_times.tolist() == [0.0, 10.0, 20.0, 30.0]
    for t, pre in zip(traj.impulse_times, traj.pre_impulse_states):
        post = traj.states[np.searchsorted(traj.times, t)]
        jump = post - pre
        assert jump[3] == pytest.approx(3000.0, rel=1e-15)
        assert np.all(np.delete(jump, 3) == 0.0)
    # the first pre-impulse state is the initial condition
    assert np.array_equal(traj.pre_impulse_states[0], Y0)


def test_csv_layout(base):
    traj = integrate(base, PeriodicImpulsive(100.0, 2.5), Y0, IntegrationOptions(t_end=5.0))
    rows = traj.csv_rows()
    assert rows[0] == ["t", "E1", "F1", "M1", "M1s", "E2", "F2", "M2", "M2s", "event"]
    imp_rows = [r for r in rows[1:] if r[-1] == "impulse"]
    # impulses at 0, 2.5, 5 each give a pre and a post row
    assert [r[0] for r in imp_rows] == ["0", "0", "2.5", "2.5", "5", "5"]
    assert float(imp_rows[1][4]) - float(imp_rows[0][4]) == pytest.approx(250.0)
    times = [float(r[0]) for r in rows[1:]]
    assert times == sorted(times)
    # 12 significant digits at most
    assert all(len(c.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 12 for r in rows[1:] for c in r[:-1])


def test_samples_on_the_grid(base):
    traj = integrate(base, Constant(10.0), Y0, IntegrationOptions(t_end=10.0, sample_every=0.5))
    assert np.allclose(traj.times, np.arange(0.0, 10.01, 0.5))


def test_deterministic_output(base):
    sch = PeriodicImpulsive(250.0, 7.0)
    a = csv_text(integrate(base, sch, Y0, IntegrationOptions(t_end=100.0)).csv_rows())
    b = csv_text(integrate(base, sch, Y0, IntegrationOptions(t_end=100.0)).csv_rows())
    assert a == b


def test_piecewise_breakpoints_are_step_boundaries(base):
    # sterile males alone: exact solution is piecewise linear-exponential
    sch = PiecewiseConstant((0.0, 3.3), (100.0, 0.0))
    opts = IntegrationOptions(t_end=8.0, rel_tol=1e-11, abs_tol=1e-12)
    traj = integrate(base, sch, np.zeros(8), opts)
    A = sterile_drift_matrix(base)
    # [DERIVED] x(t) = A^{-1}(e^{At} - I) (rate, 0) during the release
    x33 = np.linalg.solve(A, (expm_taylor(A, 3.3) - np.eye(2)) @ np.array([100.0, 0.0]))
    x8 = expm_taylor(A, 8.0 - 3.3) @ x33
    assert traj.states[-1][[3, 7]] == pytest.approx(x8, rel=1e-8)
    assert np.all(traj.states[:, [0, 1, 2, 4, 5, 6]] == 0.0)


def test_sterile_subsystem_matches_matrix_exponential(base):
    # one impulse-free interval after an impulse at t = 0
    sch = PeriodicImpulsive(300.0, 10.0)
    opts = IntegrationOptions(t_end=9.0, sample_every=0.25, rel_tol=1e-11, abs_tol=1e-12)
    traj = integrate(base, sch, np.zeros(8), opts)
    A = sterile_drift_matrix(base)
    for t, y in zip(traj.times, traj.states):
        exact = mat_exp_2x2(A, t) @ np.array([3000.0, 0.0])
        assert y[[3, 7]] == pytest.approx(exact, rel=1e-9)


def test_rk4_fourth_order_convergence(base):
    # smooth, impulse-free problem; errors measured against a dt/16 solution
    opts = IntegrationOptions(method="rk4", t_end=20.0, sample_every=20.0)
    y0 = (150.0, 50.0, 40.0, 100.0, 120.0, 60.0, 40.0, 50.0)
    sols = {}
    for dt in (0.125, 0.0625, 1 / 128):
        sols[dt] = integrate(base, Constant(100.0), y0, opts.with_(dt_max=dt)).terminal
    e1 = np.linalg.norm(sols[0.125] - sols[1 / 128])
    e2 = np.linalg.norm(sols[0.0625] - sols[1 / 128])
    # error(dt) = C dt^4 against a dt/16 reference gives e1/e2 = (1 - 16^-4)/(2^-4 - 16^-4) = 16.06
    assert 14.0 < e1 / e2 < 18.5


def test_rk4_negative_step_is_an_error(base):
    # a large female load with dt = 1 overshoots the logistic egg term
    opts = IntegrationOptions(method="rk4", t_end=10.0, dt_max=1.0, sample_every=10.0)
    with pytest.raises(IntegrationError, match="negative"):
        integrate(base, Constant(0.0), (0.0, 500.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0), opts)
    # the adaptive stepper rejects and retries instead
    traj = integrate(base, Constant(0.0), (0.0, 500.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                     opts.with_(method="dopri5"))
    assert traj.states.min() >= 0.0


def test_tolerance_underflow_raises():
    def rhs(y, rate):
        return np.array([1.0 / max(1e-30, 1.0 - y[0]) ** 3])

    opts = IntegrationOptions(t_end=2.0, dt_min=1e-6)
    with pytest.raises(IntegrationError, match="underflow"):
        integrate_system(rhs, [0.0], Constant(0.0), opts, 0, ("x",), (0,))


@settings(max_examples=25)
@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=8, max_size=8),
    st.floats(min_value=0.0, max_value=600.0),
)
def test_nonnegative_and_invariant_region(frac, rate):
    from sitpatch import ModelParams

    p = ModelParams()
    y0 = np.asarray(frac) * np.array([p.K1, 80, 80, 500, p.K2, 80, 80, 500])
    traj = integrate(p, Constant(rate), y0, IntegrationOptions(t_end=100.0))
    assert traj.states.min() >= 0.0
    assert traj.column("E1").max() <= p.K1 * (1 + 1e-12)
    assert traj.column("E2").max() <= p.K2 * (1 + 1e-12)


def test_bounds_along_trajectory(base):
    y0 = (190.0, 300.0, 10.0, 0.0, 170.0, 10.0, 500.0, 0.0)
    sch = PeriodicImpulsive(200.0, 10.0)
    traj = integrate(base, sch, y0, IntegrationOptions(t_end=300.0))
    b = uniform_bounds(base, 10.0, sch.windowed_average(10.0))
    F = traj.column("F1") + traj.column("F2")
    M = traj.column("M1") + traj.column("M2")
    Ms = traj.column("M1s") + traj.column("M2s")
    assert F.max() <= max(F[0], b.C_F) * (1 + 1e-8)
    assert M.max() <= max(M[0], b.C_M) * (1 + 1e-8)
    assert Ms.max() <= max(Ms[0], b.C_Ms) * (1 + 1e-8)


def test_detect_extinction_semantics(base):
    traj = integrate(base, Constant(500.0), (2, 5, 4, 0, 3, 5, 3, 0), IntegrationOptions(t_end=400.0))
    t = detect_extinction(traj, 1e-2)
    assert t is not None
    i = int(np.searchsorted(traj.times, t))
    assert np.all(traj.wild_max()[i:] < 1e-2)
    assert traj.wild_max()[i - 1] >= 1e-2
    with pytest.raises(ValueError):
        detect_extinction(traj, 0.0)
    # already below threshold at the start
    flat = integrate(base, Constant(0.0), np.zeros(8), IntegrationOptions(t_end=5.0))
    assert detect_extinction(flat) == 0.0


def test_outcome_report_invariant():
    with pytest.raises(ValueError):
        OutcomeReport(OutcomeKind.EXTINCTION, None, np.zeros(8))
    with pytest.raises(ValueError):
        OutcomeReport(OutcomeKind.PERSISTENCE, 3.0, np.zeros(8))


@pytest.mark.parametrize(
    "schedule,kind",
    [
        (Constant(0.0), OutcomeKind.PERSISTENCE),
        (Constant(500.0), OutcomeKind.EXTINCTION),
        (PeriodicImpulsive(200.0, 10.0), OutcomeKind.PERIODIC),
        (PeriodicImpulsive(300.0, 10.0), OutcomeKind.EXTINCTION),
    ],
)
def test_classification(base, schedule, kind):
    rep = classify_outcome(base, schedule, Y0)
    assert rep.kind == kind
    if kind == OutcomeKind.EXTINCTION:
        assert rep.extinction_time < 2000


def test_short_horizon_is_undetermined(base):
    rep = classify_outcome(base, Constant(0.0), (2, 5, 4, 0, 3, 5, 3, 0), IntegrationOptions(t_end=30.0))
    assert rep.kind == OutcomeKind.UNDETERMINED


def test_total_sterile_mass_decays_at_death_rate(base):
    # diffusion conserves the sterile total; only mortality removes it
    traj = integrate(base, PeriodicImpulsive(100.0, 10.0), np.zeros(8),
                     IntegrationOptions(t_end=9.0, rel_tol=1e-11, abs_tol=1e-12))
    tot = traj.column("M1s") + traj.column("M2s")
    assert tot == pytest.approx(1000.0 * np.exp(-base.mu_s * traj.times), rel=1e-9)
    assert math.isclose(tot[0], 1000.0)
