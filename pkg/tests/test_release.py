from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sitpatch import Constant, PeriodicImpulsive, PiecewiseConstant
from sitpatch.release import schedule_from_dict, schedule_impulses_in, schedule_rate_at


def test_constant():
    s = Constant(12.5)
    assert schedule_rate_at(s, 3.0) == 12.5
    assert schedule_impulses_in(s, 0.0, 100.0) == []
    assert s.windowed_average(7.0) == 12.5
    with pytest.raises(ValueError):
        Constant(-1.0)


def test_periodic_impulses_include_time_zero():
    s = PeriodicImpulsive(300.0, 10.0)
    assert s.mass == 3000.0
    assert s.rate_at(5.0) == 0.0
    assert s.impulses_in(0.0, 30.0) == [(0.0, 3000.0), (10.0, 3000.0), (20.0, 3000.0)]
    # half-open interval: the right end is excluded, the left included
    assert s.impulses_in(10.0, 20.0) == [(10.0, 3000.0)]
    assert s.impulses_in(10.5, 10.6) == []
    assert s.impulses_in(5.0, 5.0) == []


@pytest.mark.parametrize("rate,tau", [(-1.0, 10.0), (1.0, 0.0), (1.0, -2.0)])
def test_periodic_validation(rate, tau):
    with pytest.raises(ValueError):
        PeriodicImpulsive(rate, tau)


@given(st.floats(min_value=0.0, max_value=1e3), st.floats(min_value=0.5, max_value=30.0),
       st.floats(min_value=0.0, max_value=200.0), st.floats(min_value=0.0, max_value=200.0))
def test_periodic_mass_is_conserved_over_windows(rate, tau, t0, length):
    # [DERIVED] the number of multiples of tau in [t0, t0+length)
    s = PeriodicImpulsive(rate, tau)
    imp = s.impulses_in(t0, t0 + length)
    expected = [k * tau for k in range(0, 2000) if t0 <= k * tau < t0 + length]
    assert [t for t, _ in imp] == pytest.approx(expected)
    assert all(m == pytest.approx(tau * rate) for _, m in imp)


def test_periodic_windowed_average_equals_rate_on_whole_periods():
    s = PeriodicImpulsive(200.0, 10.0)
    assert s.windowed_average(10.0) == pytest.approx(200.0)
    assert s.windowed_average(20.0) == pytest.approx(200.0)
    # a window of 15 days can catch two impulses
    assert s.windowed_average(15.0) == pytest.approx(2 * 2000.0 / 15.0)


def test_piecewise_constant():
    s = PiecewiseConstant((0.0, 10.0, 20.0), (5.0, 0.0, 8.0))
    assert s.rate_at(-1.0) == 0.0
    assert s.rate_at(0.0) == 5.0
    assert s.rate_at(9.999) == 5.0
    assert s.rate_at(10.0) == 0.0
    assert s.rate_at(1e6) == 8.0
    assert s.breakpoints_in(0.0, 20.0) == [10.0]
    assert s.windowed_average(10.0) == pytest.approx(8.0)
    assert s.windowed_average(20.0) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0, 0.0), (1.0, 2.0))
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0,), (1.0, 2.0))


@pytest.mark.parametrize(
    "s", [Constant(3.0), PeriodicImpulsive(2.0, 7.0), PiecewiseConstant((0.0, 4.0), (1.0, 2.0))]
)
def test_schedule_round_trip(s):
    assert schedule_from_dict(s.to_dict()) == s


def test_unknown_schedule_kind():
    with pytest.raises(ValueError, match="kind"):
        schedule_from_dict({"kind": "pulsed"})
