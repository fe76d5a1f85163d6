from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sitpatch import (
    DomainError,
    ModelParams,
    ParameterError,
    SystemState,
    basic_offspring_number,
    cone_flip,
    mating_fraction,
    order_leq,
    uniform_bounds,
    vector_field,
)
from sitpatch.model import _field, male_drift_matrix, sterile_drift_matrix

from .oracles import rhs_reference

nonneg = st.floats(min_value=0.0, max_value=500.0, allow_nan=False)
state8 = st.lists(nonneg, min_size=8, max_size=8)


def test_table1_defaults(base):
    # [PAPER] Table 1 values
    assert (base.b, base.nu_E, base.mu_E, base.mu_F) == (10.0, 0.08, 0.05, 0.1)
    assert (base.mu_M, base.mu_s, base.K1, base.K2) == (0.14, 0.14, 200.0, 180.0)
    assert (base.gamma, base.r, base.alpha, base.beta) == (1.0, 0.5, 0.5, 0.8)


def test_offspring_number_table1(base):
    # [DERIVED] 10 * 0.5 * 0.08 / (0.1 * 0.13) by hand
    assert basic_offspring_number(base) == pytest.approx(0.4 / 0.013, rel=1e-14)
    assert basic_offspring_number(base) == pytest.approx(30.769, abs=5e-4)


@pytest.mark.parametrize(
    "name,value",
    [("r", 1.5), ("r", 0.0), ("gamma", 1.2), ("mu_F", 0.0), ("K1", -1.0), ("d12", 0.0), ("b", -0.1),
     ("alpha", 0.0), ("nu_E", float("nan"))],
)
def test_invalid_parameters_name_the_field(name, value):
    with pytest.raises(ParameterError) as exc:
        ModelParams(**{name: value})
    assert exc.value.name == name
    assert name in str(exc.value)


def test_params_round_trip(base):
    q = ModelParams.from_dict(base.to_dict())
    assert q == base
    assert base.with_(d12=1.0).d12 == 1.0


def test_unknown_parameter_rejected():
    with pytest.raises(ParameterError):
        ModelParams.from_dict({"zeta": 1.0})


def test_mating_fraction_convention():
    assert mating_fraction(0.0, 0.0, 1.0) == 0.0
    assert mating_fraction(0.0, 0.0, 1.0, at_zero=1.0) == 1.0
    assert mating_fraction(3.0, 1.0, 1.0) == pytest.approx(0.75)
    assert mating_fraction(3.0, 1.0, 0.0) == 1.0


@given(st.floats(min_value=1e-300, max_value=1e-3))
def test_mating_fraction_limit_without_sterile_males(eps):
    # [DERIVED] M/(M + gamma*0) = 1 for every M > 0, the limit used for the Jacobian at zero
    assert mating_fraction(eps, 0.0, 0.7) == 1.0


@given(state8, st.floats(min_value=0.0, max_value=1000.0))
def test_field_matches_reference(y, rate):
    p = ModelParams()
    got = vector_field(y, rate, p)
    ref = np.array(rhs_reference(0.0, y, p, rate))
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_field_rejects_negative_state(base):
    with pytest.raises(DomainError, match="M1s"):
        vector_field([1, 1, 1, -1, 1, 1, 1, 1], 0.0, base)
    with pytest.raises(DomainError):
        vector_field([1] * 7, 0.0, base)
    with pytest.raises(DomainError):
        vector_field([1] * 8, -1.0, base)


def test_zero_state_is_equilibrium_without_release(base):
    assert np.all(vector_field(np.zeros(8), 0.0, base) == 0.0)
    f = vector_field(np.zeros(8), 5.0, base)
    assert f[3] == 5.0 and np.count_nonzero(f) == 1


def test_system_state_helpers():
    s = SystemState.from_wild([1, 2, 3, 4, 5, 6], (7, 8))
    assert tuple(s) == (1, 2, 3, 7, 4, 5, 6, 8)
    assert np.array_equal(s.wild(), [1, 2, 3, 4, 5, 6])


@given(state8, state8)
def test_order_is_componentwise_after_flip(u, v):
    assert order_leq(u, v) == bool(np.all(cone_flip(u) <= cone_flip(v)))


@given(state8)
def test_order_reflexive(u):
    assert order_leq(u, u)


def test_order_reverses_sterile_axis():
    u = np.zeros(8)
    v = np.zeros(8)
    v[3] = 1.0
    assert order_leq(v, u) and not order_leq(u, v)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=8, max_size=8),
    st.floats(min_value=0.0, max_value=500.0),
)
def test_flipped_field_is_cooperative_in_invariant_region(frac, rate):
    # off-diagonal entries of the Jacobian in flipped coordinates are >= 0 where E_i <= K_i
    p = ModelParams()
    scale = np.array([p.K1, 50, 50, 50, p.K2, 50, 50, 50])
    y = np.asarray(frac) * scale + np.array([0, 0, 1e-3, 0, 0, 0, 1e-3, 0])
    S = np.diag(cone_flip(np.ones(8)))
    h = 1e-7
    J = np.column_stack([
        (_field(y + h * e, rate, p) - _field(y - h * e, rate, p)) / (2 * h)
        for e in np.eye(8)
    ])
    Jt = S @ J @ S
    off = Jt - np.diag(np.diag(Jt))
    assert off.min() >= -1e-6


def test_uniform_bounds_formulas(base):
    # [DERIVED] hand evaluation of the bound constants
    b = uniform_bounds(base, None, 300.0)
    assert b.C_F == pytest.approx(0.5 * 0.08 * 380 / 0.1)
    assert b.C_M == pytest.approx(0.5 * 0.08 * 380 / 0.14)
    assert b.C_Ms == pytest.approx(300 / 0.14)
    T, C = 10.0, 300.0
    w = uniform_bounds(base, T, C)
    assert w.C_Ms == pytest.approx(T * C / (1 - math.exp(-0.14 * T)) + T * C)
    with pytest.raises(ValueError):
        uniform_bounds(base, None, -1.0)


def test_drift_matrices_are_metzler_with_negative_column_sums(base):
    for A, mu in ((sterile_drift_matrix(base), base.mu_s), (male_drift_matrix(base), base.mu_M)):
        assert A[0, 1] > 0 and A[1, 0] > 0
        # diffusion conserves the total, so each column sums to minus the death rate
        assert np.allclose(A.sum(axis=0), -mu)
