import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sllnlab.scaling import (
    InadmissiblePlan, NotDoublingAdmissible, ToeplitzWeights, base_condition, block_aggregate, c_const, d_ap,
    doubling_bounds, kappa_const, parse_scaling, plan_base, power, power_log, recursion_constants, select_base, table,
    toeplitz_transform,
)


# ---------------------------------------------------------------- normalizers


def test_power_doubling_exact():
    b = doubling_bounds(power(1.5))
    assert b.C_low == pytest.approx(2**1.5, rel=1e-12)
    assert b.C_high == pytest.approx(2**1.5, rel=1e-12)
    assert b.points >= 1000


def test_identity_doubling():
    b = doubling_bounds(power(1.0))
    assert b.C_low == pytest.approx(2.0, rel=1e-12) and b.C_high == pytest.approx(2.0, rel=1e-12)


def test_power_log_doubling_finite():
    b = doubling_bounds(power_log(0.8, 1.2), 1.0, 1e6)
    assert 1 < b.C_low <= b.C_high < math.inf


def test_not_doubling_admissible():
    with pytest.raises(NotDoublingAdmissible, match="not doubling-admissible"):
        doubling_bounds(table([1, 10, 40, 1000], [1, 2, 2, 50]), 1.0, 1e3)


def test_grid_too_coarse():
    with pytest.raises(ValueError):
        doubling_bounds(power(1.0), points=10)


def test_parse_scaling():
    assert parse_scaling("power(1.5)") == power(1.5)
    assert parse_scaling("power_log(0.8, 1.2)") == power_log(0.8, 1.2)
    t = parse_scaling("table(1:1, 10:5, 100:30)")
    assert t(10.0) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        parse_scaling("power(1, 2)")
    with pytest.raises(ValueError):
        parse_scaling("cosh(1)")


def test_table_log_linear_interpolation():
    t = table([1, 100], [1, 100])
    assert t(10.0) == pytest.approx(10.0)


@given(st.floats(0.05, 1.0), st.floats(0.0, 3.0))
def test_power_log_nondecreasing(H, rho):
    x = np.geomspace(1, 1e8, 500)
    v = power_log(H, rho)(x)
    assert np.all(np.diff(v) >= 0)


# ---------------------------------------------------------------- base selection and constants


def test_select_base_examples():
    assert select_base(2**1.5, 1.0) == 2
    assert select_base(2**1.5, 2.0) == 8
    assert select_base(1.05, 2.0, 64) is None


def test_select_base_exhaustive_scan():
    # a = 2..7 all fail at C = 2^1.5, p = 2
    for a in range(2, 8):
        assert not base_condition(2**1.5, a, 2.0)[0]
    assert base_condition(2**1.5, 8, 2.0)[0]


@given(st.floats(1.01, 8.0), st.floats(0.1, 4.0))
def test_selection_satisfies_its_inequality(C, p):
    a = select_base(C, p)
    if a is not None:
        ok, _ = base_condition(C, a, p)
        assert ok
        k = a.bit_length() - 1
        assert C**k > max(a, a * 2 ** (p - 1))


@given(st.floats(1.01, 8.0), st.floats(1.0, 4.0))
def test_c_below_one_when_selected_p_at_least_one(C, p):
    a = select_base(C, p)
    if a is not None:
        assert c_const(a, p, C) < 1


def test_c_can_exceed_one_below_p_one():
    # the base inequality alone does not force c < 1 when p < 1
    C, p = 2.05, 0.5
    assert select_base(C, p) == 2
    assert c_const(2, p, C) >= 1
    with pytest.raises(InadmissiblePlan):
        plan_base([C], p, strict=True)


def test_recursion_constants_examples():
    assert d_ap(2, 2) == 4
    assert d_ap(3, 1) == 4
    rc = recursion_constants(2, 2, 2**1.5)
    assert rc.c == pytest.approx(0.375)
    assert rc.D_ap == 4


@pytest.mark.parametrize("p", [0.5, 1, 1.5, 2, 3])
def test_d_ap_literal_sum(p):
    for a in range(2, 17):
        literal = 2 ** (p - 1) * (sum((a - j) ** (p - 1) for j in range(1, a)) + (a - 1))
        assert d_ap(a, p) == pytest.approx(literal, rel=1e-14)


def test_recursion_constants_refuse_inadmissible():
    with pytest.raises(InadmissiblePlan, match="inadmissible"):
        recursion_constants(2, 2, 1.5)


def test_kappa_const():
    assert kappa_const(2, 1, 2**1.5) == pytest.approx(2 / 2**1.5)


def test_plan_base_prints_inequality():
    with pytest.raises(InadmissiblePlan, match=r"C_low\^floor\(log2 a\)"):
        plan_base([2.0], 1.0, a=2)
    plan = plan_base([2.0], 1.0, a=2, strict=False)
    assert not plan.admissible and "<=" in plan.inequalities[0]


def test_plan_base_multi_base():
    plan = plan_base([2**1.5, 2**1.5], 2.0, a=(8, 16))
    assert plan.a == (8, 16) and plan.admissible


# ---------------------------------------------------------------- Toeplitz


def test_toeplitz_reference_weights():
    tw = ToeplitzWeights((power(1.0),), 2)
    for n in range(10):
        for k in range(n + 1):
            assert tw.weight((n,), (k,)) == pytest.approx(2.0 ** (k - n - 1), rel=1e-14)
        assert math.fsum(tw.weight((n,), (k,)) for k in range(n + 1)) == pytest.approx(1 - 2.0 ** (-n - 1), abs=1e-15)


def test_toeplitz_support():
    tw = ToeplitzWeights((power(1.0), power(2.0)), 3)
    assert tw.weight((2, 2), (3, 0)) == 0.0
    assert tw.weight((2, 2), (1, 2)) > 0


phi_strategy = st.one_of(
    st.floats(0.2, 3.0).map(power),
    st.tuples(st.floats(0.1, 1.0), st.floats(0.0, 2.0)).map(lambda t: power_log(*t)),
)


@given(st.lists(phi_strategy, min_size=1, max_size=3), st.integers(2, 5), st.data())
def test_toeplitz_row_sum_telescopes(phis, a, data):
    tw = ToeplitzWeights(tuple(phis), a)
    n = tuple(data.draw(st.integers(0, 5)) for _ in phis)
    import itertools

    ws = [tw.weight(n, k) for k in itertools.product(*(range(x + 1) for x in n))]
    assert all(w >= 0 for w in ws)
    total = math.fsum(ws)
    assert total == pytest.approx(tw.row_sum(n), abs=1e-12)
    assert total <= 1 + 1e-12


def test_toeplitz_transform_zero_and_ones():
    tw = ToeplitzWeights((power(1.0),), 2)
    assert np.all(toeplitz_transform(tw, np.zeros(21), 20).t == 0)
    assert np.all(toeplitz_transform(tw, np.ones(21), 20).t <= 1)


def test_toeplitz_transform_inverse_sequence():
    tw = ToeplitzWeights((power(1.0),), 2)
    t = toeplitz_transform(tw, 1.0 / (np.arange(41) + 1.0), 40).t
    # t(0) = t(1) = 1/2 exactly; strictly decreasing afterwards
    assert t[0] == pytest.approx(0.5) and t[1] == pytest.approx(0.5)
    assert np.all(np.diff(t[1:]) < 0)
    assert t[-1] < 0.06


@given(st.integers(1, 2), st.floats(0.1, 0.9))
def test_toeplitz_tail_sup_nonincreasing(d, rate):
    n_max = 20 if d == 1 else 12
    tw = ToeplitzWeights((power(1.0),) * d, 2)
    k = np.indices((n_max + 1,) * d).max(axis=0)
    T = toeplitz_transform(tw, rate**k, n_max).tail_sup
    assert np.all(np.diff(T) <= 0)


def test_toeplitz_matches_explicit_double_sum():
    tw = ToeplitzWeights((power(1.0), power_log(0.5, 1.0)), 2)
    rng = np.random.default_rng(0)
    s = rng.random((6, 6))
    t = toeplitz_transform(tw, s, 5).t
    for m in [(0, 0), (3, 2), (5, 5)]:
        want = sum(tw.weight(m, (i, j)) * s[i, j] for i in range(6) for j in range(6))
        assert t[m] == pytest.approx(want, rel=1e-12)


def test_block_aggregate_positive_field():
    vals = np.ones((4, 4))
    # each of the 4 blocks of size 2x2 has maximal sum 4
    assert block_aggregate(vals, 2, (1, 1)) == 16
