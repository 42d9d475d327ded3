import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sllnlab.fields import VarianceMap
from sllnlab.scaling import power, power_log
from sllnlab.series import (
    CONVERGES, DIVERGES, INCONCLUSIVE, VerdictRule, check_moricz_quasi_orthogonal, check_orthogonal_conditions,
    check_quasi_stationary_condition, corollary_bound_series, dyadic_blocks, klesov_interchange, make_report,
    series_verdict, shell_aggregate,
)


def test_verdict_examples():
    assert series_verdict(np.zeros(5))[0] == CONVERGES
    assert series_verdict(0.5 ** np.arange(10))[0] == CONVERGES
    assert series_verdict(np.ones(10))[0] == DIVERGES
    assert series_verdict(1.2 ** np.arange(10))[0] == DIVERGES
    assert series_verdict([0, 1, 0, 0])[0] == INCONCLUSIVE
    assert series_verdict([1, np.inf, 1])[0] == DIVERGES


def test_verdict_inconclusive_band():
    # slowly decaying shells: tail ratio inside the band, last shells below the floor
    t = np.concatenate([np.full(5, 100.0), 0.99 ** np.arange(20)])
    assert series_verdict(t)[0] == INCONCLUSIVE


@given(st.floats(0.05, 0.9), st.integers(6, 30))
def test_geometric_decay_converges(r, n):
    v, ratio = series_verdict(r ** np.arange(n))
    assert v == CONVERGES and ratio == pytest.approx(r, rel=1e-9)


def test_rule_validation():
    with pytest.raises(ValueError):
        VerdictRule(lo=1.1)


def test_dyadic_blocks():
    np.testing.assert_array_equal(dyadic_blocks(np.arange(1, 8)), [1, 5, 22])
    # incomplete last block is dropped
    np.testing.assert_array_equal(dyadic_blocks(np.ones(9)), [1, 2, 4])


def test_harmonic_blocks_diverge():
    n = np.arange(1, 2**14, dtype=float)
    assert series_verdict(dyadic_blocks(1 / n))[0] == DIVERGES
    assert series_verdict(dyadic_blocks(1 / n**2))[0] == CONVERGES


def test_shell_aggregate():
    out = shell_aggregate([(0, 0), (1, 0), (0, 1), (1, 1), (2, 0)], [1, 2, 3, 4, 5])
    np.testing.assert_array_equal(out, [1, 9, 5])


def test_report_csv_and_order():
    rep = make_report("x", [(1, 0), (0, 0)], [2.0, 1.0])
    assert rep.levels == [(0, 0), (1, 0)]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "n1,n2,term,partial_sum,std_error"
    assert lines[2].startswith("1,0,2.0,3.0")


def test_corollary_series():
    rep = corollary_bound_series(lambda n: 1.0, [power(1.0)], 2, 2.0, 20)
    assert rep.verdict == CONVERGES
    assert rep.total == pytest.approx(sum(4.0**-k for k in range(21)))
    assert corollary_bound_series(lambda n: 0.0, [power(1.0)], 2, 2.0, 5).verdict == CONVERGES
    # g(n) = n^2 against phi(n) = n, p = 2: every term is one
    assert corollary_bound_series(lambda n: n[0] ** 2, [power(1.0)], 2, 2.0, 20).verdict == DIVERGES


@pytest.mark.parametrize("d,power_", [(1, 0.0), (1, 0.5), (2, 0.0), (2, 1.0)])
def test_klesov_interchange_agrees(d, power_):
    n_max = 10 if d == 1 else 8
    out = klesov_interchange(VarianceMap(1.0, power_), d, n_max)
    assert out["direct"] == pytest.approx(out["interchanged"], rel=1e-12)
    assert out["direct"] <= out["bound"] * (1 + 1e-12)


def test_quasi_stationary_examples():
    rep = check_quasi_stationary_condition(lambda i, j: 0.5 ** (np.abs(i) + np.abs(j)), power(1.0), power(1.0))
    assert rep.D == pytest.approx(4.0, rel=1e-12)
    assert float(rep.h(1, 1)[0]) == pytest.approx(4.0, rel=1e-12)
    assert rep.verdict == CONVERGES
    assert rep.chain_holds


def test_quasi_stationary_axis_terms_needed():
    # correlation living on the axes only: the printed chain misses the axis terms
    f = lambda i, j: np.where((np.asarray(i) == 0) | (np.asarray(j) == 0), 1.0 / (1 + np.asarray(i) + np.asarray(j)) ** 0.5, 0.0)
    rep = check_quasi_stationary_condition(f, power(1.0), power(1.0), index_levels=8)
    assert rep.chain_holds
    assert rep.rhs_corrected > rep.rhs_printed


def test_quasi_stationary_divergent_D():
    # phi(n) = sqrt(n): the axis geometric sum has unit terms, so D grows with the truncation
    Ds = [check_quasi_stationary_condition(lambda i, j: np.ones(np.shape(i)), power(0.5), power(1.0), levels=L).D for L in (16, 32, 64)]
    assert Ds[1] == pytest.approx(2 * Ds[0], rel=1e-3) and Ds[2] == pytest.approx(2 * Ds[1], rel=1e-3)
    rep = check_quasi_stationary_condition(lambda i, j: np.ones(np.shape(i)), power(0.5), power(1.0))
    assert rep.verdict == DIVERGES


def test_orthogonal_conditions():
    out = check_orthogonal_conditions(VarianceMap(1.0, 0.0), 1, 2**14 - 1)
    assert out["klesov"]["verdict"] == CONVERGES and out["weakened"]["verdict"] == CONVERGES
    assert out["weakened"]["tail_bound"] == pytest.approx(1 / (2**14 - 1))
    out = check_orthogonal_conditions(VarianceMap(1.0, 1.0), 1, 2**14 - 1)
    assert out["weakened"]["verdict"] == DIVERGES


def test_moricz_flags_sqrt_normalizer():
    lam = power_log(0.5, 0.0)
    out = check_moricz_quasi_orthogonal(lambda m, n: 0.5 ** (m + n), lam, power(1.0), index_levels=12)
    assert out["rho"]["verdict"] == CONVERGES
    assert out["improved"]["failing_axes"] == [1]
    assert not out["improved"]["holds"]


def test_corollary_product_g_geometric():
    rep = corollary_bound_series(lambda n: float(np.prod(n)), [power(1.0), power(1.0)], 2, 2.0, 10)
    assert rep.verdict == CONVERGES
    assert rep.total == pytest.approx(sum(2.0**-i for i in range(11)) ** 2)


def test_basel_partial_sum():
    N = 10_000
    out = check_orthogonal_conditions(VarianceMap(1.0, 0.0), 1, N)
    w = out["weakened"]
    assert abs(w["partial_sum"] - math.pi**2 / 6) <= 1e-4 + w["tail_bound"]


def test_product_variance_both_series_agree():
    # sigma^2(n) = n1 n2: the weakened series is (sum 1/n)^2 and diverges; the Klesov one as well
    out = check_orthogonal_conditions(VarianceMap(1.0, 1.0), 2, 2**9 - 1)
    assert out["klesov"]["verdict"] == out["weakened"]["verdict"] == DIVERGES


def test_moricz_linear_normalizer_and_rho_sum():
    out = check_moricz_quasi_orthogonal(lambda m, n: 0.5 ** (m + n), power(1.0), power(1.0), index_levels=12)
    assert out["improved"]["holds"]
    assert out["rho"]["partial_sum"] == pytest.approx(4.0, rel=1e-5)
