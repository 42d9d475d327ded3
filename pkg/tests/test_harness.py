import numpy as np
import pytest

from sllnlab.fields import FieldGenerator
from sllnlab.harness import (
    SllnExperiment, _tail_sup, block_exponent_check, estimate_sup_increment_moment, geometric_subgrid, refined_sups,
    run_lfss_block_tail, run_slln, sup_bound_expression, theorem_normalizers,
)
from sllnlab.scaling import InadmissiblePlan, power, power_log
from sllnlab.stable import LfssConfig

CFG = LfssConfig((0.8,), 1.5, h=0.25, L=4.0)


def test_geometric_subgrid():
    g = geometric_subgrid(64, 2, extra=(5,))
    assert g[0] == 1 and g[-1] == 64 and 5 in g
    assert np.all(np.diff(g) > 0)
    with pytest.raises(ValueError):
        geometric_subgrid(0)


def test_tail_sup_definition():
    norms = np.array([1, 2, 3, 4])
    vals = np.array([[5.0, 1.0, 3.0, 2.0]])
    np.testing.assert_array_equal(_tail_sup(norms, vals, [1, 2, 4, 5]), [[5.0, 3.0, 2.0, 0.0]])


def _exp(kind, phi, checkpoints, **kw):
    gen = FieldGenerator(kind, 2, alpha=1.5) if kind != "iid_gauss" else FieldGenerator(kind, 2)
    return SllnExperiment(gen, "rect", (phi,), checkpoints, **kw)


def test_zero_field_tail_sup_is_zero():
    res = run_slln(_exp("zero", power(1.5), (4, 16, 64), replicates=4))
    assert np.all(res.values == 0) and res.decay_ratio == 0.0


def test_iid_decay_and_control():
    alpha = 1.5
    ok = run_slln(_exp("iid_sas", power_log(1 / alpha, 1 / alpha + 0.5), (16, 64, 256), replicates=16, seed=3, theorem_mode=False))
    assert np.all(np.diff(ok.values, axis=1) <= 0)
    assert ok.decayed and ok.expectation_met
    ctl = run_slln(_exp("iid_sas", power(1 / (2 * alpha)), (16, 64, 256), replicates=16, seed=3, theorem_mode=False, negative_control=True))
    assert not ctl.decayed and ctl.expectation_met
    assert ctl.to_csv().splitlines()[0].startswith("checkpoint,rep_0")


def test_theorem_mode_refuses_inadmissible():
    with pytest.raises(InadmissiblePlan):
        run_slln(_exp("iid_gauss", power(0.5), (4, 16), p=2.0))


def test_sphere_geometry():
    gen = FieldGenerator("iid_gauss", 2)
    exp = SllnExperiment(gen, "sphere", (power(1.5),), (4, 16, 64), replicates=8, norm="l2", p=2.0)
    res = run_slln(exp)
    assert res.decayed


def test_experiment_validation():
    gen = FieldGenerator("iid_gauss", 2)
    with pytest.raises(ValueError):
        SllnExperiment(gen, "rect", (power(1.0),), (4, 4))
    with pytest.raises(ValueError):
        SllnExperiment(gen, "sphere", (power(1.0),), (4, 8))
    with pytest.raises(ValueError):
        SllnExperiment(gen, "rect", (power(1.0),) * 3, (4, 8))


def test_block_exponent_check():
    assert block_exponent_check(1.5, 1.2, 0.5) == pytest.approx(1.4)
    assert block_exponent_check(1.5, 1.4, 0.5) == pytest.approx(1.4 * (1 / 1.5 + 0.5))
    with pytest.raises(ValueError):
        block_exponent_check(1.5, 1.6, 0.5)
    with pytest.raises(ValueError, match="> 1"):
        block_exponent_check(1.5, 1.0, 0.1)


def test_theorem_normalizers():
    phis = theorem_normalizers(LfssConfig((0.8, 0.7), 1.5), 0.2)
    assert phis == (power_log(0.8, 1 / 1.5 + 0.2), power_log(0.7, 1 / 1.5 + 0.2))


def test_block_tail_dominance():
    rep = run_lfss_block_tail(CFG, 1.0, 1.4, 1.0, [1, 2, 3, 4, 5, 6], replicates=2000, refinement=2)
    assert np.all(np.diff(rep.probabilities) <= 0)
    assert rep.dominance_fraction_exact >= 0.8
    assert "fitted_exact_bound" in rep.to_csv().splitlines()[0]


def test_block_tail_huge_threshold():
    rep = run_lfss_block_tail(CFG, 1e6, 1.2, 0.5, [1, 2, 3], replicates=200, refinement=2)
    assert np.all(rep.probabilities == 0)


def test_block_tail_requires_theorem_range():
    with pytest.raises(ValueError):
        run_lfss_block_tail(LfssConfig((0.6,), 1.5), 1.0, 1.2, 0.5, [1])


def test_sup_bound_expression():
    assert sup_bound_expression([1.0], [3.0], [0.5], 2.0) == pytest.approx(2.0 + 1.0)
    # two axes: (1*1) + a1^(H1 g) (b2-a2)^(H2 g) + a2^(H2 g) (b1-a1)^(H1 g)
    assert sup_bound_expression([1, 1], [2, 2], [1, 1], 1.0) == pytest.approx(3.0)


def test_sup_increment_doubling():
    rep = estimate_sup_increment_moment(CFG, [(1, 2), (2, 4), (4, 8), (3, 3)], 1.0, refinement=2, replicates=2000)
    assert rep.ratios[0] == pytest.approx(1.0)
    assert np.all(rep.ratios[1:3] < 1.5) and np.all(rep.ratios[1:3] > 0.5)
    assert rep.estimates[3] == 0.0
    with pytest.raises(ValueError):
        estimate_sup_increment_moment(CFG, [(0, 1)], 1.0)


def test_refinement_monotone():
    s = refined_sups(CFG, 1, 4, 4, 300, 0, coarsen=(1, 2, 4))
    assert np.all(s[:, 0] >= s[:, 1]) and np.all(s[:, 1] >= s[:, 2])


def test_degenerate_interval_is_zero():
    rep = estimate_sup_increment_moment(CFG, [(2, 2)], 1.0, replicates=10)
    assert rep.estimates[0] == 0.0


def test_sup_increment_ratio_across_side_lengths():
    rep = estimate_sup_increment_moment(CFG, [(1, 2), (1, 3), (1, 5), (1, 9)], 1.2, refinement=2, replicates=1000)
    assert np.all((rep.ratios > 0.1) & (rep.ratios < 10))


def test_bound_first_term_doubles_exactly():
    H, g = [0.8, 0.7], 1.2
    first = lambda A, B: float(np.prod((np.asarray(B) - np.asarray(A)) ** (np.asarray(H) * g)))
    A, B1, B2 = [1.0, 1.0], [3.0, 2.0], [5.0, 3.0]
    assert first(A, B2) / first(A, B1) == pytest.approx(2 ** (sum(H) * g), rel=1e-14)
    full = sup_bound_expression(A, B2, H, g) - sup_bound_expression([1.0, 1.0], B2, H, g)
    assert full == 0.0
