"""Acceptance criteria 1-11 at their stated tolerances.

One line per criterion is printed (``criterion NN PASS/FAIL ...``) and
repeated in the terminal summary, so the verdicts are visible without ``-s``.
Criteria share one context so that the determinism check (11) reuses the
digests of the stochastic criteria computed at the default thread budget.
"""

import pytest

from sllnlab import acceptance

LINES = []


@pytest.fixture(scope="module")
def ctx():
    return acceptance.Context(seed=0, threads=1)


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(ctx, number):
    res = acceptance.run_criterion(number, ctx)
    line = res.line()
    LINES.append(line)
    print(line)
    assert res.passed, f"{line}\nmetrics: {res.metrics}"


def test_tolerances_match_stated_values():
    assert acceptance.TOLERANCES == {
        "c1_ecf": 0.02, "c1_variance": 0.03, "c2_relative": 1e-12, "c4_identity": 1e-12, "c5_ratio": 0.10,
        "c5_slope": 0.05, "c6_family_level": 0.01, "c8_ratio": 0.5, "c9_sigmas": 2.0, "c10_klesov": 1e-4,
    }
