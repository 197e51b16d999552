"""Acceptance battery: one test per criterion, one pass/fail line each.

The underlying checks live in rollguide.verification and are shared with
the ``verify`` CLI command; the battery is executed once per session.
"""

import pytest

from rollguide.verification import CHECKS, run_all

_CRITERIA = [
    ("tilted-posterior-quadratic",
     "posterior sampling with a differentiable quadratic loss"),
    ("tilted-posterior-step",
     "posterior sampling with a non-differentiable step loss"),
    ("candidate-count-trend",
     "rule loss falls strictly as the candidate count grows"),
    ("hybrid-improvement",
     "gradient pre-shift plus selection beats selection alone"),
    ("desirability-likelihood",
     "Monte-Carlo desirability tracks the analytic likelihood"),
    ("score-correctness",
     "mixture scores match finite differences; Tweedie exact on Gaussians"),
    ("single-candidate-equivalence",
     "n = 1 guided sampling is bitwise the unguided chain"),
    ("sddim-ddpm-consistency",
     "full-grid stochastic DDIM matches DDPM terminal moments"),
    ("rule-extraction-oracles",
     "rule functions agree exactly with brute-force scans"),
    ("editing-tradeoff",
     "editing preserves the mask and trades resemblance for freedom"),
    ("oa-sanity",
     "overlapping area hits its analytic extremes and midpoint"),
    ("io-round-trips",
     "MIDI and PR01 round trips are identities"),
]


@pytest.fixture(scope="session")
def battery():
    results = run_all()
    return {r.name: r for r in results}


def _assert_criterion(battery, index):
    name, summary = _CRITERIA[index - 1]
    res = battery[name]
    tag = "PASS" if res.passed else "FAIL"
    print(f"[{tag}] criterion {index:2d} ({name}): {res.detail}")
    assert res.passed, f"criterion {index} ({summary}): {res.detail}"


def test_battery_covers_all_criteria():
    assert len(CHECKS) == len(_CRITERIA) == 12


@pytest.mark.parametrize("index", range(1, 13),
                         ids=[f"{i:02d}-{name}" for i, (name, _)
                              in enumerate(_CRITERIA, start=1)])
def test_criterion(battery, index):
    _assert_criterion(battery, index)
