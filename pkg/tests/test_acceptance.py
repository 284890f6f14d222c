"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The lines are also collected and echoed in the pytest terminal summary.
Criterion 10 reruns the stochastic criteria and compares digests with the
results recorded earlier in this module.
"""

import pytest

from exittail import acceptance

pytestmark = pytest.mark.slow

RESULTS: dict[int, acceptance.CheckResult] = {}
SUMMARY_LINES: list[str] = []


def _run(number: int) -> acceptance.CheckResult:
    if number == 10:
        res = acceptance.criterion_10(RESULTS, acceptance.DEFAULT_SEED)
    elif number in (5, 6):
        res = acceptance.CRITERIA[number]()
    else:
        res = acceptance.CRITERIA[number](seed=acceptance.DEFAULT_SEED)
    RESULTS[number] = res
    SUMMARY_LINES.append(res.line())
    print(res.line())
    return res


@pytest.mark.parametrize("number", list(range(1, 11)))
def test_criterion(number):
    res = _run(number)
    assert res.status == acceptance.PASS, res.line()
