"""Acceptance gate: every criterion at its stated tolerance and runtime budget.

Each test prints its one-line PASS/FAIL summary; the lines are repeated in the
terminal summary at the end of the run.
"""
import pytest

from uiprice.acceptance import CRITERIA, format_line

ACCEPTANCE_LINES = []


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    res = CRITERIA[number]()
    line = format_line(res)
    ACCEPTANCE_LINES.append(line)
    print(line)
    print(res.to_dict()["metrics"])
    assert res.passed, line
