"""The sixteen acceptance criteria at their pre-registered tolerances.

Criteria 1-5 form the fast suite; 6-16 are marked slow (deselect with
``-m "not slow"``).  Each test prints one pass/fail line plus its reports.
"""

import time

import pytest

from dgfflab.acceptance import CRITERIA, format_line, run_criterion


def _param(c):
    marks = [pytest.mark.slow] if c.suite == "full" else []
    return pytest.param(c, id=f"criterion_{c.number:02d}", marks=marks)


@pytest.mark.parametrize("criterion", [_param(c) for c in CRITERIA])
def test_criterion(criterion, capsys):
    t0 = time.perf_counter()
    ok, reports = run_criterion(criterion)
    with capsys.disabled():
        print(f"\n{format_line(criterion, ok, reports)} ({time.perf_counter() - t0:.0f}s)")
        for r in reports:
            print(f"    {r}")
    assert ok, "; ".join(str(r) for r in reports if not r.passed)
