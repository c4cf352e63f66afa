"""Acceptance suite: runs every criterion at full scale with the pinned seed
and prints one pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live; the
full suite takes several minutes (the scaling-limit criterion dominates).
"""

import pytest

from collapsim import acceptance


@pytest.mark.parametrize(
    "num,name,fn", acceptance.CRITERIA,
    ids=[f"criterion_{num}_{name}" for num, name, _ in acceptance.CRITERIA])
def test_acceptance_criterion(num, name, fn):
    report = fn(acceptance.DEFAULT_SEED)
    runtime = report.details.get("runtime_seconds", 0.0)
    status = "PASS" if report.passed else "FAIL"
    print(f"ACCEPTANCE {num} {name}: {status} "
          f"(statistic={report.statistic:.6g}, threshold={report.threshold:.6g}, "
          f"runtime={runtime:.1f}s)")
    assert report.passed, report.to_json()
    budget = acceptance.BUDGET_SECONDS[num]
    assert runtime <= budget, (
        f"criterion {num} took {runtime:.1f}s, over its {budget}s budget")
