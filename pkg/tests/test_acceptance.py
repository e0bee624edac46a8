"""Acceptance gate: one printed PASS/FAIL line per criterion.

Tolerances live next to each check in :mod:`selfcool.acceptance`.  The two
stochastic checks take several minutes; deselect them with ``-m "not slow"``.
"""

import pytest

from selfcool.acceptance import CHECKS


def _param(check):
    marks = [pytest.mark.slow] if check.slow else []
    return pytest.param(check, id=f"{check.number:02d}-{check.name.replace(' ', '-')}", marks=marks)


@pytest.mark.parametrize("check", [_param(c) for c in CHECKS])
def test_criterion(check, capsys):
    result = check.run()
    with capsys.disabled():
        print(f"\n{result.line()}  ({result.seconds:.1f} s)")
    assert result.passed, result.line()
