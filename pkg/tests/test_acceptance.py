"""Acceptance criteria 1-10 at full size; each prints one PASS/FAIL line."""
import pytest

from adk.battery import CRITERIA


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = CRITERIA[number]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.failures[:5]
