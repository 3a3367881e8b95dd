"""Acceptance criteria 1-11, one test each.

Each criterion prints a single PASS/FAIL line; the lines are repeated in
the terminal summary of the pytest run.
"""

import pytest

from fracsol.acceptance import CRITERIA

RESULT_LINES: dict[int, str] = {}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, tmp_path):
    kwargs = {"out_dir": tmp_path / "figures"} if number == 5 else {}
    result = CRITERIA[number](**kwargs)
    line = result.line()
    RESULT_LINES[number] = line
    print(line)
    failed = [c for c in result.checks if not c.passed]
    assert result.passed, "; ".join(f"{c.name} = {c.value!r} (need {c.bound})" for c in failed)
