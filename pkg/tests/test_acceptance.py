"""Acceptance criteria at their stated tolerances.

Each criterion prints one PASS/FAIL line.  Run alone with

    pytest tests/test_acceptance.py -v

or ``python tests/test_acceptance.py`` for the bare report.
"""

import pytest

from wvnspec.acceptance import CRITERIA


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = CRITERIA[number]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


if __name__ == "__main__":
    import sys

    from wvnspec.acceptance import run_criteria

    results = run_criteria(echo=print)
    sys.exit(0 if all(r.passed for r in results) else 1)
