from __future__ import annotations

from fractions import Fraction

import pytest

from qcra.codebook import CirculantTable, builtin_rate_one_tenth, expand, random_table


@pytest.fixture(scope="session")
def r1_10():
    return expand(builtin_rate_one_tenth(), name="r1_10")


@pytest.fixture(scope="session")
def toy_code():
    """N=7200, R=1/4 random QC-RA code; decodes in a few ms per word."""
    return expand(random_table(7200, "1/4", [12, 12, 3, 3, 3], seed=1), name="toy7200")


@pytest.fixture(scope="session")
def tiny_code():
    """N=1440, R=1/2 code with one row index per group: H1 is two shifted diagonals."""
    return expand(CirculantTable(1440, Fraction(1, 2), ((3,), (7,))), name="tiny")


@pytest.fixture(scope="session")
def hand_code():
    """K=2, M=2 code with H1 rows {0} and {0, 1} (group size 1)."""
    return expand(CirculantTable(4, Fraction(1, 2), ((0, 1), (1,)), group_size=1).validate())


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def report():
    """Record and print the one-line verdict for an acceptance criterion."""

    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
