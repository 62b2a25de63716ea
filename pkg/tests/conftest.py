from fractions import Fraction

import pytest

from rollup_incentives.rollup_games import MixPoint, ProtocolParams


@pytest.fixture
def reference():
    """s_A = s_V = 1, x = 1/24, z = 24, exact."""
    return ProtocolParams(s_A=Fraction(1), s_V=Fraction(1), x=Fraction(1, 24), z=Fraction(24))


@pytest.fixture
def reference_float():
    return ProtocolParams(s_A=1.0, s_V=1.0, x=1 / 24, z=24.0)


@pytest.fixture
def reference_mix():
    return MixPoint(Fraction(1, 5), Fraction(4, 5), Fraction(67, 96))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for the acceptance summary, then assert it."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}  {title}: {detail}")
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
