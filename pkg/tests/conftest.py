import numpy as np
import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


class CriterionLog:
    """Records one pass/fail line per acceptance criterion."""

    def record(self, number: int, passed: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(passed), detail)


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
