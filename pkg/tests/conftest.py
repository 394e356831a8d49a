import time
from contextlib import contextmanager

import pytest

_RESULTS = []


class _Check:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.detail = ""
        self.elapsed = 0.0


@pytest.fixture
def criterion():
    """Time an acceptance check and report it in the terminal summary."""

    @contextmanager
    def run(number, title, budget):
        check = _Check(number, title, budget)
        start = time.perf_counter()
        ok = False
        try:
            yield check
            ok = True
        finally:
            check.elapsed = time.perf_counter() - start
            ok = ok and check.elapsed < budget
            _RESULTS.append((check, ok))
        assert check.elapsed < budget, f"took {check.elapsed:.1f}s, budget {budget}s"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for check, ok in sorted(_RESULTS, key=lambda item: item[0].number):
        status = "PASS" if ok else "FAIL"
        extra = f"  {check.detail}" if check.detail else ""
        terminalreporter.write_line(
            f"[{status}] {check.number}. {check.title} ({check.elapsed:.2f}s / {check.budget:g}s){extra}"
        )
