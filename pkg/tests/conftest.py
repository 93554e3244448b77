import contextlib
import time

import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion as PASS or FAIL.

    The body sets ``c.detail`` to a short measurement summary; the line is
    printed in the terminal summary whatever the outcome.
    """

    class _Record:
        detail = ""

    @contextlib.contextmanager
    def _criterion(number, title):
        rec = _Record()
        start = time.perf_counter()
        ok = False
        try:
            yield rec
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            status = "PASS" if ok else "FAIL"
            _CRITERIA.append((number, f"criterion {number} [{status}] {title}: {rec.detail} "
                                      f"({elapsed:.1f} s)"))

    return _criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
