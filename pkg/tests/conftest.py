import numpy as np
import pytest

from holotweezers.phys import preset


@pytest.fixture(scope="session")
def trap():
    return preset("paper-rb87")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One verdict line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE = {}


@pytest.fixture
def verdict(request, capsys):
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
