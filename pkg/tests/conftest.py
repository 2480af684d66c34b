import numpy as np
import pytest

from porofem.mesh import build_rect


@pytest.fixture
def unit2():
    return build_rect((0, 1, 0, 1), 2, 2)


@pytest.fixture
def unit4():
    return build_rect((0, 1, 0, 1), 4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``criterion(n, passed, detail)`` records one acceptance line for the run summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(n, passed, detail):
        prev = lines.get(n)
        ok = bool(passed) and (prev is None or prev[0])
        lines[n] = (ok, detail if prev is None else f"{prev[1]}; {detail}")
        print(f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        ok, detail = lines[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
