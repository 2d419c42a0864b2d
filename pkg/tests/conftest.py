import numpy as np
import pytest

from kplab.spectral import Grid1D, Grid2D

# Filled by test_acceptance.py: criterion number -> [(part, passed, detail)]
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(num: int, part: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(num, []).append((part, bool(ok), detail))
    print(f"criterion {num} [{part}]: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid80():
    return Grid2D(80.0, 256, 1.0, 16)


@pytest.fixture(scope="session")
def line512():
    return Grid1D(80.0, 512)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[num]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name} {'ok' if good else 'FAILED'} ({d})" for name, good, d in parts)
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
