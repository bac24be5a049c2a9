import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[dict]()
CRITERIA = range(1, 8)


@pytest.fixture
def criterion(request):
    """Record one checked part of a numbered acceptance criterion."""
    def record(number, passed, detail):
        parts = request.config.stash.setdefault(ACCEPTANCE, {}).setdefault(number, [])
        parts.append((bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        parts = results.get(n)
        if not parts:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
            continue
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
