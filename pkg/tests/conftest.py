import pytest

from reinsopt.optimizer import run_grid
from reinsopt.pricing import ExpectedValuePricing

SECTION5 = ExpectedValuePricing(gamma_re=0.2, gamma=0.1)
FAMILIES = ("gamma", "lognormal", "pareto")
JMUS = (5.0, 50.0, 500.0, 5000.0)
MASTER_SEED = 2019

# criterion label -> (title, passed, detail), filled by test_acceptance
ACCEPTANCE: dict[str, tuple[str, bool, str]] = {}


def _grid(m):
    reports = run_grid(SECTION5, FAMILIES, JMUS, m, MASTER_SEED)
    return {(r.family, r.expected_claims): r for r in reports}


@pytest.fixture(scope="session")
def table_ci():
    """All twelve cells at m = 10^5."""
    return _grid(10**5)


@pytest.fixture(scope="session")
def table_full():
    """All twelve cells at m = 10^6 (several minutes on one core)."""
    return _grid(10**6)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"criterion {label} {'PASS' if ok else 'FAIL'} {name}: {detail}")
