import pytest

from wittenspec.pipeline import abstract_two_well, run_spectrum, two_well_polynomial
from wittenspec.trigpoly import find_critical_points


@pytest.fixture(scope="session")
def two_well_run():
    """Full solve for the degree-two two-well polynomial."""
    return run_spectrum(find_critical_points(two_well_polynomial()))


@pytest.fixture(scope="session")
def abstract_run():
    """Full solve for abstract two-well data at (a, b) = (0.4, 0.3), with the stand-in determinacy check."""
    return run_spectrum(abstract_two_well(0.4, 0.3))


#: criterion number -> (title, passed, detail), filled in by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
