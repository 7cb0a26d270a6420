import pytest

from mmid.problems import make_lotka_volterra_dataset, make_pitchfork_dataset, make_quadratic_dataset


@pytest.fixture(scope="session")
def quadratic_ds():
    return make_quadratic_dataset(seed=0)


@pytest.fixture(scope="session")
def pitchfork_ds():
    return make_pitchfork_dataset(seed=0)


@pytest.fixture(scope="session")
def lotka_ds():
    return make_lotka_volterra_dataset(seed=0)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance-criterion line for the terminal summary."""

    def record(number, title, passed, detail):
        line = f"[criterion {number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
