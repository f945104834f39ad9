import numpy as np
import pytest

from osposg.games import gen_pursuit_evasion, hide_game, matching_pennies, single_game


@pytest.fixture(scope="session")
def g_single():
    return single_game()


@pytest.fixture(scope="session")
def g_mp():
    return matching_pennies()


@pytest.fixture(scope="session")
def g_hide():
    return hide_game(0.9, "absorb")


@pytest.fixture(scope="session")
def g_pe3():
    return gen_pursuit_evasion()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record ``(criterion, passed, detail)``; printed as one line each after the run."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, passed: bool, detail: str) -> None:
        lines.append((number, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(lines, key=lambda t: t[0]):
        verdict = {True: "PASS", False: "FAIL", None: "N/A "}[passed]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")
