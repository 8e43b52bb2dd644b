import pytest
from hypothesis import HealthCheck, settings

from splitcast.topology import explicit_topology

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# A-B-C is the first branch; D's shortest way to A runs through B, which
# cannot split, while the splitter S sits one hop from B off that route.
SIX_LINKS = [("A", "B"), ("B", "C"), ("B", "D"), ("A", "S"), ("S", "E"), ("E", "D"), ("S", "B")]


@pytest.fixture
def six():
    return explicit_topology(list("ABCDES"), SIX_LINKS, splitters=["S"])


@pytest.fixture
def line4():
    return explicit_topology(list("ABCD"), [("A", "B"), ("B", "C"), ("C", "D")])


# Acceptance verdicts, one line per criterion, printed after the run.
VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, passed: bool, detail: str):
        VERDICTS[number] = f"{'PASS' if passed else 'FAIL'} {number}: {detail}"
        print(VERDICTS[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
