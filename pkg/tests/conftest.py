import pytest
from hypothesis import HealthCheck, settings

from ctirag.corpus import Chunk

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_chunks(texts, prefix="D"):
    return [Chunk(f"{prefix}{i}", f"{prefix}{i}", t, 0, len(t)) for i, t in enumerate(texts, 1)]


@pytest.fixture
def toy_chunks():
    return make_chunks(["buffer overflow attack", "sql injection attack", "buffer buffer overflow"])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
