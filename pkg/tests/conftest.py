import itertools

import pytest

from guardrail.backends import HashedNgramEmbedder


class FakeClock:
    """Nanosecond clock advancing a fixed 1 ms per reading."""

    def __init__(self, step_ns=1_000_000):
        self._ticks = itertools.count(step=step_ns)

    def __call__(self):
        return next(self._ticks)


@pytest.fixture
def embedder():
    return HashedNgramEmbedder()


@pytest.fixture
def fake_clock():
    return FakeClock()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
