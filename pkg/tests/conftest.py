import numpy as np
import pytest

from fsmfabric.isa import NOP


class ScriptFeed:
    """Row controller that plays a fixed {cycle: instruction} script."""

    def __init__(self, script, wfeed=None):
        self.script = dict(script)
        self.wfeed = dict(wfeed or {})
        self.inbox = {}
        self.outbox = None
        self.transitions = self.issued = self.messages = 0
        self.end = max(list(self.script) + list(self.wfeed) + [-1])
        self.cycle = -1

    @property
    def done(self):
        return self.cycle >= self.end

    def take_message(self, cycle):
        return None

    def step(self, cycle, msg):
        self.cycle = cycle
        return self.script.get(cycle, NOP), self.wfeed.get(cycle)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {text}")
