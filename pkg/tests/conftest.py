import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gossicrypt.crypto import TOY
from gossicrypt.protocol import provision


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_net(rng):
    nodes, sink = provision(12, 0.5, rng, TOY)
    return nodes, sink


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
