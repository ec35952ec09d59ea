import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

from entprune import engine

# Populated by tests/test_acceptance.py; printed as a summary section so every
# acceptance criterion gets one PASS/FAIL line at the end of the run.
ACCEPTANCE_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        status, title, detail = ACCEPTANCE_RESULTS[num]
        line = f"criterion {num} [{status}] {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


def toy_layers(classes: int = 5):
    """Small stack covering every layer kind (relu and tanh paths included)."""
    return [
        engine.Conv2D(1, 2, 3),
        engine.Activation("relu"),
        engine.MaxPool2D(2),
        engine.Conv2D(2, 3, 3),
        engine.Activation("tanh"),
        engine.Flatten(),
        engine.Dense(3 * 2 * 2, classes),
        engine.SoftmaxCrossEntropy(),
    ]


def strided_layers(classes: int = 4):
    """Variant exercising conv padding and stride plus overlapping pooling."""
    return [
        engine.Conv2D(2, 3, 3, stride=2, padding=1),
        engine.Activation("tanh"),
        engine.Conv2D(3, 4, 3, padding=1),
        engine.Activation("relu"),
        engine.MaxPool2D(3, stride=2),
        engine.Flatten(),
        engine.Dense(4 * 2 * 2, classes),
        engine.SoftmaxCrossEntropy(),
    ]


@pytest.fixture
def toy_net():
    return engine.init_network(toy_layers(), (1, 10, 10), seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
