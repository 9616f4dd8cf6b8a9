import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from memsquench.cli import PRESETS  # noqa: E402
from memsquench.integrator import run  # noqa: E402
from memsquench.model import ProblemSpec  # noqa: E402

settings.register_profile("seeded", derandomize=True, deadline=None, max_examples=200)
settings.load_profile("seeded")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)


_RUNS = {}


def cached_run(name, **overrides):
    key = (name, tuple(sorted(overrides.items())))
    if key not in _RUNS:
        _RUNS[key] = run(ProblemSpec(**{**PRESETS[name], **overrides}))
    return _RUNS[key]


@pytest.fixture(scope="session")
def runs():
    return cached_run
