from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def presets_dir():
    return Path(__file__).resolve().parent.parent / "presets"


_VERDICTS = {}


def record_verdict(number, text, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}" + (f" [{detail}]" if detail else "")
    _VERDICTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
