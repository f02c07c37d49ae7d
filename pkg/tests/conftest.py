import json
import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from distproc import asm  # noqa: E402
from distproc.hardware import Setup, load_data  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


@pytest.fixture(scope="session")
def setup():
    return Setup.default()


@pytest.fixture(scope="session")
def chan_cfg(setup):
    return setup.chan_cfg


@pytest.fixture(scope="session")
def reset_asm():
    return load_data("active_reset.asm.json")


@pytest.fixture(scope="session")
def reset_images(reset_asm, chan_cfg):
    return asm.assemble(reset_asm, chan_cfg)


def golden(name):
    with open(os.path.join(GOLDEN, name)) as f:
        return json.load(f)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "REPORT", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
