import re

import pytest

from btgen import bt_core
from btgen.encoders import CachedEncoder, ReferenceEncoder
from btgen.grounding import GroundingConfig
from btgen.model_gateway import ReplayBackend, ReplayStore
from btgen.phase_step import to_tree
from btgen.resources import load_task, transcript_fixtures_dir

GPT3 = "text-davinci-003"
CHATGPT = "chatgpt-2023-02-13"

TABLE3_PROMPT = """Source Task
Procedures:
Phase 1.
Step 1. Put car at a conveyor;
Step 2. Lift the car.
Phase 2.
Step 1. Pick the wheel;
Step 2. Approach conveyor;
Step 3. Align wheel with wheel hub.
Phase 3.
Step 1. Insert screws;
Step 2. Fasten screws;
Step 3. Leave the conveyor.

Target Task: Desktop assembly
Procedures:
"""


@pytest.fixture
def wheel():
    return load_task("ps_wheel")


@pytest.fixture
def desktop_source():
    return load_task("ps_desktop")


@pytest.fixture
def wheel_tree(wheel):
    return to_tree(wheel)


@pytest.fixture
def reference_encoder():
    return CachedEncoder(ReferenceEncoder.default())


@pytest.fixture
def grounding():
    return GroundingConfig()


@pytest.fixture
def transcript_store():
    return ReplayStore(transcript_fixtures_dir())


@pytest.fixture
def gpt3_replay(transcript_store):
    return ReplayBackend(transcript_store, model=GPT3)


@pytest.fixture
def chatgpt_replay(transcript_store):
    return ReplayBackend(transcript_store, model=CHATGPT)


def seq(*children):
    return bt_core.sequence(*children)


def act(text):
    return bt_core.action(text)


# -- acceptance summary ----------------------------------------------------

_CRITERIA: dict[str, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = f"criterion {m.group(1)} ({m.group(2).replace('_', ' ')})"
    if report.failed:
        _CRITERIA[key] = "FAIL"
    elif report.when == "call" and report.passed:
        _CRITERIA.setdefault(key, "PASS")
    elif report.skipped:
        _CRITERIA[key] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(f"{_CRITERIA[key]}: {key}")
