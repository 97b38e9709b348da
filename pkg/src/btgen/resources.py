from __future__ import annotations

import json
from importlib import resources
from pathlib import Path


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("btgen").joinpath("data", *parts)))


def transcript_fixtures_dir() -> Path:
    return data_path("fixtures", "transcripts")


def toy_kb_path() -> Path:
    return data_path("toy_kb.json")


def load_task(name: str):
    """Load a bundled task by name, e.g. ``ps_wheel`` or ``gpt3_desktop``."""
    from .phase_step import PhaseStepTask

    return PhaseStepTask.from_dict(json.loads(data_path("tasks", f"{name}.json").read_text()))


def bundled_task_names() -> list[str]:
    return sorted(p.stem for p in data_path("tasks").glob("*.json"))
