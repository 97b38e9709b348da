"""Phase-Step prompt grammar.

A task is a title plus ordered phases of ordered steps. It maps one-to-one
onto a 3-layer tree: root Sequence -> one Sequence per phase -> one Action per
step. This module renders prompts, parses model completions back into tasks,
and converts between tasks and trees.

Canonical layout, one step per line::

    Source Task
    Procedures:
    Phase 1.
    Step 1. Put car at a conveyor;
    Step 2. Lift the car.
    ...

    Target Task: Desktop assembly
    Procedures:
"""

from __future__ import annotations

import re
import warnings
from collections.abc import Sequence as Seq
from dataclasses import dataclass

from . import bt_core
from .bt_core import BTNode, Kind
from .errors import NotThreeLayer, ParseError, ParseWarning, PhaseCountMismatch

DEFAULT_VERBS = ("pick", "drop", "push", "pull", "rotate", "move", "place")


@dataclass(frozen=True)
class PhaseStepTask:
    description: str
    phases: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        phases = tuple(tuple(p) for p in self.phases)
        object.__setattr__(self, "phases", phases)
        if not phases:
            raise ValueError("a task needs at least one phase")
        for i, phase in enumerate(phases, 1):
            if not phase:
                raise ValueError(f"phase {i} has no steps")
            for step in phase:
                if not step or not step.strip():
                    raise ValueError(f"phase {i} has an empty step")

    @property
    def steps(self) -> list[str]:
        return [s for phase in self.phases for s in phase]

    @property
    def phase_sizes(self) -> list[int]:
        return [len(p) for p in self.phases]

    def to_dict(self) -> dict:
        return {"description": self.description, "phases": [list(p) for p in self.phases]}

    @classmethod
    def from_dict(cls, data: dict) -> PhaseStepTask:
        return cls(data.get("description", ""), data["phases"])


@dataclass(frozen=True)
class TargetSpec:
    core_phrase: str
    tool: str | None = None
    phase_count: int | None = None
    verb_restriction: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.core_phrase or not self.core_phrase.strip():
            raise ValueError("core_phrase must be non-empty")
        if self.phase_count is not None and self.phase_count < 1:
            raise ValueError("phase_count must be >= 1")
        if self.verb_restriction is not None:
            verbs = tuple(self.verb_restriction)
            if not verbs:
                raise ValueError("verb_restriction must be non-empty when given")
            object.__setattr__(self, "verb_restriction", verbs)


@dataclass(frozen=True)
class Prompt:
    full_text: str
    # (start, end) character ranges of each source step text, in document order
    input_slot_spans: tuple[tuple[int, int], ...] = ()
    # offset where the model's completion begins (== len(full_text))
    output_slot_marker: int = 0
    target_span: tuple[int, int] = (0, 0)

    def __str__(self):
        return self.full_text


def render_target_description(target: TargetSpec) -> str:
    text = target.core_phrase.strip()
    if target.tool:
        text += f" with {target.tool}"
    if target.phase_count is not None:
        unit = "phase" if target.phase_count == 1 else "phases"
        text += f" in {target.phase_count} {unit}"
    if target.verb_restriction:
        text += ", only use the following verb: " + ", ".join(target.verb_restriction)
    return text


def serialize_procedures(task: PhaseStepTask) -> str:
    """Render the phase/step block, one step per line.

    Every step ends with ';' except the last step of a phase, which ends
    with '.'.
    """
    return "".join(_procedure_lines(task, spans=None))


def _procedure_lines(task: PhaseStepTask, spans: list | None, offset: int = 0):
    pos = offset
    for i, phase in enumerate(task.phases, 1):
        header = f"Phase {i}.\n"
        yield header
        pos += len(header)
        for j, step in enumerate(phase, 1):
            prefix = f"Step {j}. "
            end = "." if j == len(phase) else ";"
            if spans is not None:
                spans.append((pos + len(prefix), pos + len(prefix) + len(step)))
            line = f"{prefix}{step}{end}\n"
            yield line
            pos += len(line)


def build_prompt(source: PhaseStepTask, target: TargetSpec | str) -> Prompt:
    if isinstance(target, str):
        target = TargetSpec(target)
    head = "Source Task\nProcedures:\n"
    spans: list[tuple[int, int]] = []
    body = "".join(_procedure_lines(source, spans, offset=len(head)))
    lead = head + body + "\nTarget Task: "
    rendered = render_target_description(target)
    text = lead + rendered + "\nProcedures:\n"
    return Prompt(
        full_text=text,
        input_slot_spans=tuple(spans),
        output_slot_marker=len(text),
        target_span=(len(lead), len(lead) + len(rendered)),
    )


def build_plain_prompt(description: str) -> str:
    """Prompt used when no Phase-Step source is given."""
    return f"Generate a {description} task in behavior tree"


# -- completion parsing ----------------------------------------------------

_PHASE_RE = re.compile(r"^\W*phase\s*\d+\s*[.:)]?\s*", re.IGNORECASE)
_STEP_RE = re.compile(r"\bstep\s*\d+\s*[.:)]\s*", re.IGNORECASE)
_NUMBERED_RE = re.compile(r"(?:(?<=\s)|^)\d+\s*[.)]\s+")
_BULLET_RE = re.compile(r"^\s*[-*•]\s+")


def _clean_step(chunk: str) -> tuple[str, bool]:
    """Strip slot brackets and terminators. Returns (text, terminated)."""
    text = chunk.strip().rstrip("]").strip()
    terminated = text.endswith((";", "."))
    while text.endswith((";", ".")):
        text = text[:-1].rstrip()
    return text.lstrip("[").strip(), terminated


def _split_items(line: str, pattern: re.Pattern) -> tuple[str, list[str]]:
    """Split ``line`` at every item marker; return (text before first marker, items)."""
    marks = list(pattern.finditer(line))
    if not marks:
        return line, []
    items = []
    for k, m in enumerate(marks):
        stop = marks[k + 1].start() if k + 1 < len(marks) else len(line)
        items.append(line[m.end():stop])
    return line[: marks[0].start()], items


def has_phase_headers(text: str) -> bool:
    return any(_PHASE_RE.match(line.strip().lstrip("[")) for line in text.splitlines())


def parse_completion(
    text: str,
    expected: int | None = None,
    description: str = "",
    lenient: bool = False,
) -> PhaseStepTask:
    """Parse a completion in Phase-Step form into a task.

    Printed phase and step numbers are ignored; document order decides.
    Without any "Phase" header all steps form one phase. Lines that match
    neither grammar are dropped with a ``ParseWarning``, except a line that
    directly follows an unterminated step, which is treated as a wrapped
    continuation of it. ``lenient`` additionally accepts "1." / "1)" and
    bulleted list items as steps.
    """
    phases: list[list[str]] = []
    current: list[str] | None = None
    open_step = False  # last step had no terminator, so it may wrap
    lineno = 0

    def start_phase():
        nonlocal current
        current = []
        phases.append(current)

    for lineno, raw in enumerate(text.replace("\r\n", "\n").split("\n"), 1):
        line = raw.strip()
        if line.startswith("["):
            line = line[1:].lstrip()
        if not line or line == "]":
            continue
        m = _PHASE_RE.match(line)
        if m:
            start_phase()
            open_step = False
            line = line[m.end():]
            if not line.strip():
                continue
        lead, items = _split_items(line, _STEP_RE)
        if not items and lenient:
            bullet = _BULLET_RE.match(line)
            if bullet:
                lead, items = "", [line[bullet.end():]]
            else:
                lead, items = _split_items(line, _NUMBERED_RE)
        if lead.strip() and items:
            warnings.warn(f"line {lineno}: ignoring text before step: {lead.strip()!r}", ParseWarning, stacklevel=2)
        if not items:
            if open_step and current:
                extra, terminated = _clean_step(line)
                if extra:
                    current[-1] = f"{current[-1]} {extra}"
                open_step = not terminated
            else:
                warnings.warn(f"line {lineno}: discarding unrecognized text {line!r}", ParseWarning, stacklevel=2)
            continue
        for item in items:
            step, terminated = _clean_step(item)
            if not step:
                continue
            if current is None:
                start_phase()
            current.append(step)
            open_step = not terminated

    phases = [p for p in phases if p]
    if not phases:
        raise ParseError(lineno, "no step could be recognized")
    if expected is not None and len(phases) != expected:
        warnings.warn(f"expected {expected} phase(s), parsed {len(phases)}", PhaseCountMismatch, stacklevel=2)
    return PhaseStepTask(description, tuple(tuple(p) for p in phases))


# -- tree conversion -------------------------------------------------------

def to_tree(task: PhaseStepTask) -> BTNode:
    root = bt_core.sequence(
        *(bt_core.sequence(*(bt_core.action(s) for s in phase)) for phase in task.phases)
    )
    return bt_core.renumber(root)


def from_tree(root: BTNode, description: str = "") -> PhaseStepTask:
    if root.kind is not Kind.SEQUENCE or not root.children:
        raise NotThreeLayer("root must be a non-empty Sequence")
    phases = []
    for i, phase in enumerate(root.children):
        if phase.kind is not Kind.SEQUENCE or not phase.children:
            raise NotThreeLayer(f"layer-2 node {i} is a {phase.kind.label}, expected Sequence")
        steps = []
        for leaf in phase.children:
            if leaf.kind is not Kind.ACTION:
                raise NotThreeLayer(f"layer-3 node under phase {i + 1} is a {leaf.kind.label}, expected Action")
            steps.append(leaf.text)
        phases.append(tuple(steps))
    return PhaseStepTask(description, tuple(phases))


def task_from_steps(description: str, steps: Seq[str]) -> PhaseStepTask:
    return PhaseStepTask(description, (tuple(steps),))
