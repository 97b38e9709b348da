"""Tree expansion: decompose non-primitive Actions by re-prompting the model.

Each non-primitive Action becomes the target of a one-phase prompt built on
the unchanged source task; the returned steps replace it as a Sequence.
``recursive`` keeps expanding new non-primitive steps up to ``max_depth``;
``frozen`` adds the capability-verb restriction to the prompt and accepts
whatever comes back.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

from . import bt_core
from .bt_core import BTNode, Kind
from .encoders import TextEncoder
from .errors import DepthExceeded
from .grounding import GroundingConfig, classify, detect_extra_spec
from .model_gateway import CompletionBackend, GenerationParams, complete, prompt_key
from .phase_step import PhaseStepTask, TargetSpec, build_prompt, parse_completion

log = logging.getLogger(__name__)

RECURSIVE = "recursive"
FROZEN = "frozen"


@dataclass(frozen=True)
class ExpansionConfig:
    max_depth: int = 3
    strategy: str = RECURSIVE
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    params: GenerationParams = field(default_factory=GenerationParams)
    # Target wording for a sub-task, e.g. "{subtask} in desktop".
    subtask_template: str = "{subtask}"
    parallelism: int = 1

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.strategy not in (RECURSIVE, FROZEN):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if "{subtask}" not in self.subtask_template:
            raise ValueError("subtask_template must contain '{subtask}'")


@dataclass
class TraceRecord:
    subtask: str
    depth: int
    status: str  # expanded | depth-exceeded | accepted-nonprimitive
    prompt: str = ""
    prompt_key: str = ""
    completion: str = ""
    steps: list[str] = field(default_factory=list)
    best_score: float | None = None

    @property
    def step_count(self) -> int:
        return len(self.steps)


@dataclass
class ExpansionTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def expanded(self) -> list[TraceRecord]:
        return [r for r in self.records if r.status == "expanded"]

    @property
    def exceeded(self) -> list[DepthExceeded]:
        return [DepthExceeded(r.subtask, r.depth) for r in self.records if r.status == "depth-exceeded"]

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            row = asdict(r)
            row["step_count"] = r.step_count
            lines.append(json.dumps(row, ensure_ascii=False, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def expansion_target(subtask: str, config: ExpansionConfig) -> TargetSpec:
    verbs = config.grounding.verb_list.verbs if config.strategy == FROZEN else None
    core = config.subtask_template.format(subtask=subtask)
    return TargetSpec(core, phase_count=1, verb_restriction=verbs)


def _decompose(source, subtask, config, llm) -> TraceRecord:
    prompt = build_prompt(source, expansion_target(subtask, config)).full_text
    text = complete(prompt, config.params, llm)
    task = parse_completion(text, expected=1, description=subtask)
    return TraceRecord(
        subtask=subtask,
        depth=0,
        status="expanded",
        prompt=prompt,
        prompt_key=prompt_key(prompt, config.params, llm.model),
        completion=text,
        steps=task.steps,
    )


def expand_action(
    source: PhaseStepTask,
    subtask: str,
    strategy: str,
    llm: CompletionBackend,
    config: ExpansionConfig | None = None,
) -> list[str]:
    config = config or ExpansionConfig()
    if strategy != config.strategy:
        config = replace(config, strategy=strategy)
    return _decompose(source, subtask, config, llm).steps


def expand_tree(
    tree: BTNode,
    config: ExpansionConfig,
    source: PhaseStepTask,
    llm: CompletionBackend,
    encoder: TextEncoder,
) -> tuple[BTNode, ExpansionTrace]:
    """Expand every non-primitive Action of ``tree`` (pre-order)."""
    trace = ExpansionTrace()
    grounding = config.grounding
    prefetched: dict[str, TraceRecord] = {}

    if config.parallelism > 1 and getattr(llm, "deterministic", False):
        pending = []
        for node in tree.walk():
            if node.kind is Kind.ACTION and node.text not in pending:
                if not classify(node.text, grounding, encoder).primitive:
                    pending.append(node.text)
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            done = pool.map(lambda s: _decompose(source, s, config, llm), pending)
            prefetched = dict(zip(pending, done))

    def leaf(text: str, is_new: bool) -> BTNode:
        node = bt_core.action(text)
        if is_new:
            cond = detect_extra_spec(text, grounding)
            if cond:
                return bt_core.fallback(bt_core.condition(cond), node)
        return node

    def handle(text: str, level: int, is_new: bool) -> BTNode:
        report = classify(text, grounding, encoder)
        if report.primitive:
            return leaf(text, is_new)
        if config.strategy == FROZEN and level >= 1:
            log.warning("frozen expansion kept non-primitive step %r", text)
            trace.records.append(TraceRecord(text, level, "accepted-nonprimitive", best_score=report.best_score))
            return leaf(text, is_new)
        if level >= config.max_depth:
            log.warning("%s", DepthExceeded(text, level))
            trace.records.append(TraceRecord(text, level, "depth-exceeded", best_score=report.best_score))
            return leaf(text, is_new)
        if level == 0 and text in prefetched:
            rec = replace(prefetched[text])
        else:
            rec = _decompose(source, text, config, llm)
        rec.depth = level + 1
        rec.best_score = report.best_score
        trace.records.append(rec)
        return bt_core.sequence(*(handle(step, level + 1, True) for step in rec.steps))

    def walk(node: BTNode) -> BTNode:
        if node.kind is Kind.ACTION:
            return handle(node.text, 0, False)
        if node.kind is Kind.CONDITION:
            return bt_core.condition(node.text)
        return BTNode(node.kind, tuple(walk(c) for c in node.children))

    result = bt_core.renumber(walk(tree))
    return result, trace
