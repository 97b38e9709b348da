"""Structure and assembly metrics, and the prompt ablation harness."""

from __future__ import annotations

import csv
import io
import statistics
from collections.abc import Sequence as Seq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import bt_core
from .bt_core import BTNode, Kind
from .errors import BTGenError, NoSecondLayer
from .grounding import GroundingConfig, extract_verb
from .model_gateway import CompletionBackend, GenerationParams, complete
from .phase_step import (
    PhaseStepTask,
    build_plain_prompt,
    build_prompt,
    has_phase_headers,
    parse_completion,
    to_tree,
)

DEFAULT_MATING_VERBS = frozenset({"attach", "connect", "align"})


@dataclass(frozen=True)
class StructureMetrics:
    n_min: int
    n_max: int
    ratio: float
    n_total: int


@dataclass(frozen=True)
class MatingLexicon:
    verbs: frozenset[str] = DEFAULT_MATING_VERBS

    def __post_init__(self):
        verbs = frozenset(v.lower() for v in self.verbs)
        if not verbs:
            raise ValueError("mating lexicon must be non-empty")
        object.__setattr__(self, "verbs", verbs)


def _layer2_count(node: BTNode) -> int | None:
    """Action leaves under a second-layer node; None when the node is itself a leaf."""
    if node.is_leaf or bt_core.is_condition_wrapper(node):
        return None
    return bt_core.count_actions(node)


def structure_metrics(tree: BTNode) -> StructureMetrics:
    """Balance of the second layer.

    Condition checks are ignored, so an inserted Fallback(Condition, Action)
    counts as its Action. A leaf directly under the root forces n_min to 0.
    ``n_max`` is the largest count among internal second-layer nodes (1 when
    there are none, keeping the ratio defined).
    """
    if tree.is_leaf:
        raise NoSecondLayer("a single leaf has no second layer")
    counts = [_layer2_count(c) for c in tree.children]
    internal = [c for c in counts if c is not None]
    n_max = max(internal, default=0) or 1
    n_min = 0 if None in counts else min(internal)
    return StructureMetrics(n_min, n_max, n_min / n_max, bt_core.count_actions(tree))


def count_part_mating(tree: BTNode, lexicon: MatingLexicon | None = None, config: GroundingConfig | None = None) -> int:
    lexicon = lexicon or MatingLexicon()
    config = config or GroundingConfig()
    return sum(
        1
        for node in tree.walk()
        if node.kind is Kind.ACTION and extract_verb(node.text, config) in lexicon.verbs
    )


# -- ablation --------------------------------------------------------------

@dataclass(frozen=True)
class PromptVariant:
    """A named prompt. ``source`` None means the plain no-Phase-Step prompt."""

    name: str
    source: PhaseStepTask | None = None

    def render(self, description: str) -> str:
        if self.source is None:
            return build_plain_prompt(description)
        return build_prompt(self.source, description).full_text


@dataclass(frozen=True)
class SampleResult:
    prompt_name: str
    sample: int
    target: str
    ratio: float | None = None
    n_total: int | None = None
    n_mate: int | None = None
    error: str | None = None


@dataclass(frozen=True)
class AblationRow:
    prompt_name: str
    avg_ratio: float
    avg_n_total: float
    avg_n_mate: float | None
    sample_count: int
    error_count: int = 0


@dataclass
class AblationResult:
    rows: list[AblationRow]
    samples: list[SampleResult] = field(default_factory=list)


def completion_to_tree(text: str, lenient: bool = False) -> BTNode:
    """Phase-Step output becomes a 3-layer tree; phase-less output a flat sequence."""
    task = parse_completion(text, lenient=lenient)
    if has_phase_headers(text):
        return to_tree(task)
    return bt_core.renumber(bt_core.sequence(*(bt_core.action(s) for s in task.steps)))


def _run_sample(variant, index, target, backend, params, lexicon) -> SampleResult:
    try:
        text = complete(variant.render(target), params, backend)
        tree = completion_to_tree(text, lenient=variant.source is None)
        m = structure_metrics(tree)
        n_mate = count_part_mating(tree, lexicon) if lexicon is not None else None
        return SampleResult(variant.name, index, target, m.ratio, m.n_total, n_mate)
    except BTGenError as exc:
        return SampleResult(variant.name, index, target, error=f"{type(exc).__name__}: {exc}")


def summarize(samples: Seq[SampleResult], variant_names: Seq[str]) -> list[AblationRow]:
    rows = []
    for name in variant_names:
        ok = [s for s in samples if s.prompt_name == name and s.error is None]
        errors = sum(1 for s in samples if s.prompt_name == name and s.error is not None)
        if not ok:
            continue
        mates = [s.n_mate for s in ok if s.n_mate is not None]
        rows.append(
            AblationRow(
                name,
                statistics.fmean(s.ratio for s in ok),
                statistics.fmean(s.n_total for s in ok),
                statistics.fmean(mates) if mates else None,
                len(ok),
                errors,
            )
        )
    return rows


def run_ablation(
    variants: Seq[PromptVariant],
    target_descriptions: Seq[str],
    backend: CompletionBackend,
    params: GenerationParams | None = None,
    lexicon: MatingLexicon | None = None,
    parallelism: int = 1,
) -> AblationResult:
    """Generate one task per (variant, target) and average the metrics per variant.

    Failed samples are kept in ``samples`` with their error and left out of
    the means.
    """
    if not variants or not target_descriptions:
        raise ValueError("need at least one variant and one target description")
    params = params or GenerationParams()
    jobs = [(v, i, t) for v in variants for i, t in enumerate(target_descriptions)]

    def run(job):
        return _run_sample(*job, backend, params, lexicon)

    if parallelism > 1 and getattr(backend, "deterministic", False):
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            samples = list(pool.map(run, jobs))
    else:
        samples = [run(job) for job in jobs]
    return AblationResult(summarize(samples, [v.name for v in variants]), samples)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def samples_csv(samples: Seq[SampleResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["prompt_name", "sample", "target", "ratio", "n_total", "n_mate", "error"])
    for s in samples:
        writer.writerow([s.prompt_name, s.sample, s.target, _fmt(s.ratio), _fmt(s.n_total), _fmt(s.n_mate), s.error or ""])
    return buf.getvalue()


def summary_csv(rows: Seq[AblationRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["prompt_name", "avg_ratio", "avg_n_total", "avg_n_mate", "sample_count", "error_count"])
    for r in rows:
        writer.writerow([r.prompt_name, _fmt(r.avg_ratio), _fmt(r.avg_n_total), _fmt(r.avg_n_mate), r.sample_count, r.error_count])
    return buf.getvalue()
