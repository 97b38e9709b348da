"""Ground generated sub-tasks to the robot's capability verbs.

A sub-task is primitive when the angular similarity between its verb and
some capability verb reaches the threshold. Sub-tasks carrying an extra
goal or quality ("Move arm to desired location", "Tighten clamps for
stability") are rewritten as Fallback(Condition, Action).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bt_core
from .bt_core import BTNode, Kind
from .encoders import TextEncoder
from .errors import DimensionMismatch, EmptyInput, NotAnAction, ZeroVector
from .phase_step import DEFAULT_VERBS

DEFAULT_OVERRIDES = {
    "pick up": "pick",
    "put away": "put",
    "put down": "put",
    "set down": "place",
    "turn on": "power",
    "switch on": "power",
}

# Leading words skipped before the verb ("Carefully place the CPU").
DEFAULT_SKIP_WORDS = frozenset(
    {"carefully", "gently", "slowly", "firmly", "then", "next", "first", "finally", "now", "please"}
)

DEFAULT_MOTION_VERBS = frozenset({"move", "bring", "carry", "transfer", "navigate", "go", "drive", "approach", "slide"})

DEFAULT_QUALITY_ADJECTIVES = {
    "stability": "stable",
    "safety": "safe",
    "alignment": "aligned",
    "security": "secure",
    "tightness": "tight",
}


@dataclass(frozen=True)
class VerbList:
    verbs: tuple[str, ...] = DEFAULT_VERBS

    def __post_init__(self):
        verbs = tuple(self.verbs)
        object.__setattr__(self, "verbs", verbs)
        if not verbs:
            raise ValueError("verb list must be non-empty")
        if any(v != v.lower() or not v.strip() for v in verbs):
            raise ValueError("verbs must be lowercase and non-empty")
        if len(set(verbs)) != len(verbs):
            raise ValueError("verbs must be unique")

    @classmethod
    def parse(cls, text: str) -> VerbList:
        return cls(tuple(v.strip().lower() for v in re.split(r"[,\s]+", text) if v.strip()))

    def __iter__(self):
        return iter(self.verbs)

    def __contains__(self, verb):
        return verb in self.verbs

    def __len__(self):
        return len(self.verbs)


@dataclass(frozen=True)
class ConditionPatterns:
    motion_verbs: frozenset[str] = DEFAULT_MOTION_VERBS
    quality_adjectives: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_QUALITY_ADJECTIVES))


@dataclass(frozen=True)
class GroundingConfig:
    threshold: float = 0.5
    verb_list: VerbList = field(default_factory=VerbList)
    override_lexicon: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_OVERRIDES))
    skip_words: frozenset[str] = DEFAULT_SKIP_WORDS
    conditions: ConditionPatterns = field(default_factory=ConditionPatterns)

    def __post_init__(self):
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [-1, 1]")

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> GroundingConfig:
        """Load from JSON, or from plain text holding one capability verb per line."""
        path = Path(path)
        text = path.read_text()
        if path.suffix != ".json":
            return cls(verb_list=VerbList.parse(text), **overrides)
        data = json.loads(text)
        kwargs: dict = {}
        if "threshold" in data:
            kwargs["threshold"] = float(data["threshold"])
        if "verbs" in data:
            kwargs["verb_list"] = VerbList(tuple(data["verbs"]))
        if "overrides" in data:
            kwargs["override_lexicon"] = {**DEFAULT_OVERRIDES, **data["overrides"]}
        if "skip_words" in data:
            kwargs["skip_words"] = frozenset(data["skip_words"])
        cond = data.get("conditions", {})
        if cond:
            kwargs["conditions"] = ConditionPatterns(
                frozenset(cond.get("motion_verbs", DEFAULT_MOTION_VERBS)),
                {**DEFAULT_QUALITY_ADJECTIVES, **cond.get("quality_adjectives", {})},
            )
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class GroundingReport:
    subtask: str
    verb: str
    best_match: str
    best_score: float
    primitive: bool


def _words(text: str) -> list[str]:
    return [w for w in (t.strip(".,;:!?()[]\"'").lower() for t in text.split()) if w]


def extract_verb(subtask: str, config: GroundingConfig | None = None) -> str:
    config = config or GroundingConfig()
    words = _words(subtask)
    if not words:
        raise EmptyInput("sub-task has no words")
    while len(words) > 1 and words[0] in config.skip_words:
        words = words[1:]
    joined = " ".join(words)
    # longest phrase first so "pick up" wins over a single-word entry
    for phrase in sorted(config.override_lexicon, key=len, reverse=True):
        if joined == phrase or joined.startswith(phrase + " "):
            return config.override_lexicon[phrase]
    return words[0]


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise ZeroVector("similarity of a zero vector is undefined")
    return a, b


def cosine(a, b) -> float:
    a, b = _check_pair(a, b)
    value = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(-1.0, value))


def angular_similarity(a, b) -> float:
    return 1.0 - 2.0 * math.acos(cosine(a, b)) / math.pi


def classify(subtask: str, config: GroundingConfig, encoder: TextEncoder) -> GroundingReport:
    verb = extract_verb(subtask, config)
    if verb in config.verb_list:
        return GroundingReport(subtask, verb, verb, 1.0, True)
    query = encoder.encode(verb)
    best_match, best_score = "", -math.inf
    for candidate in config.verb_list:
        score = angular_similarity(query, encoder.encode(candidate))
        if score > best_score:
            best_match, best_score = candidate, score
    return GroundingReport(subtask, verb, best_match, best_score, best_score >= config.threshold)


_GOAL_END = re.compile(r"\s+(?:and|then|while|so|before|after)\s+|[,;.]")


def detect_extra_spec(subtask: str, config: GroundingConfig | None = None) -> str | None:
    """Return the condition text for a sub-task with an extra specification, else None."""
    config = config or GroundingConfig()
    text = subtask.strip()
    if not text:
        return None
    try:
        verb = extract_verb(text, config)
    except EmptyInput:
        return None
    if verb in config.conditions.motion_verbs:
        m = re.search(r"\bto\s+(.+)$", text, re.IGNORECASE)
        if m:
            goal = _GOAL_END.split(m.group(1), maxsplit=1)[0].strip()
            if goal:
                return f"if reaches {goal}"
    m = re.search(r"\bfor\s+([A-Za-z]+)\s*[.;]?\s*$", text)
    if m:
        adjective = config.conditions.quality_adjectives.get(m.group(1).lower())
        if adjective:
            return f"if {adjective}"
    return None


def insert_condition(root: BTNode, action_id: int, condition: str) -> BTNode:
    """Wrap the Action ``action_id`` as Fallback(Condition(condition), Action)."""
    target = None
    for node in root.walk():
        if node.node_id == action_id:
            target = node
            break
    if target is None or target.kind is not Kind.ACTION:
        raise NotAnAction(action_id)

    def rebuild(node: BTNode) -> BTNode:
        if node.node_id == action_id:
            return bt_core.fallback(bt_core.condition(condition), replace(node, node_id=None))
        if not node.children:
            return node
        return replace(node, children=tuple(rebuild(c) for c in node.children))

    return bt_core.renumber(rebuild(root))
