"""Knowledge base of 3-layer tasks and source-task retrieval."""

from __future__ import annotations

import json
import re
from collections.abc import Iterable
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .encoders import TextEncoder, fingerprint
from .errors import DimensionMismatch, EmptyKnowledgeBase, SchemaError, ZeroVector
from .phase_step import PhaseStepTask


@dataclass(frozen=True)
class KBEntry:
    id: str
    category: str
    task: PhaseStepTask
    embedding: np.ndarray | None = field(default=None, compare=False)
    encoder_fingerprint: str | None = None

    def __eq__(self, other):
        if not isinstance(other, KBEntry):
            return NotImplemented
        same_vec = (
            (self.embedding is None and other.embedding is None)
            or (self.embedding is not None and other.embedding is not None
                and np.array_equal(self.embedding, other.embedding))
        )
        return (self.id, self.category, self.task, self.encoder_fingerprint) == (
            other.id, other.category, other.task, other.encoder_fingerprint
        ) and same_vec

    __hash__ = None


_VERB_CLAUSE = re.compile(r",?\s*only use the following verbs?\s*:.*$", re.IGNORECASE | re.DOTALL)
_PHASES = re.compile(r"\s+in\s+\d+\s+phases?\b", re.IGNORECASE)
_TOOL = re.compile(r"\s+with\s+.+$", re.IGNORECASE)


def strip_to_core_phrase(description: str) -> str:
    """Drop the verb restriction, phase count and tool decorations."""
    text = _VERB_CLAUSE.sub("", description.strip())
    text = _PHASES.sub("", text)
    text = _TOOL.sub("", text)
    return text.strip().rstrip(",").strip()


def embed_entry(task: PhaseStepTask, encoder: TextEncoder) -> np.ndarray:
    # Unit-normalized mean over the title and every step text.
    texts = [task.description, *task.steps] if task.description else task.steps
    vectors = np.array([encoder.encode(t) for t in texts], dtype=float)
    mean = vectors.mean(axis=0)
    norm = np.linalg.norm(mean)
    return mean / norm if norm > 0 else mean


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine similarity with a zero vector")
    return float(min(1.0, max(-1.0, np.dot(u, v) / (nu * nv))))


def ensure_embeddings(entries: Iterable[KBEntry], encoder: TextEncoder) -> list[KBEntry]:
    fp = fingerprint(encoder)
    out = []
    for entry in entries:
        if entry.embedding is None or entry.encoder_fingerprint != fp:
            entry = replace(entry, embedding=embed_entry(entry.task, encoder), encoder_fingerprint=fp)
        out.append(entry)
    return out


def rank_sources(target_description: str, base: list[KBEntry], encoder: TextEncoder) -> list[tuple[KBEntry, float]]:
    """All entries with their similarity to the target, best first (ties by id)."""
    if not base:
        raise EmptyKnowledgeBase("knowledge base has no entries")
    query = encoder.encode(strip_to_core_phrase(target_description))
    scored = [(e, cosine_similarity(query, e.embedding)) for e in ensure_embeddings(base, encoder)]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored


def select_source(target_description: str, base: list[KBEntry], encoder: TextEncoder) -> tuple[KBEntry, float]:
    return rank_sources(target_description, base, encoder)[0]


# -- file format -----------------------------------------------------------

def _entry_from_json(item, index: int) -> KBEntry:
    where = f"entries[{index}]"
    if not isinstance(item, dict):
        raise SchemaError(where, "entry must be an object")
    for name in ("id", "phases"):
        if name not in item:
            raise SchemaError(where, f"missing field {name!r}")
    phases = item["phases"]
    if not isinstance(phases, list) or not all(isinstance(p, list) for p in phases):
        raise SchemaError(f"{where}.phases", "must be a list of lists of step texts")
    try:
        task = PhaseStepTask(str(item.get("description", "")), phases)
    except ValueError as exc:
        raise SchemaError(f"{where}.phases", str(exc)) from None
    emb = item.get("embedding")
    if emb is not None:
        if not isinstance(emb, list) or not all(isinstance(x, (int, float)) for x in emb):
            raise SchemaError(f"{where}.embedding", "must be a list of numbers")
        emb = np.asarray(emb, dtype=float)
    return KBEntry(str(item["id"]), str(item.get("category", "")), task, emb, item.get("encoder_fingerprint"))


def load_base(path: str | Path, encoder: TextEncoder | None = None) -> list[KBEntry]:
    """Read a knowledge-base file; with ``encoder`` fill in stale or missing embeddings."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path.name}:{exc.lineno}", f"invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise SchemaError(path.name, "expected an object with an 'entries' list")
    entries = [_entry_from_json(item, i) for i, item in enumerate(data["entries"])]
    seen = set()
    for e in entries:
        if e.id in seen:
            raise SchemaError(path.name, f"duplicate id {e.id!r}")
        seen.add(e.id)
    if encoder is not None:
        entries = ensure_embeddings(entries, encoder)
    return entries


def entry_to_json(entry: KBEntry) -> dict:
    out = {
        "id": entry.id,
        "category": entry.category,
        "description": entry.task.description,
        "phases": [list(p) for p in entry.task.phases],
    }
    if entry.embedding is not None:
        out["embedding"] = [float(x) for x in entry.embedding]
        out["encoder_fingerprint"] = entry.encoder_fingerprint
    return out


def save_base(entries: Iterable[KBEntry], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"entries": [entry_to_json(e) for e in entries]}
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def add_entry(entries: list[KBEntry], entry: KBEntry) -> list[KBEntry]:
    if any(e.id == entry.id for e in entries):
        raise SchemaError(entry.id, "id already present in knowledge base")
    return [*entries, entry]
