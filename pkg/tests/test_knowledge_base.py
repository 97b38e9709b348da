import json

import numpy as np
import pytest

from btgen.encoders import CachedEncoder, ReferenceEncoder, TrigramEncoder, fingerprint
from btgen.errors import DimensionMismatch, EmptyKnowledgeBase, SchemaError, ZeroVector
from btgen.knowledge_base import (
    KBEntry,
    add_entry,
    cosine_similarity,
    embed_entry,
    load_base,
    rank_sources,
    save_base,
    select_source,
    strip_to_core_phrase,
)
from btgen.phase_step import PhaseStepTask
from btgen.resources import toy_kb_path


@pytest.mark.parametrize("text,core", [
    ("Make coffee with coffee machine in 5 phases", "Make coffee"),
    ("Desktop assembly", "Desktop assembly"),
    ("Install CPU in desktop in 1 phase, only use the following verb: pick, drop, push", "Install CPU in desktop"),
    ("Make tea in 2 phases", "Make tea"),
])
def test_strip_to_core_phrase(text, core):
    assert strip_to_core_phrase(text) == core
    assert strip_to_core_phrase(core) == core


def test_embed_entry_smallest_case():
    enc = TrigramEncoder()
    task = PhaseStepTask("d", (("s",),))
    expected = enc.encode("d") + enc.encode("s")
    expected /= np.linalg.norm(expected)
    assert np.allclose(embed_entry(task, enc), expected)


def test_embed_entry_deterministic_and_order_free():
    enc = TrigramEncoder()
    a = PhaseStepTask("toy", (("pick cup", "place cup"), ("push lid",)))
    b = PhaseStepTask("toy", (("push lid",), ("pick cup", "place cup")))
    assert np.array_equal(embed_entry(a, enc), embed_entry(a, enc))
    # direct computation of the normalized mean
    vecs = [enc.encode(t) for t in ["toy", "pick cup", "place cup", "push lid"]]
    mean = np.mean(vecs, axis=0)
    assert np.allclose(embed_entry(b, enc), mean / np.linalg.norm(mean))
    assert np.allclose(embed_entry(a, enc), embed_entry(b, enc))


def test_cosine_examples():
    v = np.array([1.0, 2.0, -1.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 3]) == 0.0
    assert cosine_similarity(2 * v, v) == pytest.approx(1.0)
    with pytest.raises(ZeroVector):
        cosine_similarity([0, 0], [1, 1])
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 0], [1])


def test_select_desktop_assembly_picks_wheel(reference_encoder):
    base = load_base(toy_kb_path(), reference_encoder)
    assert sorted(e.category for e in base) == [
        "household cleaning", "kitchen cooking", "logistics packaging", "manufacturing assembly"
    ]
    entry, score = select_source("Desktop assembly", base, reference_encoder)
    assert entry.id == "assembly-wheel"
    assert entry.task.phase_sizes == [2, 3, 3]
    others = [s for e, s in rank_sources("Desktop assembly", base, reference_encoder)[1:]]
    assert score > max(others)


def test_select_single_entry(reference_encoder):
    base = load_base(toy_kb_path(), reference_encoder)[:1]
    assert select_source("anything", base, reference_encoder)[0] is base[0]


def test_select_tie_lowest_id():
    enc = TrigramEncoder()
    task = PhaseStepTask("same", (("pick",),))
    emb = embed_entry(task, enc)
    base = [KBEntry("b", "", task, emb, fingerprint(enc)), KBEntry("a", "", task, emb, fingerprint(enc))]
    assert select_source("same", base, enc)[0].id == "a"


def test_select_empty():
    with pytest.raises(EmptyKnowledgeBase):
        select_source("x", [], TrigramEncoder())


def test_save_load_round_trip(tmp_path, reference_encoder):
    base = load_base(toy_kb_path(), reference_encoder)
    path = tmp_path / "kb.json"
    save_base(base, path)
    assert load_base(path) == base


def test_load_missing_phases(tmp_path):
    path = tmp_path / "kb.json"
    path.write_text(json.dumps({"entries": [{"id": "x", "description": "d"}]}))
    with pytest.raises(SchemaError) as info:
        load_base(path)
    assert "phases" in str(info.value)


@pytest.mark.parametrize("payload", [
    [],
    {"entries": [{"id": "x", "phases": "nope"}]},
    {"entries": [{"id": "x", "phases": [[]]}]},
    {"entries": [{"id": "x", "phases": [["a"]]}, {"id": "x", "phases": [["b"]]}]},
    {"entries": [{"id": "x", "phases": [["a"]], "embedding": ["a"]}]},
])
def test_load_schema_errors(tmp_path, payload):
    path = tmp_path / "kb.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(SchemaError):
        load_base(path)


def test_load_invalid_json(tmp_path):
    path = tmp_path / "kb.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_base(path)


def test_cached_embedding_skips_encoder(tmp_path):
    enc = CachedEncoder(ReferenceEncoder.default())
    path = tmp_path / "kb.json"
    save_base(load_base(toy_kb_path(), enc), path)

    counting = CachedEncoder(ReferenceEncoder.default())
    loaded = load_base(path, counting)
    assert counting.calls == 0
    assert all(e.encoder_fingerprint == fingerprint(counting) for e in loaded)


def test_stale_fingerprint_recomputes(tmp_path):
    path = tmp_path / "kb.json"
    save_base(load_base(toy_kb_path(), CachedEncoder(ReferenceEncoder.default())), path)
    trigram = CachedEncoder(TrigramEncoder())
    loaded = load_base(path, trigram)
    assert trigram.calls > 0
    assert all(e.embedding.shape == (512,) for e in loaded)


def test_add_entry_rejects_duplicate():
    task = PhaseStepTask("t", (("a",),))
    base = [KBEntry("x", "", task)]
    with pytest.raises(SchemaError):
        add_entry(base, KBEntry("x", "", task))
    assert len(add_entry(base, KBEntry("y", "", task))) == 2
