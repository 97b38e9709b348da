import json
import math

import numpy as np
import pytest

from btgen import bt_core
from btgen.errors import DimensionMismatch, EmptyInput, NotAnAction, ZeroVector
from btgen.grounding import (
    GroundingConfig,
    VerbList,
    angular_similarity,
    classify,
    detect_extra_spec,
    extract_verb,
    insert_condition,
)
from btgen.evaluation import structure_metrics
from btgen.resources import data_path, load_task

from conftest import act, seq


def _lexicon_oracle(word_a, word_b):
    """Angular similarity computed straight from the lexicon JSON, no package code."""
    data = json.loads(data_path("reference_lexicon.json").read_text())
    axes = data["axes"]

    def vec(word):
        v = [0.0] * len(axes)
        for axis, w in data["lexicon"][word].items():
            v[axes.index(axis)] = w
        return v

    a, b = vec(word_a), vec(word_b)
    cos = sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))
    return 1 - 2 * math.acos(max(-1.0, min(1.0, cos))) / math.pi


@pytest.mark.parametrize("text,verb", [
    ("Pick the wheel", "pick"),
    ("Install CPU", "install"),
    ("Pick up the CPU", "pick"),
    ("Carefully place the CPU into the socket", "place"),
    ("Put away the tools.", "put"),
    ("Fasten, then check", "fasten"),
])
def test_extract_verb(text, verb):
    assert extract_verb(text) == verb


def test_extract_verb_custom_override():
    cfg = GroundingConfig(override_lexicon={"screw in": "rotate"})
    assert extract_verb("Screw in the bulb", cfg) == "rotate"


def test_extract_verb_empty():
    with pytest.raises(EmptyInput):
        extract_verb("  ... ")


def test_angular_similarity_examples():
    a = np.array([1.0, 2.0, 3.0])
    assert angular_similarity(a, a) == pytest.approx(1.0)
    assert angular_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
    assert angular_similarity(a, -a) == pytest.approx(-1.0)


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 1.3, 2.0, 2.9])
def test_angular_similarity_matches_angle(theta):
    # oracle: vectors built from a known angle
    u = [1.0, 0.0]
    v = [math.cos(theta), math.sin(theta)]
    assert angular_similarity(u, v) == pytest.approx(1 - 2 * theta / math.pi, abs=1e-12)


def test_angular_similarity_errors():
    with pytest.raises(ZeroVector):
        angular_similarity([0, 0], [1, 0])
    with pytest.raises(DimensionMismatch):
        angular_similarity([1, 0], [1, 0, 0])


def test_classify_exact_match(reference_encoder, grounding):
    report = classify("Pick the wheel", grounding, reference_encoder)
    assert report.primitive and report.best_score == 1.0 and report.best_match == "pick"


def test_classify_install_non_primitive(reference_encoder, grounding):
    report = classify("Install CPU", grounding, reference_encoder)
    assert not report.primitive
    assert report.best_score == pytest.approx(_lexicon_oracle("install", "place"), abs=1e-12)
    assert report.best_score == pytest.approx(0.194412812, abs=1e-8)
    assert report.best_match == "place"


@pytest.mark.parametrize("word,match,score", [
    ("connect", "place", 0.531532747),
    ("attach", "place", 0.531532747),
    ("secure", "push", 0.570446575),
    ("insert", "place", 0.591014833),
])
def test_classify_reference_scores(reference_encoder, grounding, word, match, score):
    report = classify(f"{word.capitalize()} the part", grounding, reference_encoder)
    assert report.primitive
    assert report.best_match == match
    assert report.best_score == pytest.approx(score, abs=1e-8)
    assert report.best_score == pytest.approx(_lexicon_oracle(word, match), abs=1e-12)


class _FixedEncoder:
    """Places 'fasten' at exactly 60 degrees from 'rotate' (angular similarity 1/3)."""

    name, dim = "fixed", 3

    def encode(self, text):
        if text == "fasten":
            return np.array([math.cos(math.pi / 3), math.sin(math.pi / 3), 0.0])
        if text == "rotate":
            return np.array([1.0, 0.0, 0.0])
        return np.array([0.0, 0.0, 1.0])


def test_threshold_boundary_inclusive():
    enc = _FixedEncoder()
    score = angular_similarity(enc.encode("fasten"), enc.encode("rotate"))
    assert score == pytest.approx(1 / 3)
    at = classify("Fasten screws", GroundingConfig(threshold=score), enc)
    assert at.primitive and at.best_score == score
    above = classify("Fasten screws", GroundingConfig(threshold=score + 1e-9), enc)
    assert not above.primitive


def test_gpt3_table3_all_primitive(reference_encoder, grounding):
    for step in load_task("gpt3_desktop").steps:
        assert classify(step, grounding, reference_encoder).primitive, step


def test_verb_list_invariants():
    with pytest.raises(ValueError):
        VerbList(())
    with pytest.raises(ValueError):
        VerbList(("Pick",))
    with pytest.raises(ValueError):
        VerbList(("pick", "pick"))
    assert VerbList.parse("pick, drop place").verbs == ("pick", "drop", "place")


def test_config_threshold_range():
    with pytest.raises(ValueError):
        GroundingConfig(threshold=1.5)


def test_config_from_json(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({
        "threshold": 0.4,
        "verbs": ["pick", "place"],
        "overrides": {"hand over": "place"},
        "conditions": {"quality_adjectives": {"precision": "precise"}},
    }))
    cfg = GroundingConfig.from_file(path)
    assert cfg.threshold == 0.4
    assert cfg.verb_list.verbs == ("pick", "place")
    assert extract_verb("Hand over the cup", cfg) == "place"
    assert extract_verb("Pick up the cup", cfg) == "pick"
    assert detect_extra_spec("Drill holes for precision", cfg) == "if precise"


def test_config_from_text(tmp_path):
    path = tmp_path / "verbs.txt"
    path.write_text("pick\nplace\nweld\n")
    assert GroundingConfig.from_file(path).verb_list.verbs == ("pick", "place", "weld")


@pytest.mark.parametrize("text,cond", [
    ("Move robot arm to desired location", "if reaches desired location"),
    ("Tighten clamps for stability", "if stable"),
    ("Pick the wheel", None),
    ("Move the power cable to the fan and plug it in", "if reaches the fan"),
    ("Test for proper functionality", None),
    ("Place the cup for safety.", "if safe"),
])
def test_detect_extra_spec(text, cond):
    assert detect_extra_spec(text) == cond


def test_insert_condition_structure():
    tree = bt_core.renumber(seq(act("m")))
    out = insert_condition(tree, 1, "if c")
    assert out == bt_core.renumber(seq(bt_core.fallback(bt_core.condition("if c"), act("m"))))
    assert tree == bt_core.renumber(seq(act("m")))  # original untouched


def test_insert_condition_rejects_condition():
    tree = bt_core.renumber(seq(bt_core.fallback(bt_core.condition("if c"), act("m"))))
    with pytest.raises(NotAnAction):
        insert_condition(tree, 2, "if d")
    with pytest.raises(NotAnAction):
        insert_condition(tree, 99, "if d")


def test_insert_condition_preserves_counts(wheel_tree):
    out = insert_condition(wheel_tree, 2, "if stable")
    assert bt_core.count_actions(out) == bt_core.count_actions(wheel_tree)
    assert len(out) == len(wheel_tree) + 2
    assert structure_metrics(out) == structure_metrics(wheel_tree)
    assert bt_core.validate(out) == []
