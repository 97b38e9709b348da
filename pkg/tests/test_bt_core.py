import json

import pytest

from btgen import bt_core
from btgen.bt_core import Kind, NodeStatus, count_actions, render_dot, renumber, tick, validate
from btgen.errors import OracleMissing
from btgen.phase_step import to_tree
from btgen.resources import load_task

from conftest import act, seq

S, F, R = NodeStatus.SUCCESS, NodeStatus.FAILURE, NodeStatus.RUNNING


def test_validate_well_formed():
    assert validate(renumber(seq(act("a"), act("b")))) == []


def test_validate_action_with_child():
    bad = renumber(bt_core.BTNode(Kind.ACTION, (act("x"),), text="a"))
    assert "Action has children" in validate(bad)


def test_validate_empty_branch():
    assert validate(renumber(seq())) == ["branch node has no children"]


def test_validate_duplicate_ids():
    a = bt_core.BTNode(Kind.ACTION, text="a", node_id=1)
    root = bt_core.BTNode(Kind.SEQUENCE, (a, a), node_id=0)
    assert validate(root) == ["duplicate node_id 1"]


def test_validate_empty_leaf_text():
    assert validate(renumber(seq(act("  ")))) == ["Action has empty text"]


def test_sequence_stops_at_first_failure():
    root = renumber(seq(act("A"), act("B"), act("C")))
    queried = []

    def oracle(node_id):
        queried.append(node_id)
        return {1: S, 2: F, 3: S}[node_id]

    assert tick(root, oracle) is F
    assert queried == [1, 2]


def test_fallback_stops_at_first_success():
    root = renumber(bt_core.fallback(act("A"), act("B")))
    assert tick(root, {1: F, 2: S}) is S


def test_fallback_condition_skips_action():
    root = renumber(bt_core.fallback(bt_core.condition("if stable"), act("Tighten clamps")))
    # only the condition has an oracle entry: querying the Action would raise
    assert tick(root, {1: S}) is S


def test_running_propagates():
    root = renumber(seq(act("A"), act("B")))
    assert tick(root, {1: R, 2: S}) is R
    root = renumber(bt_core.fallback(act("A"), act("B")))
    assert tick(root, {1: R, 2: S}) is R


def test_oracle_missing():
    root = renumber(seq(act("A"), act("B")))
    with pytest.raises(OracleMissing) as info:
        tick(root, {1: S})
    assert info.value.node_id == 2


def test_count_actions_examples():
    assert count_actions(to_tree(load_task("ps_wheel"))) == 8
    assert count_actions(renumber(act("x"))) == 1
    assert count_actions(to_tree(load_task("gpt3_desktop"))) == 11


def test_count_actions_excludes_conditions():
    root = renumber(seq(bt_core.fallback(bt_core.condition("if stable"), act("a")), act("b")))
    assert count_actions(root) == 2


def test_render_dot_single_action():
    dot = render_dot(renumber(act("Pick the wheel")))
    assert dot.count("[shape=") == 1
    assert 'shape=box, label="Pick the wheel"' in dot
    assert "->" not in dot


def test_render_dot_counts():
    dot = render_dot(renumber(seq(act("a"), act("b"))))
    assert dot.count("[shape=") == 3
    assert dot.count("->") == 2
    assert 'label="→"' in dot


def test_render_dot_shapes():
    root = renumber(seq(bt_core.fallback(bt_core.condition('if "ok"'), act("a"))))
    dot = render_dot(root)
    assert 'shape=box, label="?"' in dot
    assert 'shape=ellipse, label="if \\"ok\\""' in dot


def test_render_dot_figure5_tree():
    root = to_tree(load_task("gpt3_desktop"))
    dot = render_dot(root)
    # root + 4 phase sequences use the arrow glyph; 11 plain action boxes
    assert dot.count('label="→"') == 5
    assert dot.count("[shape=box") - 5 == 11
    assert [c.kind for c in root.children] == [Kind.SEQUENCE] * 4


def test_json_round_trip(wheel_tree):
    text = bt_core.dumps(wheel_tree)
    assert bt_core.loads(text) == wheel_tree
    data = json.loads(text)
    assert data["kind"] == "sequence"
    assert data["children"][0]["children"][0] == {"kind": "action", "text": "Put car at a conveyor"}


def test_node_ids_preorder(wheel_tree):
    assert [n.node_id for n in wheel_tree.walk()] == list(range(len(wheel_tree)))


def test_depth_ignores_condition_wrappers():
    plain = renumber(seq(seq(act("a"))))
    wrapped = renumber(seq(seq(bt_core.fallback(bt_core.condition("if c"), act("a")))))
    assert bt_core.depth(plain) == bt_core.depth(wrapped) == 3
    assert bt_core.depth(wrapped, skip_condition_wrappers=False) == 4
