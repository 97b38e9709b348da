"""Behavior-tree data model: node types, validation, tick semantics, JSON and DOT."""

from __future__ import annotations

import enum
import json
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field, replace

from .errors import OracleMissing, TreeError


class Kind(str, enum.Enum):
    SEQUENCE = "sequence"
    FALLBACK = "fallback"
    ACTION = "action"
    CONDITION = "condition"

    @property
    def is_branch(self) -> bool:
        return self in (Kind.SEQUENCE, Kind.FALLBACK)

    @property
    def label(self) -> str:
        return self.value.capitalize()


class NodeStatus(str, enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


@dataclass(frozen=True)
class BTNode:
    kind: Kind
    children: tuple[BTNode, ...] = ()
    text: str = ""
    node_id: int | None = field(default=None, compare=True)

    @property
    def is_leaf(self) -> bool:
        return not self.kind.is_branch

    def walk(self) -> Iterator[BTNode]:
        """Yield nodes in pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def find(self, node_id: int) -> BTNode:
        for node in self.walk():
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def __len__(self) -> int:
        return sum(1 for _ in self.walk())


# Construction helpers. They return un-numbered nodes; wrap the root in
# `renumber` (or use `tree`) to assign pre-order ids.

def sequence(*children: BTNode) -> BTNode:
    return BTNode(Kind.SEQUENCE, tuple(children))


def fallback(*children: BTNode) -> BTNode:
    return BTNode(Kind.FALLBACK, tuple(children))


def action(text: str) -> BTNode:
    return BTNode(Kind.ACTION, text=text)


def condition(text: str) -> BTNode:
    return BTNode(Kind.CONDITION, text=text)


def renumber(root: BTNode, start: int = 0) -> BTNode:
    """Return a copy of ``root`` with node ids assigned in pre-order."""
    counter = start

    def visit(node: BTNode) -> BTNode:
        nonlocal counter
        node_id = counter
        counter += 1
        children = tuple(visit(c) for c in node.children)
        return replace(node, children=children, node_id=node_id)

    return visit(root)


tree = renumber


def validate(root: BTNode) -> list[str]:
    violations: list[str] = []
    seen: set[int] = set()
    for node in root.walk():
        if node.kind.is_branch:
            if not node.children:
                violations.append("branch node has no children")
            if node.text:
                violations.append(f"{node.kind.label} has text")
        else:
            if node.children:
                violations.append(f"{node.kind.label} has children")
            if not node.text or not node.text.strip():
                violations.append(f"{node.kind.label} has empty text")
        if node.node_id is None:
            violations.append("node without node_id")
        elif node.node_id in seen:
            violations.append(f"duplicate node_id {node.node_id}")
        else:
            seen.add(node.node_id)
    return violations


LeafOracle = Mapping[int, NodeStatus] | Callable[[int], NodeStatus]


def _query(oracle: LeafOracle, node_id: int) -> NodeStatus:
    if isinstance(oracle, Mapping):
        try:
            return NodeStatus(oracle[node_id])
        except KeyError:
            raise OracleMissing(node_id) from None
    status = oracle(node_id)
    if status is None:
        raise OracleMissing(node_id)
    return NodeStatus(status)


def tick(root: BTNode, oracle: LeafOracle) -> NodeStatus:
    """Run one tick traversal from ``root`` and return its status.

    Sequence stops at the first child that does not succeed; Fallback stops
    at the first child that does not fail. Leaves ask the oracle.
    """
    if root.is_leaf:
        return _query(oracle, root.node_id)
    if root.kind is Kind.SEQUENCE:
        for child in root.children:
            status = tick(child, oracle)
            if status is not NodeStatus.SUCCESS:
                return status
        return NodeStatus.SUCCESS
    for child in root.children:
        status = tick(child, oracle)
        if status is not NodeStatus.FAILURE:
            return status
    return NodeStatus.FAILURE


def count_actions(root: BTNode) -> int:
    return sum(1 for node in root.walk() if node.kind is Kind.ACTION)


def is_condition_wrapper(node: BTNode) -> bool:
    """True for a Fallback(Condition, Action) pair created by condition insertion."""
    return (
        node.kind is Kind.FALLBACK
        and len(node.children) == 2
        and node.children[0].kind is Kind.CONDITION
        and node.children[1].kind is Kind.ACTION
    )


def depth(root: BTNode, skip_condition_wrappers: bool = True) -> int:
    """Number of layers; a single leaf has depth 1."""
    if root.is_leaf:
        return 1
    if skip_condition_wrappers and is_condition_wrapper(root):
        return 1
    return 1 + max(depth(c, skip_condition_wrappers) for c in root.children)


# -- serialization ---------------------------------------------------------

def to_dict(node: BTNode) -> dict:
    out: dict = {"kind": node.kind.value}
    if node.kind.is_branch:
        out["children"] = [to_dict(c) for c in node.children]
    else:
        out["text"] = node.text
    return out


def from_dict(data: dict) -> BTNode:
    def build(d, path):
        if not isinstance(d, dict) or "kind" not in d:
            raise TreeError(f"{path}: expected an object with a 'kind' field")
        try:
            kind = Kind(str(d["kind"]).lower())
        except ValueError:
            raise TreeError(f"{path}: unknown node kind {d['kind']!r}") from None
        if kind.is_branch:
            kids = d.get("children") or []
            return BTNode(kind, tuple(build(c, f"{path}.children[{i}]") for i, c in enumerate(kids)))
        return BTNode(kind, text=d.get("text", ""))

    return renumber(build(data, "$"))


def dumps(node: BTNode, indent: int | None = 2) -> str:
    return json.dumps(to_dict(node), indent=indent, ensure_ascii=False)


def loads(text: str) -> BTNode:
    return from_dict(json.loads(text))


_DOT_STYLE = {
    Kind.SEQUENCE: 'shape=box, label="\u2192"',
    Kind.FALLBACK: 'shape=box, label="?"',
}


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def render_dot(root: BTNode, name: str = "BT") -> str:
    lines = [f"digraph {name} {{", "  node [fontname=\"Helvetica\"];"]
    edges = []
    for node in root.walk():
        ident = f"n{node.node_id}"
        if node.kind in _DOT_STYLE:
            style = _DOT_STYLE[node.kind]
        elif node.kind is Kind.ACTION:
            style = f'shape=box, label="{_dot_escape(node.text)}"'
        else:
            style = f'shape=ellipse, label="{_dot_escape(node.text)}"'
        lines.append(f"  {ident} [{style}];")
        edges.extend(f"  {ident} -> n{c.node_id};" for c in node.children)
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
