"""AST node types and the node-kind vocabulary.

Children are stored as one ordered list in source order.  ``FIELDS`` records
how each kind's children map onto named ESTree fields, so the parser, the
ESTree bridge, the printer and the graph builder all agree on layout.
Optional fields that are present are flagged in ``attrs`` under the field
name; absent optional fields simply contribute no child.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Iterator

VOCAB_VERSION = "1"

ONE, OPT, LIST = "one", "opt", "list"

FIELDS: dict[str, list[tuple[str, str]]] = {
    "Program": [("body", LIST)],
    "ExpressionStatement": [("expression", ONE)],
    "BlockStatement": [("body", LIST)],
    "EmptyStatement": [],
    "DebuggerStatement": [],
    "WithStatement": [("object", ONE), ("body", ONE)],
    "ReturnStatement": [("argument", OPT)],
    "LabeledStatement": [("label", ONE), ("body", ONE)],
    "BreakStatement": [("label", OPT)],
    "ContinueStatement": [("label", OPT)],
    "IfStatement": [("test", ONE), ("consequent", ONE), ("alternate", OPT)],
    "SwitchStatement": [("discriminant", ONE), ("cases", LIST)],
    "SwitchCase": [("test", OPT), ("consequent", LIST)],
    "ThrowStatement": [("argument", ONE)],
    "TryStatement": [("block", ONE), ("handler", OPT), ("finalizer", OPT)],
    "CatchClause": [("param", OPT), ("body", ONE)],
    "WhileStatement": [("test", ONE), ("body", ONE)],
    "DoWhileStatement": [("body", ONE), ("test", ONE)],
    "ForStatement": [("init", OPT), ("test", OPT), ("update", OPT), ("body", ONE)],
    "ForInStatement": [("left", ONE), ("right", ONE), ("body", ONE)],
    "ForOfStatement": [("left", ONE), ("right", ONE), ("body", ONE)],
    "FunctionDeclaration": [("id", OPT), ("params", LIST), ("body", ONE)],
    "VariableDeclaration": [("declarations", LIST)],
    "VariableDeclarator": [("id", ONE), ("init", OPT)],
    "Identifier": [],
    "Literal": [],
    "TemplateLiteral": [],  # quasis/expressions interleaved, see estree.py
    "TemplateElement": [],
    "ThisExpression": [],
    "ArrayExpression": [("elements", LIST)],
    "ObjectExpression": [("properties", LIST)],
    "Property": [("key", ONE), ("value", ONE)],
    "FunctionExpression": [("id", OPT), ("params", LIST), ("body", ONE)],
    "ArrowFunctionExpression": [("params", LIST), ("body", ONE)],
    "UnaryExpression": [("argument", ONE)],
    "UpdateExpression": [("argument", ONE)],
    "BinaryExpression": [("left", ONE), ("right", ONE)],
    "LogicalExpression": [("left", ONE), ("right", ONE)],
    "AssignmentExpression": [("left", ONE), ("right", ONE)],
    "ConditionalExpression": [("test", ONE), ("consequent", ONE), ("alternate", ONE)],
    "CallExpression": [("callee", ONE), ("arguments", LIST)],
    "NewExpression": [("callee", ONE), ("arguments", LIST)],
    "MemberExpression": [("object", ONE), ("property", ONE)],
    "SequenceExpression": [("expressions", LIST)],
    "Unknown": [],
}

# Published, versioned node-kind vocabulary.  Index order is part of the
# on-disk GraphRecord format: append only.
NODE_KINDS: tuple[str, ...] = tuple(FIELDS)
KIND_INDEX: dict[str, int] = {k: i for i, k in enumerate(NODE_KINDS)}

BRANCH_KINDS = frozenset({"IfStatement", "SwitchCase", "ConditionalExpression"})
LOOP_KINDS = frozenset({
    "ForStatement", "ForInStatement", "ForOfStatement",
    "WhileStatement", "DoWhileStatement",
})
FUNCTION_KINDS = frozenset({
    "FunctionDeclaration", "FunctionExpression", "ArrowFunctionExpression",
})


def is_statement_kind(kind: str) -> bool:
    return kind.endswith("Statement") or kind.endswith("Declaration")


@dataclass(eq=False)
class AstNode:
    kind: str
    value: str | None = None
    line: int = 1
    column: int = 0
    children: list["AstNode"] = field(default_factory=list)
    attrs: dict[str, Any] = field(default_factory=dict)
    raw: str | None = None  # literal source text; not part of structure

    def walk(self) -> Iterator["AstNode"]:
        """Pre-order traversal, children in source order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __repr__(self) -> str:
        v = f" {self.value!r}" if self.value is not None else ""
        return f"<{self.kind}{v} @{self.line}:{self.column} [{len(self.children)}]>"


@dataclass(eq=False)
class Ast:
    root: AstNode
    node_count: int
    source_digest: str

    @classmethod
    def from_root(cls, root: AstNode, source: str | bytes = b"") -> "Ast":
        if isinstance(source, str):
            source = source.encode("utf-8", "surrogatepass")
        return cls(root, sum(1 for _ in root.walk()), hashlib.sha256(source).hexdigest())


def make(kind: str, line: int = 1, column: int = 0, value: str | None = None,
         attrs: dict | None = None, raw: str | None = None, **fields) -> AstNode:
    """Build a node from named fields laid out per ``FIELDS``."""
    node = AstNode(kind, value, line, column, [], dict(attrs or {}), raw)
    for name, arity in FIELDS[kind]:
        item = fields.pop(name, None)
        if arity == LIST:
            node.children.extend(item or [])
        elif arity == ONE:
            if item is None:
                raise ValueError(f"{kind}.{name} is required")
            node.children.append(item)
        elif item is not None:
            node.attrs[name] = True
            node.children.append(item)
    if fields:
        raise ValueError(f"unknown fields for {kind}: {sorted(fields)}")
    return node


def fields_of(node: AstNode) -> dict[str, Any]:
    """Inverse of ``make``: map children back onto named fields."""
    layout = FIELDS.get(node.kind, [])
    out: dict[str, Any] = {}
    kids = node.children
    fixed = sum(1 for name, a in layout
                if a == ONE or (a == OPT and node.attrs.get(name)))
    n_list = len(kids) - fixed
    i = 0
    for name, arity in layout:
        if arity == ONE:
            out[name] = kids[i]
            i += 1
        elif arity == OPT:
            if node.attrs.get(name):
                out[name] = kids[i]
                i += 1
            else:
                out[name] = None
        else:
            out[name] = kids[i:i + n_list]
            i += n_list
    return out


def structure(node: AstNode) -> tuple:
    """Position-free structural fingerprint used for equality checks."""
    return (node.kind, node.value, tuple(sorted(node.attrs.items())),
            tuple(structure(c) for c in node.children))
