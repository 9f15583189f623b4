"""AST to extended code graph (Ast, Data and Control edges) and graph records.

Node order is the pre-order traversal of the tree with children in source
order; edges are emitted Ast first (pre-order), then Data (in use-site
order), then Control (in pre-order of the owning statement), and repeated
(src, dst, type) triples are dropped after their first occurrence.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .frontend import KIND_INDEX, Ast, AstNode
from .frontend.estree import FormatError
from .frontend.nodes import FUNCTION_KINDS

AST, DATA, CONTROL = 0, 1, 2
EDGE_TYPES = {AST: "Ast", DATA: "Data", CONTROL: "Control"}

VALUE_BUCKETS = 2 ** 14
MAX_VALUE_CHARS = 64
LINE_CAP, COLUMN_CAP = 10000, 1000
D_TYPE, D_VALUE, D_POS = 48, 48, 32

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def normalize_value(node: AstNode) -> str:
    if node.value is None:
        return ""
    if node.kind == "Literal" and node.attrs.get("ltype") == "string":
        return node.value[:MAX_VALUE_CHARS]
    return node.value  # numbers already carry canonical decimal text


def value_bucket(text: str, buckets: int = VALUE_BUCKETS) -> int:
    return fnv1a_64(text.encode("utf-8", "surrogatepass")) % buckets


def encode_positions(line: int, column: int, d_pos: int = D_POS) -> np.ndarray:
    """Fixed sinusoidal features: first half encodes the line, second half the
    column.  Within each half, even slots hold sin and odd slots cos of
    ``pos / 10000 ** (2i / half)``."""
    half = d_pos // 2
    out = np.empty(d_pos, dtype=np.float64)
    for offset, pos in ((0, min(line, LINE_CAP)), (half, min(column, COLUMN_CAP))):
        for i in range(0, half, 2):
            angle = pos / 10000.0 ** (i / half)
            out[offset + i] = math.sin(angle)
            if i + 1 < half:
                out[offset + i + 1] = math.cos(angle)
    return out


def position_table(lines: np.ndarray, columns: np.ndarray, d_pos: int = D_POS) -> np.ndarray:
    """Vectorized ``encode_positions`` over many nodes."""
    half = d_pos // 2
    idx = np.arange(0, half, 2)
    freq = 1.0 / 10000.0 ** (idx / half)
    out = np.empty((len(lines), d_pos), dtype=np.float64)
    for offset, pos in ((0, np.minimum(lines, LINE_CAP)), (half, np.minimum(columns, COLUMN_CAP))):
        ang = pos.astype(np.float64)[:, None] * freq[None, :]
        out[:, offset + idx] = np.sin(ang)
        odd = idx + 1
        keep = odd < half
        out[:, offset + odd[keep]] = np.cos(ang[:, keep])
    return out


@dataclass
class CodeGraph:
    kind_ids: np.ndarray          # (n,)
    value_buckets: np.ndarray     # (n,)
    lines: np.ndarray             # (n,)
    columns: np.ndarray           # (n,)
    edges: np.ndarray             # (E, 3): src, dst, type
    label: int | None = None
    values: list[str] | None = field(default=None, repr=False)  # not serialized

    @property
    def n(self) -> int:
        return len(self.kind_ids)

    def edges_of(self, etype: int) -> np.ndarray:
        return self.edges[self.edges[:, 2] == etype][:, :2]

    def undirected_pairs(self) -> np.ndarray:
        """Unique unordered node pairs over all edge types (no self loops)."""
        if len(self.edges) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        a = np.minimum(self.edges[:, 0], self.edges[:, 1])
        b = np.maximum(self.edges[:, 0], self.edges[:, 1])
        pairs = np.unique(np.stack([a, b], 1), axis=0)
        return pairs[pairs[:, 0] != pairs[:, 1]]

    def weighted_edges(self) -> dict[tuple[int, int], int]:
        """Unordered pair -> multiplicity across typed edges (weight 1 each)."""
        out: dict[tuple[int, int], int] = {}
        for s, d, _ in self.edges.tolist():
            if s == d:
                continue
            key = (s, d) if s < d else (d, s)
            out[key] = out.get(key, 0) + 1
        return out


class _Scope:
    __slots__ = ("parent", "decls")

    def __init__(self, parent: "_Scope | None"):
        self.parent = parent
        self.decls: dict[str, list[tuple[int, int]]] = {}  # name -> [(order, node idx)]

    def declare(self, name: str, order: int) -> None:
        self.decls.setdefault(name, []).append((order, order))


_BLOCK_SCOPED = {"BlockStatement", "ForStatement", "ForInStatement", "ForOfStatement",
                 "SwitchStatement", "CatchClause"}


def _non_binding_children(node: AstNode) -> set[int]:
    """Child positions holding identifiers that are names, not variable refs."""
    k = node.kind
    if k == "MemberExpression" and not node.attrs.get("computed"):
        return {1}
    if k == "Property" and not node.attrs.get("computed"):
        return {0}
    if k == "LabeledStatement":
        return {0}
    if k in ("BreakStatement", "ContinueStatement"):
        return {0} if node.children else set()
    return set()


def _function_parts(node: AstNode) -> tuple[AstNode | None, list[AstNode], AstNode]:
    if node.kind == "ArrowFunctionExpression":
        return None, node.children[:-1], node.children[-1]
    if node.attrs.get("id"):
        return node.children[0], node.children[1:-1], node.children[-1]
    return None, node.children[:-1], node.children[-1]


def _data_edges(root: AstNode, order: dict[int, int]) -> list[tuple[int, int]]:
    """def -> use edges over lexical scopes (var/function hoist to the function
    scope, let/const to the block).  A use binds to the innermost scope
    declaring its name; among that scope's declarations, the last one
    preceding the use wins, otherwise the first (hoisted) one."""
    uses: list[tuple[_Scope, str, int]] = []
    decl_sites: set[int] = set()
    program = _Scope(None)
    # stack items: (node, function scope, block scope)
    stack: list[tuple[AstNode, _Scope, _Scope]] = [(root, program, program)]
    while stack:
        node, fscope, bscope = stack.pop()
        k = node.kind
        pushes: list[tuple[AstNode, _Scope, _Scope]] = []
        if k in FUNCTION_KINDS:
            ident, params, body = _function_parts(node)
            inner = _Scope(bscope)
            if ident is not None:
                target = fscope if k == "FunctionDeclaration" else inner
                target.declare(ident.value, order[id(ident)])
                decl_sites.add(id(ident))
            for p in params:
                inner.declare(p.value, order[id(p)])
                decl_sites.add(id(p))
            if body.kind == "BlockStatement":
                # the body block shares the function scope
                pushes.extend((c, inner, inner) for c in body.children)
            else:
                pushes.append((body, inner, inner))
        elif k == "VariableDeclaration":
            target = fscope if node.value == "var" else bscope
            for decl in node.children:
                ident = decl.children[0]
                target.declare(ident.value, order[id(ident)])
                decl_sites.add(id(ident))
                pushes.extend((c, fscope, bscope) for c in decl.children[1:])
        elif k == "CatchClause":
            inner = _Scope(bscope)
            if node.attrs.get("param"):
                param = node.children[0]
                inner.declare(param.value, order[id(param)])
                decl_sites.add(id(param))
            pushes.extend((c, fscope, inner) for c in node.children[-1].children)
        elif k == "Identifier":
            if id(node) not in decl_sites:
                uses.append((bscope, node.value, order[id(node)]))
        else:
            inner = _Scope(bscope) if k in _BLOCK_SCOPED else bscope
            skip = _non_binding_children(node)
            pushes.extend((c, fscope, inner) for i, c in enumerate(node.children) if i not in skip)
        stack.extend(reversed(pushes))
    edges = []
    for scope, name, use_order in sorted(uses, key=lambda u: u[2]):
        s = scope
        while s is not None and name not in s.decls:
            s = s.parent
        if s is None:
            continue
        decls = s.decls[name]
        before = [d for d in decls if d[0] < use_order]
        src = before[-1][1] if before else decls[0][1]
        if src != use_order:
            edges.append((src, use_order))
    return edges


def _head(stmt: AstNode) -> AstNode:
    if stmt.kind == "BlockStatement" and stmt.children:
        return stmt.children[0]
    return stmt


def _tail(stmt: AstNode) -> AstNode:
    if stmt.kind == "BlockStatement" and stmt.children:
        return stmt.children[-1]
    return stmt


def _control_edges(nodes: list[AstNode], order: dict[int, int]) -> list[tuple[int, int]]:
    from .frontend.nodes import LOOP_KINDS, fields_of

    edges = []
    for node in nodes:
        k = node.kind
        if k in ("Program", "BlockStatement", "SwitchCase"):
            stmts = node.children
            if k == "SwitchCase" and node.attrs.get("test"):
                stmts = stmts[1:]
            for a, b in zip(stmts, stmts[1:]):
                edges.append((order[id(a)], order[id(b)]))
        if k == "IfStatement":
            f = fields_of(node)
            for branch in (f["consequent"], f["alternate"]):
                if branch is not None:
                    edges.append((order[id(node)], order[id(_head(branch))]))
        elif k in LOOP_KINDS:
            body = fields_of(node)["body"]
            edges.append((order[id(node)], order[id(_head(body))]))
            edges.append((order[id(_tail(body))], order[id(node)]))
    return edges


def build_graph(ast: Ast | AstNode, label: int | None = None) -> CodeGraph:
    root = ast.root if isinstance(ast, Ast) else ast
    nodes = list(root.walk())
    order = {id(n): i for i, n in enumerate(nodes)}
    edges: list[tuple[int, int, int]] = []
    for n in nodes:
        src = order[id(n)]
        edges.extend((src, order[id(c)], AST) for c in n.children)
    edges.extend((s, d, DATA) for s, d in _data_edges(root, order))
    edges.extend((s, d, CONTROL) for s, d in _control_edges(nodes, order))
    seen: set[tuple[int, int, int]] = set()
    unique = []
    for e in edges:
        if e not in seen:
            seen.add(e)
            unique.append(e)
    values = [normalize_value(n) for n in nodes]
    return CodeGraph(
        kind_ids=np.array([KIND_INDEX[n.kind] for n in nodes], dtype=np.int64),
        value_buckets=np.array([value_bucket(v) for v in values], dtype=np.int64),
        lines=np.array([n.line for n in nodes], dtype=np.int64),
        columns=np.array([n.column for n in nodes], dtype=np.int64),
        edges=np.array(unique, dtype=np.int64).reshape(-1, 3),
        label=label,
        values=values,
    )


# -- records ---------------------------------------------------------------------------

def to_graph_record(graph: CodeGraph, label: int | None = None) -> dict:
    y = graph.label if label is None else label
    if y not in (None, 0, 1):
        raise ValueError("label must be 0, 1 or None")
    x = np.stack([graph.kind_ids, graph.value_buckets, graph.lines, graph.columns], 1)
    return {
        "x": x.tolist(),
        "edge_index": [graph.edges[:, 0].tolist(), graph.edges[:, 1].tolist()],
        "edge_attr": graph.edges[:, 2].tolist(),
        "y": y,
    }


def dumps_record(graph: CodeGraph, label: int | None = None) -> str:
    return json.dumps(to_graph_record(graph, label), separators=(",", ":"))


def from_graph_record(data: bytes | str | dict) -> CodeGraph:
    try:
        rec = data if isinstance(data, dict) else json.loads(data)
        x = np.asarray(rec["x"], dtype=np.int64).reshape(-1, 4)
        ei = np.asarray(rec["edge_index"], dtype=np.int64).reshape(2, -1)
        ea = np.asarray(rec["edge_attr"], dtype=np.int64).reshape(-1)
        y = rec.get("y")
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt graph record: {exc}") from None
    n = len(x)
    if ei.shape[1] != len(ea):
        raise FormatError("edge_index and edge_attr disagree on edge count")
    if ei.size and (ei.min() < 0 or ei.max() >= n):
        raise FormatError("edge endpoint out of range")
    if y not in (None, 0, 1) or (ea.size and not set(np.unique(ea)) <= {AST, DATA, CONTROL}):
        raise FormatError("bad label or edge type")
    return CodeGraph(x[:, 0].copy(), x[:, 1].copy(), x[:, 2].copy(), x[:, 3].copy(),
                     np.stack([ei[0], ei[1], ea], 1) if len(ea) else np.zeros((0, 3), np.int64),
                     y)


def graph_equal(a: CodeGraph, b: CodeGraph) -> bool:
    return (a.label == b.label
            and all(np.array_equal(getattr(a, f), getattr(b, f))
                    for f in ("kind_ids", "value_buckets", "lines", "columns", "edges")))
