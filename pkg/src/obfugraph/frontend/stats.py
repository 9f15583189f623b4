from __future__ import annotations

from dataclasses import dataclass

from .nodes import BRANCH_KINDS, LOOP_KINDS, Ast, AstNode, is_statement_kind


@dataclass
class AstStats:
    depth: dict[int, int]      # id(node) -> depth, root = 1
    children: dict[int, int]   # id(node) -> direct child count
    branch_count: int
    loop_count: int
    statement_count: int
    node_count: int


def ast_stats(ast: Ast | AstNode) -> AstStats:
    """Per-node depth/children plus branch, loop and statement totals."""
    root = ast.root if isinstance(ast, Ast) else ast
    depth: dict[int, int] = {}
    children: dict[int, int] = {}
    branches = loops = statements = 0
    stack = [(root, 1)]
    while stack:
        node, d = stack.pop()
        depth[id(node)] = d
        children[id(node)] = len(node.children)
        k = node.kind
        if k in BRANCH_KINDS:
            branches += 1
        if k in LOOP_KINDS:
            loops += 1
        if is_statement_kind(k):
            statements += 1
        stack.extend((c, d + 1) for c in node.children)
    return AstStats(depth, children, branches, loops, statements, len(depth))
