"""Deterministic rule-based deobfuscation over the AST.

Rules: escape decoding (by canonical re-printing), ``atob`` of base64
literals, constant string concatenation, ``eval(<string literal>)``
unwrapping (nesting bounded at ``MAX_EVAL_DEPTH``) and constant bracket
access to dot access.  Rules run to a fixpoint; a pass whose printed output
fails to re-parse is replayed one rewrite at a time, dropping the offenders.
"""
from __future__ import annotations

import base64
import binascii
import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field

from ..frontend import AstNode, LexError, ParseError, make, print_code, tokenize
from ..frontend.lexer import KEYWORDS
from ..frontend.parser import parse_text
from ..frontend.printer import quote_string

MAX_EVAL_DEPTH = 5
MAX_PASSES = 50

_IDENT_RE = re.compile(r"^[A-Za-z_$][A-Za-z0-9_$]*$")
_ESCAPE_RE = re.compile(r"\\(x[0-9a-fA-F]{2}|u[0-9a-fA-F]{4}|u\{)")
_STATEMENT_LISTS = {"Program", "BlockStatement", "SwitchCase"}


def _is_string(node: AstNode) -> bool:
    return node.kind == "Literal" and node.attrs.get("ltype") == "string"


def _string(value: str, like: AstNode) -> AstNode:
    return AstNode("Literal", value, like.line, like.column, attrs={"ltype": "string"})


def _atob(text: str) -> str | None:
    cleaned = re.sub(r"[\t\n\f\r ]", "", text)
    if not cleaned or len(cleaned) % 4 == 1 or not re.fullmatch(r"[A-Za-z0-9+/]*={0,2}", cleaned):
        return None
    cleaned = cleaned.rstrip("=")
    try:
        raw = base64.b64decode(cleaned + "=" * (-len(cleaned) % 4), validate=True)
    except (binascii.Error, ValueError):
        return None
    return raw.decode("latin-1")  # atob yields one code unit per byte


def _is_eval_call(node: AstNode) -> bool:
    return (node.kind == "CallExpression" and len(node.children) == 2
            and node.children[0].kind == "Identifier" and node.children[0].value == "eval"
            and _is_string(node.children[1]))


@dataclass
class _Rewrite:
    rule: str
    parent: AstNode
    index: int
    old: AstNode
    new: list[AstNode]

    @property
    def is_splice(self) -> bool:
        return self.rule == "eval_unwrap" and self.old.kind == "ExpressionStatement"


@dataclass
class RuleStats:
    counts: Counter = field(default_factory=Counter)
    rolled_back: int = 0

    def summary(self) -> str:
        parts = [f"{k}={v}" for k, v in sorted(self.counts.items())]
        if self.rolled_back:
            parts.append(f"rolled_back={self.rolled_back}")
        return ", ".join(parts) if parts else "no rewrites"


class RuleEngine:
    def __init__(self, max_eval_depth: int = MAX_EVAL_DEPTH, base_depth: int = 0):
        self.max_eval_depth = max_eval_depth
        self.base_depth = base_depth
        self.eval_depth: dict[int, int] = {}
        self.blocked: set[tuple[int, str]] = set()
        self.depth_hit = False
        self.stats = RuleStats()
        self._pinned: list[AstNode] = []

    # -- candidate discovery ------------------------------------------------
    def _expr_rewrite(self, node: AstNode) -> tuple[str, AstNode] | None:
        k = node.kind
        kids = node.children
        if k == "BinaryExpression" and node.value == "+" and _is_string(kids[0]) and _is_string(kids[1]):
            return "concat", _string(kids[0].value + kids[1].value, node)
        if k == "CallExpression" and len(kids) == 2 and _is_string(kids[1]):
            callee = kids[0]
            is_atob = (callee.kind == "Identifier" and callee.value == "atob") or (
                callee.kind == "MemberExpression" and not callee.attrs.get("computed")
                and callee.children[0].kind == "Identifier" and callee.children[0].value == "window"
                and callee.children[1].value == "atob")
            if is_atob:
                decoded = _atob(kids[1].value)
                if decoded is not None:
                    return "base64", _string(decoded, node)
        if k == "MemberExpression" and node.attrs.get("computed") and _is_string(kids[1]):
            name = kids[1].value
            if _IDENT_RE.match(name) and name not in KEYWORDS:
                prop = AstNode("Identifier", name, kids[1].line, kids[1].column)
                return "dot_access", AstNode("MemberExpression", None, node.line, node.column,
                                             [kids[0], prop], {"computed": False})
        return None

    def _unwrap(self, call: AstNode, depth: int) -> list[AstNode] | None:
        # A chain nested deeper than the bound is refused as a whole, so a
        # second application meets the same refusal (idempotence).
        if depth >= self.max_eval_depth:
            self.depth_hit = True
            return None
        try:
            program = parse_text(call.children[1].value)
        except (LexError, ParseError):
            return None
        inner = RuleEngine(self.max_eval_depth, depth + 1)
        inner.run(program)
        if inner.depth_hit:
            self.depth_hit = True
            return None
        self.stats.counts.update(inner.stats.counts)
        self.stats.rolled_back += inner.stats.rolled_back
        for stmt in program.children:
            for n in stmt.walk():
                self.eval_depth[id(n)] = depth + 1
                self._pinned.append(n)
        return program.children

    def collect(self, root: AstNode) -> list[_Rewrite]:
        """One bottom-up sweep.  One-for-one expression rewrites are applied
        on the spot, so a fold feeds its parent within the same sweep;
        statement splices are returned unapplied."""
        out: list[_Rewrite] = []
        stack = [(root, None, -1, False)]
        while stack:
            node, parent, idx, seen = stack.pop()
            if not seen:
                stack.append((node, parent, idx, True))
                for i in range(len(node.children) - 1, -1, -1):
                    stack.append((node.children[i], node, i, False))
                continue
            if parent is None:
                continue
            rw = None
            if (id(node), "eval_unwrap") in self.blocked:
                pass
            elif node.kind == "ExpressionStatement" and _is_eval_call(node.children[0]):
                stmts = self._unwrap(node.children[0], self._depth(node))
                if stmts is None:
                    self._block(node, "eval_unwrap")
                else:
                    rw = _Rewrite("eval_unwrap", parent, idx, node, stmts)
            elif _is_eval_call(node) and parent.kind != "ExpressionStatement":
                stmts = self._unwrap(node, self._depth(node))
                if stmts is None:
                    self._block(node, "eval_unwrap")
                elif len(stmts) == 1 and stmts[0].kind == "ExpressionStatement":
                    rw = _Rewrite("eval_unwrap", parent, idx, node, [stmts[0].children[0]])
            else:
                found = self._expr_rewrite(node)
                if found is not None:
                    rw = _Rewrite(found[0], parent, idx, node, [found[1]])
            if rw is not None and (id(node), rw.rule) not in self.blocked:
                out.append(rw)
                if not rw.is_splice:
                    self.apply([rw])
        return out

    def _block(self, node: AstNode, rule: str) -> None:
        self._pinned.append(node)  # keep the id valid while it is blocked
        self.blocked.add((id(node), rule))

    def _depth(self, node: AstNode) -> int:
        return self.eval_depth.get(id(node), self.base_depth)

    def run(self, root: AstNode) -> None:
        """Apply rules to a fixpoint, in place."""
        stats = self.stats
        for _ in range(MAX_PASSES):
            batch = self.collect(root)
            if not batch:
                break
            splices = [rw for rw in batch if rw.is_splice]
            self.apply(splices)
            if _reparses(root):
                stats.counts.update(rw.rule for rw in batch)
                continue
            # something broke the output: undo the sweep, replay one at a time
            self.revert(splices)
            for rw in reversed([rw for rw in batch if not rw.is_splice]):
                self.revert([rw])
            ordered = [rw for rw in batch if not rw.is_splice] + sorted(
                splices, key=lambda r: (id(r.parent), -r.index))
            for rw in ordered:
                self.apply([rw])
                if _reparses(root):
                    stats.counts[rw.rule] += 1
                else:
                    self.revert([rw])
                    self._block(rw.old, rw.rule)
                    stats.rolled_back += 1

    # -- application -----------------------------------------------------------
    @staticmethod
    def _replacement(rw: _Rewrite) -> list[AstNode]:
        if rw.is_splice and rw.parent.kind not in _STATEMENT_LISTS:
            return [make("BlockStatement", rw.old.line, rw.old.column, body=list(rw.new))]
        return rw.new

    @classmethod
    def apply(cls, rewrites: list[_Rewrite]) -> None:
        # right-to-left within a parent keeps earlier indices valid
        for rw in sorted(rewrites, key=lambda r: (id(r.parent), -r.index)):
            rw.parent.children[rw.index:rw.index + 1] = cls._replacement(rw)

    @classmethod
    def revert(cls, rewrites: list[_Rewrite]) -> None:
        for rw in sorted(rewrites, key=lambda r: (id(r.parent), r.index)):
            width = len(cls._replacement(rw))
            rw.parent.children[rw.index:rw.index + width] = [rw.old]


def _reparses(root: AstNode) -> bool:
    try:
        parse_text(print_code(root))
        return True
    except (LexError, ParseError):
        return False


def _has_escapes(root: AstNode) -> bool:
    for n in root.walk():
        if _is_string(n) and n.raw and _ESCAPE_RE.search(n.raw) and quote_string(n.value) != n.raw:
            return True
    return False


def apply_rules(code: str, max_eval_depth: int = MAX_EVAL_DEPTH) -> tuple[str, RuleStats]:
    """Return (rewritten code, stats).  Unparseable input or input with nothing
    to rewrite comes back byte-identical."""
    try:
        root = parse_text(code)
    except (LexError, ParseError):
        return code, RuleStats()
    escapes = _has_escapes(root)
    engine = RuleEngine(max_eval_depth)
    engine.run(root)
    stats = engine.stats
    if not stats.counts and not escapes:
        return code, stats
    if escapes:
        stats.counts["escape_decode"] += 1
    return print_code(root), stats


def _call_name(callee: AstNode) -> str | None:
    if callee.kind == "Identifier":
        return callee.value
    if callee.kind == "MemberExpression" and not callee.attrs.get("computed"):
        return callee.children[1].value
    return None


def raw_fingerprint(code: str) -> Counter:
    """Decoded string literals plus called names, without rule application."""
    fp: Counter = Counter()
    try:
        root = parse_text(code)
    except (LexError, ParseError):
        try:
            toks = [t for t in tokenize(code) if t.kind != "Comment"]
        except LexError:
            return fp
        for t, nxt in zip(toks, toks[1:] + [None]):
            if t.kind == "StringLiteral":
                fp["str:" + (t.value or "")] += 1
            elif t.kind == "Identifier" and nxt is not None and nxt.lexeme == "(":
                fp["call:" + t.lexeme] += 1
        return fp
    for n in root.walk():
        if _is_string(n):
            fp["str:" + n.value] += 1
        elif n.kind in ("CallExpression", "NewExpression"):
            name = _call_name(n.children[0])
            if name is not None:
                fp["call:" + name] += 1
    return fp


def fingerprint(code: str) -> Counter:
    """Behavior fingerprint: multiset computed after applying the rules."""
    return raw_fingerprint(apply_rules(code)[0])


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8", "surrogatepass")).hexdigest()
