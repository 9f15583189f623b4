"""Obfuscation entropy score and the deobfuscation gate."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable

from .frontend import Ast, ParseError, SourceFile, Token, ast_stats, code_tokens, parse, tokenize


@dataclass(frozen=True)
class ScorerWeights:
    alpha: float = 0.4
    beta: float = 0.4
    gamma: float = 0.2
    threshold: float = 7.0
    include_comments: bool = False

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("entropy weights must be non-negative")


@dataclass(frozen=True)
class EntropyBreakdown:
    h_lex: float
    h_struct: float
    h_control: float
    s_obf: float
    parse_failed: bool = False

    @classmethod
    def combine(cls, h_lex, h_struct, h_control, weights: ScorerWeights = ScorerWeights(),
                parse_failed: bool = False) -> "EntropyBreakdown":
        s = weights.alpha * h_lex + weights.beta * h_struct + weights.gamma * h_control
        return cls(h_lex, h_struct, h_control, s, parse_failed)


def lexical_entropy(tokens: Iterable[Token | str]) -> float:
    """Shannon entropy (nats) of the distinct-lexeme distribution."""
    counts = Counter(t if isinstance(t, str) else t.lexeme for t in tokens)
    total = sum(counts.values())
    if total == 0 or len(counts) == 1:
        return 0.0
    h = -sum(c / total * math.log(c / total) for c in counts.values())
    return max(h, 0.0)


def structural_entropy(ast: Ast) -> float:
    # children+1 keeps leaves finite: a leaf at depth d contributes ln(d)
    stats = ast_stats(ast)
    total = sum(math.log(stats.depth[k] * (stats.children[k] + 1)) for k in stats.depth)
    return total / stats.node_count


def control_flow_score(ast: Ast) -> float:
    stats = ast_stats(ast)
    if stats.statement_count == 0:
        return 0.0
    return (stats.branch_count + stats.loop_count) / stats.statement_count


def obfuscation_score(source: SourceFile | str, weights: ScorerWeights = ScorerWeights()
                      ) -> EntropyBreakdown:
    """Score one file.  ``LexError`` propagates; a ``ParseError`` zeroes the
    structural and control components and sets ``parse_failed``."""
    if isinstance(source, str):
        source = SourceFile.from_text(source)
    tokens = tokenize(source)
    if not weights.include_comments:
        tokens = code_tokens(tokens)
    h_lex = lexical_entropy(tokens)
    try:
        ast = parse(source)
    except ParseError:
        return EntropyBreakdown.combine(h_lex, 0.0, 0.0, weights, parse_failed=True)
    return EntropyBreakdown.combine(h_lex, structural_entropy(ast), control_flow_score(ast), weights)


def gate(breakdown: EntropyBreakdown, weights: ScorerWeights = ScorerWeights(),
         force_on_parse_failure: bool = False) -> bool:
    if force_on_parse_failure and breakdown.parse_failed:
        return True
    return breakdown.s_obf > weights.threshold


REPORT_FIELDS = ["path", "h_lex", "h_struct", "h_control", "s_obf", "gated", "parse_failed"]


@dataclass
class ScoreRow:
    path: str
    breakdown: EntropyBreakdown
    gated: bool
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        b = self.breakdown
        return {"path": self.path, "h_lex": repr(b.h_lex), "h_struct": repr(b.h_struct),
                "h_control": repr(b.h_control), "s_obf": repr(b.s_obf),
                "gated": str(self.gated).lower(), "parse_failed": str(b.parse_failed).lower()}

    def as_json(self) -> dict:
        return {"path": self.path, **asdict(self.breakdown), "gated": self.gated}


def write_report(rows: list[ScoreRow], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
    writer.writeheader()
    for r in rows:
        writer.writerow(r.as_row())
