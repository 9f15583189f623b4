from __future__ import annotations

from dataclasses import asdict, dataclass

from ..frontend import LexError, ParseError
from ..frontend.parser import parse_text
from .llm import LlmClient, extract_code
from .rules import apply_rules, digest, fingerprint

ENGINES = ("llm", "rules", "passthrough")


@dataclass(frozen=True)
class QualityVerdict:
    parses: bool
    fingerprint_preserved: bool
    accepted: bool
    overlap: float = 1.0


@dataclass(frozen=True)
class DeobResult:
    original_digest: str
    code: str
    explanation: str
    engine: str
    verdict: QualityVerdict | None = None

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DeobResult":
        v = obj.get("verdict")
        return cls(obj["original_digest"], obj["code"], obj.get("explanation", ""),
                   obj["engine"], QualityVerdict(**v) if v else None)


def _parses(code: str) -> bool:
    try:
        parse_text(code)
        return True
    except (LexError, ParseError, RecursionError):
        return False


def quality_filter(original: str, candidate: str, min_overlap: float = 0.8) -> QualityVerdict:
    """Accept a candidate that parses and keeps ``min_overlap`` of the
    original's fingerprint (multiset intersection over original size)."""
    parses = _parses(candidate)
    fp_orig = fingerprint(original)
    total = sum(fp_orig.values())
    if total == 0:
        overlap = 1.0
    else:
        fp_cand = fingerprint(candidate) if parses else None
        overlap = sum((fp_orig & fp_cand).values()) / total if fp_cand is not None else 0.0
    preserved = overlap >= min_overlap
    return QualityVerdict(parses, preserved, parses and preserved, overlap)


def deobfuscate_rules(code: str) -> DeobResult:
    out, stats = apply_rules(code)
    engine = "rules" if out != code else "passthrough"
    return DeobResult(digest(code), out, stats.summary(), engine)


def deobfuscate_llm(code: str, client: LlmClient) -> DeobResult:
    reply = client.complete(code)
    clean, explanation = extract_code(reply)
    return DeobResult(digest(code), clean, explanation, "llm")
