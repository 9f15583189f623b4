"""Gated batch deobfuscation with a content-addressed result cache."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..frontend import LexError, SourceFile
from ..manifest import ManifestRow
from ..scoring import ScorerWeights, gate, obfuscation_score
from .engine import DeobResult, deobfuscate_llm, deobfuscate_rules, quality_filter
from .llm import ExtractionError, LlmClient, LlmClientConfig, ServiceError
from .rules import MAX_EVAL_DEPTH, digest

log = logging.getLogger(__name__)

MODES = ("llm", "rules", "auto")
RULES_VERSION = f"rules-v1-depth{MAX_EVAL_DEPTH}"


@dataclass(frozen=True)
class DeobConfig:
    mode: str = "rules"
    llm: LlmClientConfig = field(default_factory=LlmClientConfig)
    min_overlap: float = 0.8
    force_gate_on_parse_failure: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ResultCache:
    """One JSON file per key.  Concurrent writers of one key race through
    ``os.replace``; whichever lands last is the single stored winner."""

    def __init__(self, root: str | Path | None):
        self.root = Path(root) if root is not None else None

    def key(self, code_digest: str, mode: str, cfg_digest: str) -> str:
        return hashlib.sha256(f"{code_digest}:{mode}:{cfg_digest}".encode()).hexdigest()

    def get(self, key: str) -> DeobResult | None:
        if self.root is None:
            return None
        path = self.root / key
        try:
            return DeobResult.from_json(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            return None
        except (ValueError, KeyError, TypeError):
            log.warning("ignoring corrupt cache entry %s", path)
            return None

    def put(self, key: str, result: DeobResult) -> None:
        if self.root is not None:
            atomic_write(self.root / key, json.dumps(result.to_json(), sort_keys=True))


def config_digest(cfg: DeobConfig, mode: str) -> str:
    if mode == "rules":
        payload = {"rules": RULES_VERSION, "min_overlap": cfg.min_overlap}
    else:
        llm = cfg.llm
        payload = {"base_url": llm.base_url, "model": llm.model_name,
                   "temperature": llm.temperature, "max_tokens": llm.max_tokens,
                   "min_overlap": cfg.min_overlap, "rules": RULES_VERSION}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class FileOutcome:
    path: str
    s_obf: float | None = None
    gated: bool = False
    engine: str = "passthrough"
    accepted: bool | None = None
    code: str | None = None
    error: str | None = None
    cached: bool = False


@dataclass
class BatchReport:
    gated: int = 0
    transformed: int = 0
    accepted: int = 0
    rejected: int = 0
    passthrough: int = 0
    errors: list[dict] = field(default_factory=list)
    service_calls: int = 0
    cache_hits: int = 0

    def to_json(self) -> dict:
        return asdict(self)


class Deobfuscator:
    def __init__(self, cfg: DeobConfig = DeobConfig(), weights: ScorerWeights = ScorerWeights(),
                 cache_dir: str | Path | None = None, client: LlmClient | None = None):
        self.cfg = cfg
        self.weights = weights
        self.cache = ResultCache(cache_dir)
        self._client = client

    @property
    def client(self) -> LlmClient:
        if self._client is None:
            self._client = LlmClient(self.cfg.llm)
        return self._client

    def _llm_available(self) -> bool:
        return self._client is not None or bool(os.environ.get(self.cfg.llm.api_key_env_var))

    def _run_engine(self, code: str) -> DeobResult:
        mode = self.cfg.mode
        if mode == "rules" or (mode == "auto" and not self._llm_available()):
            return deobfuscate_rules(code)
        try:
            return deobfuscate_llm(code, self.client)
        except (ServiceError, ExtractionError) as exc:
            if mode == "llm":
                raise
            log.warning("LLM unavailable (%s); using rule engine", exc)
            return deobfuscate_rules(code)

    def transform(self, code: str) -> tuple[DeobResult, bool]:
        """Deobfuscate one gated sample; returns (result, cache_hit)."""
        mode = "rules" if self.cfg.mode == "auto" and not self._llm_available() else self.cfg.mode
        key = self.cache.key(digest(code), mode, config_digest(self.cfg, mode))
        hit = self.cache.get(key)
        if hit is not None:
            return hit, True
        result = self._run_engine(code)
        verdict = quality_filter(code, result.code, self.cfg.min_overlap)
        result = DeobResult(result.original_digest, result.code, result.explanation,
                            result.engine, verdict)
        self.cache.put(key, result)
        return result, False

    def process(self, row: ManifestRow) -> FileOutcome:
        out = FileOutcome(str(row.path))
        try:
            source = SourceFile.from_path(row.path)
            breakdown = obfuscation_score(source, self.weights)
        except (OSError, ValueError, LexError) as exc:
            out.error = f"{type(exc).__name__}: {exc}"
            return out
        out.s_obf = breakdown.s_obf
        out.code = source.text
        out.gated = gate(breakdown, self.weights, self.cfg.force_gate_on_parse_failure)
        if not out.gated:
            return out
        try:
            result, out.cached = self.transform(source.text)
        except (ServiceError, ExtractionError) as exc:
            out.error = f"{type(exc).__name__}: {exc}"
            return out
        out.engine = result.engine
        out.accepted = result.verdict.accepted
        if out.accepted:
            out.code = result.code  # rejected samples keep the original text
        return out


def batch_deobfuscate(rows: list[ManifestRow], weights: ScorerWeights = ScorerWeights(),
                      cfg: DeobConfig = DeobConfig(), cache_dir: str | Path | None = None,
                      workers: int = 1, client: LlmClient | None = None
                      ) -> tuple[BatchReport, list[FileOutcome]]:
    deob = Deobfuscator(cfg, weights, cache_dir, client)
    calls_before = deob._client.calls if deob._client is not None else 0
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(deob.process, rows))
    else:
        outcomes = [deob.process(r) for r in rows]
    report = BatchReport()
    for o in outcomes:
        if o.error is not None:
            report.errors.append({"path": o.path, "error": o.error})
            if o.gated:
                report.gated += 1
            continue
        if not o.gated:
            report.passthrough += 1
            continue
        report.gated += 1
        report.cache_hits += int(o.cached)
        if o.engine != "passthrough":
            report.transformed += 1
        if o.accepted:
            report.accepted += 1
        else:
            report.rejected += 1
    if deob._client is not None:
        report.service_calls = deob._client.calls - calls_before
    return report, outcomes
