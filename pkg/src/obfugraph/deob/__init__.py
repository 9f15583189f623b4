from .batch import (BatchReport, DeobConfig, Deobfuscator, FileOutcome, ResultCache,
                    atomic_write, batch_deobfuscate)
from .engine import DeobResult, QualityVerdict, deobfuscate_llm, deobfuscate_rules, quality_filter
from .llm import ExtractionError, LlmClient, LlmClientConfig, ServiceError, extract_code
from .prompt import DEFAULT_TEMPLATE, PromptTemplate, render_prompt
from .rules import apply_rules, fingerprint

__all__ = [
    "BatchReport", "DEFAULT_TEMPLATE", "DeobConfig", "DeobResult", "Deobfuscator",
    "ExtractionError", "FileOutcome", "LlmClient", "LlmClientConfig", "PromptTemplate",
    "QualityVerdict", "ResultCache", "ServiceError", "apply_rules", "atomic_write",
    "batch_deobfuscate", "deobfuscate_llm", "deobfuscate_rules", "extract_code",
    "fingerprint", "quality_filter", "render_prompt",
]
