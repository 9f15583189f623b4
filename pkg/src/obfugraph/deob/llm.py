"""Chat-completions client for LLM-backed deobfuscation."""
from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass

import httpx

from .prompt import DEFAULT_TEMPLATE, PromptTemplate, render_prompt

log = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_RETRYABLE = {408, 429, 500, 502, 503, 504}


class ServiceError(RuntimeError):
    def __init__(self, status: int | None, attempt: int, detail: str = ""):
        super().__init__(f"LLM service failed (status={status}, attempt={attempt}) {detail}".strip())
        self.status = status
        self.attempt = attempt


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class LlmClientConfig:
    base_url: str = "https://api.deepseek.com/v1"
    model_name: str = "deepseek-reasoner"
    api_key_env_var: str = "DEOB_API_KEY"
    temperature: float = 0.1
    max_tokens: int = 4096
    timeout_s: float = 120.0
    max_retries: int = 5
    max_concurrent: int = 4
    backoff_base_s: float = 1.0
    backoff_cap_s: float = 30.0

    def public_dict(self) -> dict:
        return asdict(self)


def extract_code(text: str) -> tuple[str, str]:
    """Split a reply into (code, explanation); the first fenced block wins."""
    m = _FENCE_RE.search(text)
    if m:
        code = m.group(1).strip("\n")
        explanation = (text[:m.start()] + text[m.end():]).strip()
    else:
        code, explanation = text.strip(), ""
    if not code.strip():
        raise ExtractionError("reply contains no code")
    return code, explanation


class LlmClient:
    def __init__(self, cfg: LlmClientConfig, template: PromptTemplate = DEFAULT_TEMPLATE,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.cfg = cfg
        self.template = template
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, cfg.max_concurrent))
        self._http = httpx.Client(timeout=cfg.timeout_s, transport=transport)
        self.calls = 0
        self._lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def api_key(self) -> str:
        key = os.environ.get(self.cfg.api_key_env_var)
        if not key:
            raise ServiceError(None, 0, f"environment variable {self.cfg.api_key_env_var} is unset")
        return key

    def request_body(self, code: str) -> dict:
        return {
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": render_prompt(code, self.template)}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }

    def complete(self, code: str) -> str:
        """Send one prompt and return the assistant text, retrying transient failures."""
        headers = {"Authorization": f"Bearer {self.api_key()}"}
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        body = self.request_body(code)
        status = None
        for attempt in range(self.cfg.max_retries + 1):
            with self._lock:
                self.calls += 1
            try:
                with self._slots:
                    resp = self._http.post(url, json=body, headers=headers)
                status = resp.status_code
            except httpx.TransportError as exc:
                status, detail = None, str(exc)
            else:
                if status == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise ServiceError(status, attempt + 1, f"malformed reply: {exc}") from None
                detail = resp.text[:200]
                if status not in _RETRYABLE:
                    raise ServiceError(status, attempt + 1, detail)
            if attempt == self.cfg.max_retries:
                raise ServiceError(status, attempt + 1, detail)
            delay = min(self.cfg.backoff_cap_s, self.cfg.backoff_base_s * 2 ** attempt)
            log.info("retrying LLM request after status %s in %.2fs", status, delay)
            self._sleep(delay)
        raise AssertionError("unreachable")
