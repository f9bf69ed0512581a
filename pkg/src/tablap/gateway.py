"""Chat-completion client shared by every model role.

One gateway serves all roles (solver, sampling branch, selector, trust
evaluator, entity extractor) through an OpenAI-style chat API, with a
content-addressed record/replay cache so every downstream component can be
tested fully offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

ROLES = ("numsolver", "sota_branch", "ans_selector", "tw_evaluator", "ftq_extractor")
TEMPLATE_SLOTS = frozenset(
    {"table_flat", "table_schema", "question", "ans_a", "rsn_a", "ans_b", "rsn_b", "long_answer"}
)

_SLOT_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class UnboundSlot(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class CacheMiss(LookupError):
    def __init__(self, key: str):
        super().__init__(f"no cached completion for key {key}")
        self.key = key


class ApiError(RuntimeError):
    def __init__(self, status: int, body: str):
        super().__init__(f"API error {status}: {body[:200]}")
        self.status = status
        self.body = body


@dataclass(frozen=True)
class ModelRole:
    """Per-role model configuration."""

    role: str
    model_name: str
    temperature: float = 0.0
    max_tokens: int = 1024
    n_samples: int = 1

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1 or self.n_samples < 1:
            raise ValueError("max_tokens and n_samples must be positive")
        if self.n_samples > 1 and self.role != "sota_branch":
            raise ValueError("n_samples > 1 is only valid for the sota_branch role")


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt body with {slot} placeholders drawn from TEMPLATE_SLOTS.

    Literal braces can be written as {{ and }}.
    """

    id: str
    body: str

    def __post_init__(self):
        stripped = self.body.replace("{{", "").replace("}}", "")
        unknown = {m.group(1) for m in _SLOT_RE.finditer(stripped)} - TEMPLATE_SLOTS
        if unknown:
            raise ValueError(f"template {self.id!r} references unknown slots: {sorted(unknown)}")

    @property
    def slots(self) -> frozenset[str]:
        stripped = self.body.replace("{{", "").replace("}}", "")
        return frozenset(m.group(1) for m in _SLOT_RE.finditer(stripped))


def render(template: PromptTemplate, slots: dict[str, str]) -> str:
    """Substitute every slot referenced by the template in a single pass.

    Raises UnboundSlot if the template references a slot that is not
    bound. Substituted values are never rescanned for placeholders.
    """
    referenced = template.slots
    missing = referenced - set(slots)
    if missing:
        raise UnboundSlot(sorted(missing)[0])
    marker = "\x00"
    masked = template.body.replace("{{", marker + "L").replace("}}", marker + "R")
    out = _SLOT_RE.sub(
        lambda m: str(slots[m.group(1)]) if m.group(1) in referenced else m.group(0),
        masked,
    )
    return out.replace(marker + "L", "{").replace(marker + "R", "}")


@dataclass(frozen=True)
class Completion:
    text: str
    role: str
    cache_key: str
    latency_ms: int = 0
    from_cache: bool = False


def cache_key(model_name: str, temperature: float, max_tokens: int, prompt: str, sample_index: int) -> str:
    """Stable content hash identifying one completion request."""
    payload = json.dumps(
        {
            "model": model_name,
            "temperature": temperature,
            "max_tokens": max_tokens,
            "prompt": prompt,
            "sample_index": sample_index,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """JSONL-backed completion store; writes go temp-file-then-rename."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, dict] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._records[rec["key"]] = rec

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> dict:
        try:
            return self._records[key]
        except KeyError:
            raise CacheMiss(key) from None

    def put(self, record: dict) -> None:
        with self._lock:
            self._records[record["key"]] = record
            tmp = self.path.with_name(self.path.name + ".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for rec in self._records.values():
                    fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
            os.replace(tmp, self.path)


class HttpTransport:
    """Minimal OpenAI-style chat completions transport over httpx."""

    def __init__(self, base_url: str, api_key: str, timeout_s: float = 120.0):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout_s)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def post_chat(self, payload: dict) -> tuple[int, object]:
        resp = self._client.post(
            f"{self.base_url}/chat/completions", json=payload, headers=self._headers
        )
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        return resp.status_code, body


def transport_from_env(base_url: str, api_key_env: str) -> HttpTransport:
    key = os.environ.get(api_key_env, "")
    if not key:
        raise RuntimeError(f"API key environment variable {api_key_env!r} is not set")
    return HttpTransport(base_url, key)


_RETRY_DELAYS = (0.5, 1.0)  # between the 3 attempts


class Gateway:
    """Role-aware completion client with live/record/replay modes.

    In replay mode no network call is ever made; a missing key raises
    CacheMiss. Record mode persists every completion under its cache key.
    A semaphore bounds in-flight live requests.
    """

    def __init__(
        self,
        roles: dict[str, ModelRole],
        mode: str = "replay",
        cache: Optional[CompletionCache] = None,
        transport=None,
        max_concurrent_requests: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode in ("record", "replay") and cache is None:
            raise ValueError(f"{mode} mode requires a completion cache")
        if mode in ("live", "record") and transport is None:
            raise ValueError(f"{mode} mode requires a transport")
        self.roles = roles
        self.mode = mode
        self.cache = cache
        self.transport = transport
        self._semaphore = threading.Semaphore(max_concurrent_requests)
        self._sleep = sleep

    def role(self, name: str) -> ModelRole:
        try:
            return self.roles[name]
        except KeyError:
            raise ValueError(f"no model configured for role {name!r}") from None

    def complete(self, role_name: str, prompt: str, sample_index: int = 0) -> Completion:
        role = self.role(role_name)
        key = cache_key(role.model_name, role.temperature, role.max_tokens, prompt, sample_index)
        if self.mode == "replay":
            rec = self.cache.get(key)
            return Completion(text=rec["text"], role=role_name, cache_key=key, latency_ms=0, from_cache=True)
        if self.mode == "record" and key in self.cache:
            rec = self.cache.get(key)
            return Completion(text=rec["text"], role=role_name, cache_key=key, latency_ms=0, from_cache=True)
        text, latency_ms = self._call_api(role, prompt)
        if self.mode == "record":
            self.cache.put(
                {
                    "key": key,
                    "role": role_name,
                    "prompt_sha": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
                    "text": text,
                    "meta": {
                        "model": role.model_name,
                        "temperature": role.temperature,
                        "max_tokens": role.max_tokens,
                        "sample_index": sample_index,
                        "latency_ms": latency_ms,
                    },
                }
            )
        return Completion(text=text, role=role_name, cache_key=key, latency_ms=latency_ms, from_cache=False)

    def _call_api(self, role: ModelRole, prompt: str) -> tuple[str, int]:
        payload = {
            "model": role.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": role.temperature,
            "max_tokens": role.max_tokens,
        }
        last_err: Optional[ApiError] = None
        for attempt in range(3):
            start = time.monotonic()
            with self._semaphore:
                status, body = self.transport.post_chat(payload)
            latency_ms = int((time.monotonic() - start) * 1000)
            if status == 200:
                return _extract_text(body), latency_ms
            last_err = ApiError(status, body if isinstance(body, str) else json.dumps(body))
            retryable = status == 429 or status >= 500
            if not retryable:
                raise last_err
            if attempt < 2:
                self._sleep(_RETRY_DELAYS[attempt])
        raise last_err


def _extract_text(body) -> str:
    if not isinstance(body, dict):
        raise ApiError(200, f"unexpected response body: {body!r:.200}")
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ApiError(200, f"malformed completion body: {json.dumps(body)[:200]}") from None
