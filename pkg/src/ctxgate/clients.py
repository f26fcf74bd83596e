"""HTTP clients for external embedding / text-generation services, plus
an offline precomputed-vector loader.

The wire shapes follow the widely adopted embeddings/chat-completions
conventions (POST ``/embeddings`` with ``{model, input}``, POST
``/chat/completions`` with ``{model, messages}``) so both hosted APIs
and local inference servers work unchanged. API keys come from the
environment; they are never written to config or logs.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from . import vecmath
from .errors import (
    AuthError,
    InconsistentDimError,
    MalformedResponseError,
    ParseError,
    ProviderError,
    RequestTimeoutError,
    ZeroVectorError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    count: int = 3
    backoff_base: float = 0.5  # seconds; exponential with jitter


@dataclass(frozen=True)
class EmbedderConfig:
    base_url: str
    model: str
    api_key_env: str = "CTXGATE_API_KEY"
    timeout: float = 30.0
    max_batch: int = 64
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @property
    def fingerprint(self) -> str:
        return f"{self.model}"


@dataclass(frozen=True)
class GeneratorConfig:
    base_url: str
    model: str
    api_key_env: str = "CTXGATE_API_KEY"
    timeout: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    prompt_template: str = (
        "Write {n} short, natural questions that the following passage "
        "answers. One question per line, no numbering.\n\nPassage:\n{context}"
    )


def _headers(api_key_env: str) -> dict:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _post_with_retry(url: str, body: dict, headers: dict, timeout: float,
                     retry: RetryPolicy, transport=None) -> dict:
    """POST with exponential backoff + jitter on timeouts and 5xx.
    4xx never retries."""
    last_exc: Exception | None = None
    with httpx.Client(timeout=timeout, transport=transport) as client:
        for attempt in range(retry.count + 1):
            if attempt:
                delay = retry.backoff_base * (2 ** (attempt - 1))
                time.sleep(delay * (0.5 + random.random()))
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TimeoutException as e:
                last_exc = RequestTimeoutError(f"request to {url} timed out: {e}")
                continue
            except httpx.HTTPError as e:
                last_exc = ProviderError(f"request to {url} failed: {e}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"provider rejected credentials (status {resp.status_code})")
            if resp.status_code >= 500:
                last_exc = ProviderError("provider error", status=resp.status_code,
                                         body=resp.text)
                continue
            if resp.status_code >= 400:
                raise ProviderError("provider rejected request",
                                    status=resp.status_code, body=resp.text)
            try:
                return resp.json()
            except json.JSONDecodeError as e:
                raise MalformedResponseError(f"provider returned non-JSON body: {e}") from e
    raise last_exc  # type: ignore[misc]


def embed_texts(config: EmbedderConfig, texts: list[str], transport=None) -> list[np.ndarray]:
    """Embed texts in order, batching by max_batch, unit-normalizing the
    result. ``transport`` exists for tests (httpx.MockTransport)."""
    if not texts:
        raise ValueError("texts must be non-empty")
    for i, t in enumerate(texts):
        if not t or not t.strip():
            raise ValueError(f"texts[{i}] is empty")
    url = config.base_url.rstrip("/") + "/embeddings"
    headers = _headers(config.api_key_env)
    out: list[np.ndarray] = []
    dim: int | None = None
    for start in range(0, len(texts), config.max_batch):
        batch = texts[start:start + config.max_batch]
        payload = _post_with_retry(url, {"model": config.model, "input": batch},
                                   headers, config.timeout, config.retry, transport)
        data = payload.get("data")
        if not isinstance(data, list) or len(data) != len(batch):
            raise MalformedResponseError(
                f"expected {len(batch)} embeddings, got "
                f"{len(data) if isinstance(data, list) else type(data).__name__}"
            )
        for item in sorted(data, key=lambda d: d.get("index", 0)):
            vec = vecmath.normalize(item["embedding"], name="provider embedding")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise InconsistentDimError(
                    f"provider returned mixed dims: {dim} then {vec.size}"
                )
            out.append(vec)
    return out


def generate_pseudo_queries(config: GeneratorConfig, context_text: str, n: int,
                            transport=None) -> list[str]:
    """Ask the generation endpoint for up to n questions about a passage.
    The response is parsed line by line; blank lines are dropped."""
    if not context_text or not context_text.strip():
        raise ValueError("context_text must be non-empty")
    if n < 1:
        raise ValueError("n must be >= 1")
    url = config.base_url.rstrip("/") + "/chat/completions"
    prompt = config.prompt_template.format(n=n, context=context_text)
    payload = _post_with_retry(
        url,
        {"model": config.model, "messages": [{"role": "user", "content": prompt}]},
        _headers(config.api_key_env), config.timeout, config.retry, transport,
    )
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as e:
        raise MalformedResponseError(f"unexpected generation response shape: {e}") from e
    lines = [ln.strip() for ln in (content or "").splitlines() if ln.strip()]
    if not lines:
        raise MalformedResponseError("generation response contained no usable lines")
    return lines[:n]


def load_vectors(path, expected_dim: int | None = None) -> list[tuple[str, np.ndarray]]:
    """Load a JSONL vector file of ``{"id": ..., "embedding": [...]}``
    records; vectors come back unit-normalized."""
    out: list[tuple[str, np.ndarray]] = []
    dim = expected_dim
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(f"cannot read vector file: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
        if not isinstance(obj, dict) or "id" not in obj or "embedding" not in obj:
            raise ParseError("record needs 'id' and 'embedding'", line=lineno)
        rid = str(obj["id"])
        try:
            vec = vecmath.normalize(
                vecmath.as_embedding(obj["embedding"], dim=dim, name=f"record {rid!r}"),
                name=f"record {rid!r}",
            )
        except ZeroVectorError:
            raise ZeroVectorError(f"record {rid!r} at line {lineno}: zero vector") from None
        if dim is None:
            dim = vec.size
        out.append((rid, vec))
    return out
