"""Client for chat-completions compatible servers (OpenAI, vLLM, llama.cpp, ...).

The whole prompt goes out as one user message.  Transport errors, 429 and
5xx responses are retried with exponential backoff; a refusal is final.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections.abc import Callable

import httpx

from ..model import ToxicityLevel
from .base import BackendError, BackendErrorKind, GenerationParams

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 500, 502, 503, 504}


class ChatClient:
    """Thread-safe; one instance can serve every worker in a batch."""

    def __init__(self, base_url: str, params: GenerationParams, *,
                 api_key_env: str = "MADSIM_API_KEY", max_in_flight: int = 4,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.base_url = base_url.rstrip("/")
        self.params = params
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max_in_flight)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(api_key_env, "").strip()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(headers=headers, timeout=params.timeout, transport=transport)
        self.attempts = 0

    def close(self) -> None:
        self._http.close()

    def _backoff(self, attempt: int, retry_after: str | None) -> float:
        delay = self.params.backoff_base * 2 ** (attempt - 1)
        if retry_after:
            try:
                delay = max(delay, float(retry_after))
            except ValueError:
                pass
        return delay

    def complete(self, prompt: str) -> str:
        p = self.params
        body = {
            "model": p.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": p.temperature,
            "max_tokens": p.max_tokens,
        }
        last: BackendError | None = None
        for attempt in range(1, p.max_attempts + 1):
            self.attempts += 1
            retry_after = None
            try:
                with self._gate:
                    resp = self._http.post(f"{self.base_url}/chat/completions", json=body)
            except httpx.HTTPError as exc:
                last = BackendError(BackendErrorKind.TRANSPORT, f"{type(exc).__name__}: {exc}")
            else:
                if resp.status_code == 429:
                    last = BackendError(BackendErrorKind.RATE_LIMITED, resp.text[:200])
                    retry_after = resp.headers.get("retry-after")
                elif resp.status_code in RETRYABLE_STATUS:
                    last = BackendError(BackendErrorKind.TRANSPORT,
                                        f"HTTP {resp.status_code}: {resp.text[:200]}")
                elif resp.status_code >= 400:
                    raise BackendError(BackendErrorKind.TRANSPORT,
                                       f"HTTP {resp.status_code}: {resp.text[:200]}",
                                       retryable=False)
                else:
                    return _reply_text(resp)
            if attempt < p.max_attempts:
                delay = self._backoff(attempt, retry_after)
                log.warning("attempt %d/%d failed (%s); retrying in %.1fs",
                            attempt, p.max_attempts, last, delay)
                self._sleep(delay)
        assert last is not None
        raise last


def _reply_text(resp: httpx.Response) -> str:
    try:
        choice = resp.json()["choices"][0]
        message = choice["message"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(BackendErrorKind.MALFORMED, f"unexpected response body: {exc}")
    if message.get("refusal"):
        raise BackendError(BackendErrorKind.REFUSAL, str(message["refusal"]))
    if choice.get("finish_reason") == "content_filter":
        raise BackendError(BackendErrorKind.REFUSAL, "response blocked by content filter")
    content = message.get("content")
    if not isinstance(content, str):
        raise BackendError(BackendErrorKind.MALFORMED, "response has no text content")
    return content


class HttpSession:
    def __init__(self, client: ChatClient):
        self._client = client
        self.requests = 0

    def complete(self, prompt: str) -> str:
        self.requests += 1
        return self._client.complete(prompt)


class HttpBackend:
    tag = "http"

    def __init__(self, client: ChatClient):
        self.client = client
        self.tag = f"http:{client.params.model}"

    def open_session(self, run_seed: int, toxicity: ToxicityLevel) -> HttpSession:
        return HttpSession(self.client)
