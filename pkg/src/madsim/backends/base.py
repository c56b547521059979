from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol

from ..model import ToxicityLevel


class BackendErrorKind(enum.Enum):
    TRANSPORT = "transport"
    RATE_LIMITED = "rate_limited"
    REFUSAL = "refusal"
    MALFORMED = "malformed"


class BackendError(Exception):
    def __init__(self, kind: BackendErrorKind, detail: str = "", retryable: bool | None = None):
        self.kind = kind
        self.detail = detail
        if retryable is None:
            retryable = kind in (BackendErrorKind.TRANSPORT, BackendErrorKind.RATE_LIMITED)
        self.retryable = retryable and kind is not BackendErrorKind.REFUSAL
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)


@dataclass(frozen=True)
class GenerationParams:
    model: str = "gpt-4o-mini"
    temperature: float = 0.7
    max_tokens: int = 512
    timeout: float = 60.0
    max_attempts: int = 5
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be ≥ 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be ≥ 1")


class Session(Protocol):
    """One debate's conversation channel; owned by a single worker."""

    requests: int

    def complete(self, prompt: str) -> str: ...


class Backend(Protocol):
    tag: str

    def open_session(self, run_seed: int, toxicity: ToxicityLevel) -> Session: ...
