"""Language-model backends behind one completion interface, plus cost accounting.

Two implementations: an OpenAI-compatible HTTP client (chat completions)
and a deterministic scripted backend that replays canned completions for
reproducible tests. Token usage feeds a decimal cost ledger.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Sequence

import httpx

ENV_API_BASE = "REACT_TOD_API_BASE"
ENV_API_KEY = "REACT_TOD_API_KEY"

DEFAULT_STOP = ("Observation:",)

# Dollars per 1M tokens (input rate, output rate).
DEFAULT_PRICES: dict[str, tuple[str, str]] = {
    "gpt-3.5-turbo-0301": ("1.50", "2.00"),
    "gpt-4-32k": ("60.00", "120.00"),
}

_MILLION = Decimal(1_000_000)


class BackendError(Exception):
    def __init__(self, message: str, retryable: bool = False, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class ScriptExhausted(BackendError):
    def __init__(self, calls: int):
        super().__init__(f"scripted backend exhausted after {calls} completions", retryable=False)


class ConfigError(Exception):
    pass


@dataclass
class CompletionRequest:
    prompt: str
    stop: Sequence[str] = DEFAULT_STOP
    max_tokens: int = 512
    temperature: float = 0.0
    model: str = "gpt-3.5-turbo-0301"

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def add(self, other: "Usage") -> None:
        self.input_tokens += other.input_tokens
        self.output_tokens += other.output_tokens

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


class PriceTable:
    """Per-model (input, output) rates in dollars per 1M tokens, exact decimals."""

    def __init__(self, rates: dict[str, tuple[str | Decimal, str | Decimal]] | None = None):
        source = rates if rates is not None else DEFAULT_PRICES
        self.rates: dict[str, tuple[Decimal, Decimal]] = {}
        for model, (rate_in, rate_out) in source.items():
            pair = (Decimal(str(rate_in)), Decimal(str(rate_out)))
            if pair[0] < 0 or pair[1] < 0:
                raise ConfigError(f"negative rate for model {model}")
            self.rates[model] = pair

    def for_model(self, model: str) -> tuple[Decimal, Decimal]:
        try:
            return self.rates[model]
        except KeyError:
            raise ConfigError(f"no prices configured for model '{model}'") from None


@dataclass
class CostLedger:
    usage_by_model: dict[str, Usage] = field(default_factory=dict)
    total_cost: Decimal = Decimal(0)

    def record(self, model: str, usage: Usage, prices: PriceTable) -> None:
        rate_in, rate_out = prices.for_model(model)
        bucket = self.usage_by_model.setdefault(model, Usage())
        bucket.add(usage)
        self.total_cost += (
            Decimal(usage.input_tokens) * rate_in + Decimal(usage.output_tokens) * rate_out
        ) / _MILLION


def accumulate_cost(ledger: CostLedger, model: str, usage: Usage, prices: PriceTable) -> CostLedger:
    ledger.record(model, usage, prices)
    return ledger


def approx_token_count(text: str) -> int:
    """Heuristic used only where no server reports usage: ceil(len/4)."""
    return math.ceil(len(text) / 4)


def _truncate_at_stop(text: str, stop: Sequence[str]) -> str:
    cut = len(text)
    for sequence in stop:
        idx = text.find(sequence)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


class ScriptedBackend:
    """Replays a fixed list of completions; fully deterministic."""

    def __init__(self, script: Sequence[str]):
        self.script = list(script)
        self.calls = 0

    def complete(self, request: CompletionRequest) -> tuple[str, Usage]:
        if self.calls >= len(self.script):
            raise ScriptExhausted(self.calls)
        text = _truncate_at_stop(self.script[self.calls], request.stop)
        self.calls += 1
        usage = Usage(
            input_tokens=approx_token_count(request.prompt),
            output_tokens=approx_token_count(text),
        )
        return text, usage


class HTTPBackend:
    """OpenAI-compatible chat-completions client with bounded retries.

    Retries 429 and 5xx (and transport failures) with exponential backoff;
    any other non-2xx status fails immediately.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        if not self.base_url:
            raise ConfigError(f"no API base URL; set {ENV_API_BASE} or pass base_url")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, request: CompletionRequest) -> tuple[str, Usage]:
        payload = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": list(request.stop),
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "unknown error"
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = httpx.post(
                    url, json=payload, headers=self._headers(), timeout=self.timeout
                )
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    return self._parse_response(response)
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code != 429 and response.status_code < 500:
                    raise BackendError(last_error, retryable=False, attempts=attempt)
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
        raise BackendError(
            f"exhausted {self.max_attempts} attempts; last error: {last_error}",
            retryable=False,
            attempts=self.max_attempts,
        )

    def _parse_response(self, response: httpx.Response) -> tuple[str, Usage]:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
            usage_info = body.get("usage", {})
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed completion response: {exc}", retryable=False) from exc
        usage = Usage(
            input_tokens=int(usage_info.get("prompt_tokens", 0)),
            output_tokens=int(usage_info.get("completion_tokens", 0)),
        )
        return text, usage


def complete(backend, request: CompletionRequest) -> tuple[str, Usage]:
    return backend.complete(request)
