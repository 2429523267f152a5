"""Agent backend interface.

The `Backend` abstract class defines how an agent answers one turn. The
`Gateway` wraps a backend for the episode runner: it bounds concurrency per
model family and never lets an exception escape.
"""
from __future__ import annotations

import logging
import os
import threading
import time
import typing as t
from abc import ABC, abstractmethod

import requests
from attrs import define, field, frozen, validators
from requests.adapters import HTTPAdapter
from urllib3.exceptions import MaxRetryError, ReadTimeoutError
from urllib3.util import Retry

from ..constants import DEFAULT_BACKOFF_FACTOR, DEFAULT_RETRIES, RETRY_STATUS_CODES
from ..records import ProviderError, ReasoningEffort

logger = logging.getLogger(__name__)


def _sections(value: t.Iterable[t.Tuple[str, str]]) -> t.Tuple[t.Tuple[str, str], ...]:
    return tuple((str(label), str(text)) for label, text in value)


@frozen(kw_only=True)
class CompletionRequest:
    """One turn's request to a backend.

    `history_len` is the number of turns the requesting agent has already
    taken in the episode.
    """

    prompt_sections: t.Tuple[t.Tuple[str, str], ...] = field(converter=_sections)
    max_output_tokens: int
    token_floor: int = 1
    temperature: float = 0.0
    reasoning_mode: ReasoningEffort = field(
        default=ReasoningEffort.OFF, converter=ReasoningEffort
    )
    timeout_ms: int = field(default=60_000, validator=validators.gt(0))
    seed: t.Optional[int] = None
    history_len: int = field(default=0, validator=validators.ge(0))

    def __attrs_post_init__(self):
        if self.max_output_tokens < self.token_floor:
            msg = (
                f"max_output_tokens ({self.max_output_tokens}) is below the "
                f"token floor ({self.token_floor})"
            )
            logger.critical(msg)
            raise ValueError(msg)

    def section(self, label: str) -> t.Optional[str]:
        """Text of the prompt section `label`, if present."""
        for name, text in self.prompt_sections:
            if name == label:
                return text
        return None

    @property
    def prompt_text(self) -> str:
        """Prompt sections joined into a single text."""
        return "\n\n".join(text for _, text in self.prompt_sections if text)


@frozen(kw_only=True)
class CompletionResult:
    """Backend answer: either text or a provider error."""

    text: t.Optional[str] = None
    tokens_out: int = 0
    latency_ms: int = 0
    provider_error: t.Optional[ProviderError] = None

    def __attrs_post_init__(self):
        if (self.text is None) == (self.provider_error is None):
            msg = "exactly one of text and provider_error must be set"
            logger.critical(msg)
            raise ValueError(msg)

    @classmethod
    def failure(cls, error: ProviderError, latency_ms: int = 0) -> CompletionResult:
        return cls(provider_error=error, latency_ms=latency_ms)


class Backend(ABC):
    """Abstract agent backend."""

    @abstractmethod
    def complete(self, request: CompletionRequest) -> CompletionResult:
        """Answer one turn.

        Args:
            request: Completion request.

        Returns:
            Completion result.
        """
        pass  # pragma: no cover


def word_count(text: str) -> int:
    return len(text.split())


@define
class HttpBackend(Backend):
    """Base class of the live web-service adapters.

    Transport failures (connection errors, timeouts and HTTP 429, 500, 502,
    503, 504) are retried up to `retries` times with exponential backoff;
    whatever still fails is mapped to a provider error.
    """

    model: str
    base_url: str
    api_key_env: t.Optional[str] = None
    reasoning_style: str = "effort"
    retries: int = DEFAULT_RETRIES
    backoff_factor: float = DEFAULT_BACKOFF_FACTOR
    _session: t.Optional[requests.Session] = field(default=None, init=False)

    path: t.ClassVar[str] = ""

    @property
    def url(self) -> str:
        return f"{self.base_url.rstrip('/')}/{self.path}"

    @property
    def session(self) -> requests.Session:
        if self._session is None:
            retry = Retry(
                total=self.retries,
                connect=self.retries,
                read=self.retries,
                status=self.retries,
                backoff_factor=self.backoff_factor,
                status_forcelist=RETRY_STATUS_CODES,
                allowed_methods=frozenset({"POST"}),
                raise_on_status=False,
            )
            session = requests.Session()
            adapter = HTTPAdapter(max_retries=retry)
            session.mount("http://", adapter)
            session.mount("https://", adapter)
            self._session = session
        return self._session

    def headers(self) -> t.Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env is not None:
            headers["Authorization"] = f"Bearer {os.environ.get(self.api_key_env, '')}"
        return headers

    @abstractmethod
    def payload(self, request: CompletionRequest) -> t.Dict[str, t.Any]:
        """Wire payload of `request`."""
        pass  # pragma: no cover

    @abstractmethod
    def extract(self, body: t.Any) -> t.Tuple[t.Optional[str], t.Optional[int]]:
        """Text and output token count of a response body."""
        pass  # pragma: no cover

    def complete(self, request: CompletionRequest) -> CompletionResult:
        start = time.perf_counter()

        def elapsed() -> int:
            return int(round((time.perf_counter() - start) * 1000))

        try:
            response = self.session.post(
                self.url,
                json=self.payload(request),
                headers=self.headers(),
                timeout=request.timeout_ms / 1000,
            )
        except requests.Timeout:
            logger.debug("%s: request timed out", self.url)
            return CompletionResult.failure(ProviderError.TIMEOUT, elapsed())
        except requests.ConnectionError as e:
            reason = e.args[0] if e.args else None
            if isinstance(reason, MaxRetryError) and isinstance(
                reason.reason, ReadTimeoutError
            ):
                logger.debug("%s: request timed out after retries", self.url)
                return CompletionResult.failure(ProviderError.TIMEOUT, elapsed())
            logger.debug("%s: connection error %s", self.url, e)
            return CompletionResult.failure(ProviderError.TRANSPORT, elapsed())
        except requests.RequestException as e:
            logger.debug("%s: transport error %s", self.url, e)
            return CompletionResult.failure(ProviderError.TRANSPORT, elapsed())

        if response.status_code == 429:
            logger.debug("%s: rate limited", self.url)
            return CompletionResult.failure(ProviderError.RATE_LIMIT, elapsed())
        if response.status_code >= 400:
            logger.debug("%s: HTTP %d", self.url, response.status_code)
            return CompletionResult.failure(ProviderError.TRANSPORT, elapsed())

        try:
            text, tokens = self.extract(response.json())
        except (ValueError, KeyError, IndexError, TypeError, AttributeError):
            text, tokens = None, None
        if not isinstance(text, str):
            logger.debug("%s: no text in response body", self.url)
            return CompletionResult.failure(ProviderError.MALFORMED_RESPONSE, elapsed())

        return CompletionResult(
            text=text,
            tokens_out=tokens if isinstance(tokens, int) else word_count(text),
            latency_ms=elapsed(),
        )


@define
class Gateway:
    """Backend wrapper used by the episode runner.

    Calls are bounded by an optional semaphore shared across a model family.
    Any exception raised by the backend becomes a ``transport`` provider
    error.
    """

    backend: Backend
    semaphore: t.Optional[threading.BoundedSemaphore] = None

    def complete(self, request: CompletionRequest) -> CompletionResult:
        try:
            if self.semaphore is None:
                return self.backend.complete(request)
            with self.semaphore:
                return self.backend.complete(request)
        except Exception as e:
            logger.warning("backend %r raised %r", self.backend, e)
            return CompletionResult.failure(ProviderError.TRANSPORT)
