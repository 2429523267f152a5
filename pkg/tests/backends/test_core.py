"""Test cases for the backend interface."""
import threading

import pytest

from parley.backends.core import (
    Backend,
    CompletionRequest,
    CompletionResult,
    Gateway,
    word_count,
)
from parley.records import ProviderError, ReasoningEffort


def test_completion_request():
    """Sections keep their order and are looked up by label."""
    request = CompletionRequest(
        prompt_sections=[("system", "S"), ("transcript", ""), ("scenario_brief", "B")],
        max_output_tokens=1024,
        token_floor=384,
        reasoning_mode="HIGH",
    )
    assert request.section("system") == "S"
    assert request.section("private_block") is None
    assert request.prompt_text == "S\n\nB"
    assert request.reasoning_mode is ReasoningEffort.HIGH


def test_completion_request_below_floor():
    """The output cap never falls below the token floor."""
    with pytest.raises(ValueError):
        CompletionRequest(
            prompt_sections=[("system", "S")], max_output_tokens=256, token_floor=384
        )


def test_completion_result_exclusive():
    """A result holds either text or a provider error."""
    with pytest.raises(ValueError):
        CompletionResult()
    with pytest.raises(ValueError):
        CompletionResult(text="x", provider_error=ProviderError.TIMEOUT)
    failure = CompletionResult.failure(ProviderError.RATE_LIMIT, latency_ms=5)
    assert failure.text is None
    assert failure.latency_ms == 5


def test_word_count():
    assert word_count("ACTION: SUPPORT\n  We agree. ") == 4


class FlakyBackend(Backend):
    def complete(self, request: CompletionRequest) -> CompletionResult:
        raise ConnectionResetError("peer reset")


class CountingBackend(Backend):
    """Records the largest number of concurrent calls."""

    def __init__(self):
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0
        self.release = threading.Event()

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        self.release.wait(timeout=0.2)
        with self.lock:
            self.active -= 1
        return CompletionResult(text="ACTION: SUPPORT")


def _request() -> CompletionRequest:
    return CompletionRequest(prompt_sections=[("system", "S")], max_output_tokens=384)


def test_gateway_maps_exceptions():
    """Backend exceptions become transport errors."""
    result = Gateway(FlakyBackend()).complete(_request())
    assert result.provider_error is ProviderError.TRANSPORT


def test_gateway_bounds_concurrency():
    """A shared semaphore caps concurrent calls across gateways."""
    backend = CountingBackend()
    semaphore = threading.BoundedSemaphore(2)
    gateways = [Gateway(backend, semaphore) for _ in range(5)]
    threads = [threading.Thread(target=g.complete, args=(_request(),)) for g in gateways]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert backend.peak <= 2
