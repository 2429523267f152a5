"""Contract tests of the responses-style adapter against a local stub."""
import pytest

from parley.backends.core import CompletionRequest
from parley.backends.responses import ResponsesBackend
from parley.backends.stub import StubReply, StubServer, responses_body
from parley.records import ProviderError, ReasoningEffort


def _request(**kwargs) -> CompletionRequest:
    defaults = dict(
        prompt_sections=[
            ("system", "You are the Regulator."),
            ("scenario_brief", "Settle the fee schedule."),
        ],
        max_output_tokens=1024,
        token_floor=1024,
        timeout_ms=2_000,
    )
    defaults.update(kwargs)
    return CompletionRequest(**defaults)


def test_complete():
    """Answers are read from the output items of the response."""
    replies = [StubReply(body=responses_body("ACTION: OPPOSE\nNot yet.", tokens=4))]
    with StubServer(replies) as stub:
        result = ResponsesBackend(model="r-1", base_url=stub.url).complete(_request())
    assert result.text == "ACTION: OPPOSE\nNot yet."
    assert result.tokens_out == 4
    (sent,) = stub.requests
    assert sent["path"] == "/responses"
    assert sent["body"]["instructions"] == "You are the Regulator."
    assert sent["body"]["input"] == "Settle the fee schedule."
    assert sent["body"]["max_output_tokens"] == 1024
    assert sent["body"]["reasoning"] == {"effort": "none"}


def test_complete_output_text():
    """A top-level ``output_text`` takes precedence over output items."""
    body = {"output_text": "ACTION: SUPPORT", "output": []}
    with StubServer([StubReply(body=body)]) as stub:
        result = ResponsesBackend(model="r", base_url=stub.url).complete(_request())
    assert result.text == "ACTION: SUPPORT"
    assert result.tokens_out == 2


def test_complete_skips_other_items():
    """Only output-text items count as the answer."""
    body = {
        "output": [
            {"content": [{"type": "reasoning", "text": "thinking..."}]},
            {"content": [{"type": "output_text", "text": "ACTION: EXIT"}]},
        ]
    }
    with StubServer([StubReply(body=body)]) as stub:
        result = ResponsesBackend(model="r", base_url=stub.url).complete(_request())
    assert result.text == "ACTION: EXIT"


def test_complete_without_text():
    """Responses without output text are malformed."""
    with StubServer([StubReply(body={"output": []})]) as stub:
        result = ResponsesBackend(model="r", base_url=stub.url).complete(_request())
    assert result.provider_error is ProviderError.MALFORMED_RESPONSE


@pytest.mark.parametrize(
    "mode, expected",
    [
        (ReasoningEffort.OFF, "none"),
        (ReasoningEffort.MEDIUM, "medium"),
        (ReasoningEffort.HIGH, "high"),
        (ReasoningEffort.PROVIDER_NATIVE, "high"),
    ],
)
def test_payload_reasoning(mode: ReasoningEffort, expected: str):
    """Reasoning modes map to the reasoning effort object."""
    backend = ResponsesBackend(model="r", base_url="http://127.0.0.1:1")
    assert backend.payload(_request(reasoning_mode=mode))["reasoning"] == {
        "effort": expected
    }


def test_rate_limit():
    """HTTP 429 is a rate-limit error."""
    with StubServer([StubReply(body={}, status=429)]) as stub:
        backend = ResponsesBackend(model="r", base_url=stub.url, retries=0)
        result = backend.complete(_request())
    assert result.provider_error is ProviderError.RATE_LIMIT
