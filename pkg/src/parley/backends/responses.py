"""Responses-style adapter."""
from __future__ import annotations

import typing as t

from attrs import define

from .core import CompletionRequest, HttpBackend
from .factory import factory
from ..records import ReasoningEffort

EFFORT = {
    ReasoningEffort.OFF: "none",
    ReasoningEffort.MEDIUM: "medium",
    ReasoningEffort.HIGH: "high",
    ReasoningEffort.PROVIDER_NATIVE: "high",
}


@factory.register(identifier="responses")
@define
class ResponsesBackend(HttpBackend):
    """Adapter for ``POST {base_url}/responses`` endpoints."""

    reasoning_style: str = "responses"
    path: t.ClassVar[str] = "responses"

    def payload(self, request: CompletionRequest) -> t.Dict[str, t.Any]:
        user = "\n\n".join(
            text for label, text in request.prompt_sections if label != "system"
        )
        return {
            "model": self.model,
            "instructions": request.section("system") or "",
            "input": user,
            "max_output_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "reasoning": {"effort": EFFORT[request.reasoning_mode]},
        }

    def extract(self, body: t.Any) -> t.Tuple[t.Optional[str], t.Optional[int]]:
        tokens = (body.get("usage") or {}).get("output_tokens")
        if isinstance(body.get("output_text"), str):
            return body["output_text"], tokens
        parts = [
            item["text"]
            for output in body.get("output") or []
            for item in output.get("content") or []
            if item.get("type") == "output_text"
        ]
        return ("".join(parts) if parts else None), tokens
