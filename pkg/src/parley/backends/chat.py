"""Chat-completions adapter."""
from __future__ import annotations

import logging
import typing as t

from attrs import define

from .core import CompletionRequest, HttpBackend
from .factory import factory
from ..records import ReasoningEffort

logger = logging.getLogger(__name__)

REASONING_STYLES = ("effort", "thinking")


@factory.register(identifier="chat")
@define
class ChatBackend(HttpBackend):
    """Adapter for ``POST {base_url}/chat/completions`` endpoints.

    The reasoning mode is sent according to `reasoning_style`:

    * ``effort``: no reasoning field when off, ``reasoning_effort`` set to
      ``medium`` or ``high`` otherwise (provider-native maps to ``medium``);
    * ``thinking``: ``thinking.type`` set to ``disabled`` when off and to
      ``enabled`` otherwise.
    """

    path: t.ClassVar[str] = "chat/completions"

    def __attrs_post_init__(self):
        if self.reasoning_style not in REASONING_STYLES:
            msg = (
                f"chat reasoning style must be one of {REASONING_STYLES}, "
                f"got {self.reasoning_style!r}"
            )
            logger.critical(msg)
            raise ValueError(msg)

    def payload(self, request: CompletionRequest) -> t.Dict[str, t.Any]:
        system = request.section("system") or ""
        user = "\n\n".join(
            text for label, text in request.prompt_sections if label != "system"
        )
        payload: t.Dict[str, t.Any] = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        if request.seed is not None:
            payload["seed"] = request.seed

        mode = request.reasoning_mode
        if self.reasoning_style == "effort":
            if mode is not ReasoningEffort.OFF:
                payload["reasoning_effort"] = (
                    "high" if mode is ReasoningEffort.HIGH else "medium"
                )
        else:
            payload["thinking"] = {
                "type": "disabled" if mode is ReasoningEffort.OFF else "enabled"
            }
        return payload

    def extract(self, body: t.Any) -> t.Tuple[t.Optional[str], t.Optional[int]]:
        text = body["choices"][0]["message"]["content"]
        tokens = (body.get("usage") or {}).get("completion_tokens")
        return text, tokens
