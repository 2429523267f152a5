"""
Agent backends: scripted oracle policies and live web-service adapters.
"""
from .chat import ChatBackend
from .core import Backend, CompletionRequest, CompletionResult, Gateway
from .factory import factory
from .responses import ResponsesBackend
from .scripted import ScriptedBackend, ScriptedPolicy, scripted_turn

factory.freeze()

__all__ = [
    "Backend",
    "ChatBackend",
    "CompletionRequest",
    "CompletionResult",
    "Gateway",
    "ResponsesBackend",
    "ScriptedBackend",
    "ScriptedPolicy",
    "factory",
    "scripted_turn",
]
