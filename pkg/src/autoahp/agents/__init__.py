"""LLM provider boundary: deterministic mock and OpenAI-compatible HTTP."""

from .base import (
    AgentRequest,
    AgentResponse,
    Provider,
    ProviderConfig,
    api_key,
    complete,
    embed_texts,
    make_provider,
)
from .grammar import TASK_KINDS, parse_response, render_response
from .http import HttpProvider
from .mock import MockProvider

__all__ = [
    "AgentRequest",
    "AgentResponse",
    "Provider",
    "ProviderConfig",
    "api_key",
    "complete",
    "embed_texts",
    "make_provider",
    "TASK_KINDS",
    "parse_response",
    "render_response",
    "HttpProvider",
    "MockProvider",
]
