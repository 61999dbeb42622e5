"""Provider abstraction: one seam for every LLM touchpoint.

Two kinds exist: a deterministic offline mock and an HTTP client for an
OpenAI-compatible service. Everything upstream (hierarchy, weights,
inference) talks to a Provider and never to the network directly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .grammar import TASK_KINDS, validate_payload

API_KEY_ENV_VARS = ("AUTOAHP_API_KEY", "OPENAI_API_KEY")


@dataclass(frozen=True)
class AgentRequest:
    """One agent call: a persona, a task kind, and the task payload."""

    role_persona: str
    task_kind: str
    payload: dict
    seed: int = 0

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind: {self.task_kind!r}")
        validate_payload(self.task_kind, self.payload)


@dataclass(frozen=True)
class AgentResponse:
    """Raw provider text plus the grammar-parsed document."""

    raw_text: str
    parsed: dict


@dataclass
class ProviderConfig:
    kind: str = "mock"
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 2
    rate_limit_rps: float = 0.0
    # Mock-only knobs; network fields above are ignored by the mock.
    embed_dim: int = 256
    mock_noise: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ConfigError(f"provider kind must be mock or http, got {self.kind!r}")
        if self.kind == "http":
            if not self.endpoint:
                raise ConfigError("http provider requires an endpoint")
            if not api_key():
                raise ConfigError(
                    "http provider requires a credential; set "
                    + " or ".join(API_KEY_ENV_VARS)
                )
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model": self.model,
            "temperature": self.temperature,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "rate_limit_rps": self.rate_limit_rps,
            "embed_dim": self.embed_dim,
            "mock_noise": self.mock_noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProviderConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown provider config keys: {sorted(unknown)}")
        return cls(**data)


def api_key() -> str | None:
    for name in API_KEY_ENV_VARS:
        value = os.environ.get(name, "").strip()
        if value:
            return value
    return None


class Provider:
    """Interface both provider kinds implement."""

    def complete(self, request: AgentRequest) -> AgentResponse:
        raise NotImplementedError

    def embed_texts(self, texts) -> np.ndarray:
        raise NotImplementedError


def make_provider(config: ProviderConfig) -> Provider:
    config.validate()
    if config.kind == "mock":
        from .mock import MockProvider

        return MockProvider(config)
    from .http import HttpProvider

    return HttpProvider(config)


def complete(request: AgentRequest, config: ProviderConfig) -> AgentResponse:
    """Functional form of Provider.complete for one-off calls."""
    return make_provider(config).complete(request)


def embed_texts(texts, config: ProviderConfig) -> np.ndarray:
    """Functional form of Provider.embed_texts for one-off calls."""
    return make_provider(config).embed_texts(texts)
