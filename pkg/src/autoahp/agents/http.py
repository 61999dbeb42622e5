"""HTTP provider for an OpenAI-compatible chat/embeddings service.

The credential comes from the environment (never persisted in artifacts).
Transport failures are retried up to ``max_retries`` attempts with a short
backoff; grammar failures are not retried here because reprompting policy
belongs to the call sites.
"""

from __future__ import annotations

import json
import logging
import threading
import time

import numpy as np
import requests

from ..errors import ProviderError
from .base import AgentRequest, AgentResponse, Provider, ProviderConfig, api_key
from .grammar import parse_response

log = logging.getLogger(__name__)

_JSON_FORMAT_HINT = (
    "Respond with a single fenced JSON block (```json ... ```) and nothing else."
)

TASK_INSTRUCTIONS = {
    "infer_complexity": (
        "Given the decision goal and a digest of the document corpus, "
        "recommend a maximum branching factor k_max (2-15, typically 5-9) and "
        "a maximum hierarchy depth d_max (1-6) for a criteria tree. "
        'JSON schema: {"k_max": int, "d_max": int}. ' + _JSON_FORMAT_HINT
    ),
    "summarize": (
        "You will receive paragraphs that form one semantic cluster, plus the "
        "parent criterion. Produce a concise criterion label (at most 8 words) "
        "and a description of at most two sentences that captures what these "
        'paragraphs have in common. JSON schema: {"label": str, '
        '"description": str}. ' + _JSON_FORMAT_HINT
    ),
    "verify": (
        "Rate how relevant the child criterion is to the parent criterion on "
        "a scale from 0 (unrelated) to 1 (fully relevant). JSON schema: "
        '{"score": number}. ' + _JSON_FORMAT_HINT
    ),
    "elicit_matrix": (
        "Compare the sibling criteria pairwise for importance toward the "
        "decision goal, using the 1-9 ratio scale (1 equal, 3 moderate, 5 "
        "strong, 7 very strong, 9 extreme; values between are allowed, and "
        "fractions mean the second criterion dominates). Provide every pair "
        "(i, j) with i before j in the given order. JSON schema: "
        '{"comparisons": [{"i": id, "j": id, "value": number}]}. '
        + _JSON_FORMAT_HINT
    ),
    "leader_constraints": (
        "You are the lead decision strategist. From the goal context, state "
        "any hard dominance requirements between the listed criteria as "
        "triples meaning: criterion i must be at least beta times as "
        'important as criterion j (beta >= 1). Return {"constraints": []} if '
        'none apply. JSON schema: {"constraints": [{"i": id, "j": id, '
        '"beta": number}]}. ' + _JSON_FORMAT_HINT
    ),
    "score": (
        "Evaluate how well the alternative satisfies the criterion, grounded "
        "in the evidence. Briefly justify, then end with a line of the exact "
        "form 'SCORE: x/10' where x is between 0 and 10."
    ),
    "report_prose": (
        "Write a short executive summary (one paragraph) of the decision "
        "facts provided. Plain text only."
    ),
}


class _RateLimiter:
    """Serializes bursts to at most ``rps`` requests per second."""

    def __init__(self, rps: float):
        self.interval = 1.0 / rps if rps > 0 else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if delay > 0:
            time.sleep(delay)


class HttpProvider(Provider):
    def __init__(self, config: ProviderConfig):
        config.validate()
        self.config = config
        self._session = requests.Session()
        self._limiter = _RateLimiter(config.rate_limit_rps)
        self._embed_dim: int | None = None

    def _post(self, path: str, body: dict) -> dict:
        url = self.config.endpoint.rstrip("/") + path
        headers = {"Authorization": f"Bearer {api_key()}"}
        response = self._session.post(
            url, json=body, headers=headers, timeout=self.config.timeout_s
        )
        response.raise_for_status()
        return response.json()

    def _post_with_retries(self, path: str, body: dict) -> dict:
        last_error = None
        for attempt in range(1, self.config.max_retries + 1):
            self._limiter.wait()
            try:
                return self._post(path, body)
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                log.warning(
                    "provider call failed (attempt %d/%d): %s",
                    attempt,
                    self.config.max_retries,
                    exc,
                )
                if attempt < self.config.max_retries:
                    time.sleep(min(0.2 * 2 ** (attempt - 1), 2.0))
        raise ProviderError(
            f"transport failure after {self.config.max_retries} attempts: {last_error}"
        )

    # -- completion ---------------------------------------------------------

    def complete(self, request: AgentRequest) -> AgentResponse:
        system = (
            f"You act as: {request.role_persona}.\n"
            + TASK_INSTRUCTIONS[request.task_kind]
        )
        user = json.dumps(request.payload, indent=2, sort_keys=True, default=str)
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "seed": request.seed,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        data = self._post_with_retries("/chat/completions", body)
        try:
            raw_text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat completion response: {exc}") from exc
        parsed = parse_response(request.task_kind, raw_text)
        return AgentResponse(raw_text=raw_text, parsed=parsed)

    # -- embeddings ---------------------------------------------------------

    def embed_texts(self, texts) -> np.ndarray:
        if not len(texts):
            raise ProviderError("embed_texts requires a non-empty list")
        body = {"model": self.config.model, "input": list(texts)}
        data = self._post_with_retries("/embeddings", body)
        try:
            rows = sorted(data["data"], key=lambda item: item["index"])
            vectors = [row["embedding"] for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(
                f"embeddings response has {len(vectors)} rows for {len(texts)} inputs"
            )
        matrix = np.asarray(vectors, dtype=float)
        if matrix.ndim != 2:
            raise ProviderError("embeddings rows have inconsistent dimensions")
        if self._embed_dim is None:
            self._embed_dim = int(matrix.shape[1])
        elif matrix.shape[1] != self._embed_dim:
            raise ProviderError(
                f"embedding dimension changed from {self._embed_dim} "
                f"to {matrix.shape[1]}"
            )
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ProviderError("embeddings response contains a zero vector")
        return matrix / norms
