"""Deterministic offline provider.

Every handler is a pure function of (task_kind, payload, persona, seed):
randomness comes from a SHA-256 digest of the request, so repeated calls are
bitwise identical across runs and platforms. Handlers emit text in the task
grammar and the result is parsed back through the same parser the HTTP
provider uses, which keeps the two paths honest with each other.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter

import numpy as np

from ..errors import ProviderError
from ..textutil import content_words, hash_embed, top_terms
from .base import AgentRequest, AgentResponse, Provider, ProviderConfig
from .grammar import parse_response, render_response

# Cap in the frequency-weighted overlap used for scoring; term counts at or
# above this saturate the per-term contribution.
_OVERLAP_CAP = 4


def _request_rng(request: AgentRequest) -> np.random.Generator:
    blob = json.dumps(
        {
            "kind": request.task_kind,
            "persona": request.role_persona,
            "payload": request.payload,
            "seed": request.seed,
        },
        sort_keys=True,
        ensure_ascii=True,
        default=str,
    )
    digest = hashlib.sha256(blob.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


class MockProvider(Provider):
    def __init__(self, config: ProviderConfig | None = None):
        self.config = config or ProviderConfig(kind="mock")

    # -- completion ---------------------------------------------------------

    def complete(self, request: AgentRequest) -> AgentResponse:
        handler = getattr(self, f"_handle_{request.task_kind}")
        parsed = handler(request)
        raw_text = render_response(request.task_kind, parsed)
        return AgentResponse(raw_text=raw_text, parsed=parse_response(request.task_kind, raw_text))

    def _handle_infer_complexity(self, request: AgentRequest) -> dict:
        return {"k_max": 5, "d_max": 2}

    def _handle_summarize(self, request: AgentRequest) -> dict:
        texts = request.payload["texts"]
        if not texts:
            raise ProviderError("summarize called with no texts")
        terms = top_terms(texts, 3)
        if not terms:
            raise ProviderError("cluster texts contain no content words")
        label = " ".join(terms)
        description = (
            f"Covers {len(texts)} passages emphasizing {', '.join(terms)}."
        )
        return {"label": label, "description": description}

    def _handle_verify(self, request: AgentRequest) -> dict:
        child = request.payload["child_label"]
        parent = request.payload["parent_label"]
        try:
            vectors = hash_embed(
                [child, parent], k=self.config.embed_dim, seed=request.seed
            )
        except ValueError as exc:
            raise ProviderError(f"cannot verify relevance: {exc}") from exc
        cosine = float(np.dot(vectors[0], vectors[1]))
        return {"score": (cosine + 1.0) / 2.0}

    def _handle_elicit_matrix(self, request: AgentRequest) -> dict:
        criteria = request.payload["criteria"]
        ids = [c["id"] for c in criteria]
        sizes = request.payload.get("sizes") or [1] * len(ids)
        noise_scale = float(
            request.payload.get("noise_scale", self.config.mock_noise)
        )
        rng = _request_rng(request)
        comparisons = []
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                base = np.log(max(sizes[a], 1) / max(sizes[b], 1))
                value = float(np.exp(base + rng.normal(0.0, noise_scale)))
                value = min(max(value, 1 / 9), 9.0)
                comparisons.append({"i": ids[a], "j": ids[b], "value": value})
        return {"comparisons": comparisons}

    def _handle_leader_constraints(self, request: AgentRequest) -> dict:
        fixture = request.payload.get("fixture_constraints") or []
        constraints = [
            {"i": str(row["i"]), "j": str(row["j"]), "beta": float(row["beta"])}
            for row in fixture
        ]
        return {"constraints": constraints}

    def _handle_score(self, request: AgentRequest) -> dict:
        alternative = request.payload["alternative"]
        criterion = request.payload["criterion"]
        criterion_terms = sorted(
            set(
                content_words(
                    f"{criterion.get('label', '')} {criterion.get('description', '')}"
                )
            )
        )
        profile_counts = Counter(content_words(alternative.get("profile", "")))
        if not criterion_terms:
            raise ProviderError(
                f"criterion {criterion.get('id')!r} has no content terms to match"
            )
        matched = sum(
            min(profile_counts[t], _OVERLAP_CAP) for t in criterion_terms
        )
        fraction = matched / (_OVERLAP_CAP * len(criterion_terms))
        raw = round(min(10.0, 10.0 * fraction), 4)
        hit_terms = [t for t in criterion_terms if profile_counts[t] > 0]
        rationale = (
            f"Profile mentions {len(hit_terms)} of {len(criterion_terms)} "
            f"criterion terms ({', '.join(hit_terms) if hit_terms else 'none'})."
        )
        return {"rationale": rationale, "score_raw": raw, "scale": 10.0}

    def _handle_report_prose(self, request: AgentRequest) -> dict:
        facts = request.payload["facts"]
        if isinstance(facts, dict):
            winner = facts.get("winner", "the top alternative")
            goal = facts.get("goal", "the decision goal")
            count = facts.get("n_alternatives", "the")
            text = (
                f"Against the goal \"{goal}\", {winner} ranked first among "
                f"{count} alternatives. The ranking follows from the weighted "
                f"criteria above; see the contribution breakdown for drivers."
            )
        else:
            text = f"Summary of findings: {facts}"
        return {"text": text}

    # -- embeddings ---------------------------------------------------------

    def embed_texts(self, texts) -> np.ndarray:
        if not len(texts):
            raise ProviderError("embed_texts requires a non-empty list")
        try:
            return hash_embed(
                list(texts), k=self.config.embed_dim, seed=self.config.seed
            )
        except ValueError as exc:
            raise ProviderError(str(exc)) from exc
