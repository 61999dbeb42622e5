"""Alternative scoring, utility aggregation, ranking, and report rendering.

Scores live in [0, 1]: the provider writes a rationale ending in a
``SCORE: x/10`` line, the parser maps it linearly onto the unit interval,
and the expectation over stochastic providers is approximated by a sample
mean. Utilities propagate bottom-up through the weighted criteria tree.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents.base import AgentRequest, Provider
from .errors import GrammarError, InferenceError, ProviderError
from .hierarchy import Criterion, Hierarchy
from .weights import NodeWeightAudit, WeightVector

log = logging.getLogger(__name__)

DEFAULT_SCALE = 10.0


@dataclass(frozen=True)
class Alternative:
    id: str
    name: str
    profile: str

    def __post_init__(self):
        if not self.id:
            raise InferenceError("alternative id must be non-empty")
        if not self.profile.strip():
            raise InferenceError(f"alternative {self.id!r} has an empty profile")


@dataclass
class ScoreMatrix:
    alternative_ids: list[str]
    leaf_ids: list[str]
    scores: np.ndarray  # (M, L) in [0, 1]
    rationales: list[list[str]]

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        m, l = len(self.alternative_ids), len(self.leaf_ids)
        if self.scores.shape != (m, l):
            raise InferenceError(
                f"score matrix shape {self.scores.shape} does not match "
                f"{m} alternatives x {l} leaves"
            )
        if np.any(self.scores < 0) or np.any(self.scores > 1):
            raise InferenceError("scores must lie in [0, 1]")
        if len(self.rationales) != m or any(len(r) != l for r in self.rationales):
            raise InferenceError("rationales must cover the full matrix")

    def score_of(self, alternative_id: str, leaf_id: str) -> float:
        i = self.alternative_ids.index(alternative_id)
        j = self.leaf_ids.index(leaf_id)
        return float(self.scores[i, j])

    def to_dict(self) -> dict:
        return {
            "alternative_ids": self.alternative_ids,
            "leaf_ids": self.leaf_ids,
            "scores": self.scores.tolist(),
            "rationales": self.rationales,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreMatrix":
        try:
            return cls(
                alternative_ids=[str(a) for a in data["alternative_ids"]],
                leaf_ids=[str(l) for l in data["leaf_ids"]],
                scores=np.asarray(data["scores"], dtype=float),
                rationales=data["rationales"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InferenceError(f"malformed score matrix document: {exc}") from exc


@dataclass
class DecisionResult:
    ranked: list[tuple[str, float]]  # (alternative id, utility), descending
    per_criterion_contributions: dict[str, list[dict]]

    def utilities(self) -> dict[str, float]:
        return dict(self.ranked)

    def to_dict(self) -> dict:
        return {
            "ranked": [
                {"id": alt_id, "utility": utility} for alt_id, utility in self.ranked
            ],
            "contributions": self.per_criterion_contributions,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionResult":
        try:
            ranked = [(str(r["id"]), float(r["utility"])) for r in data["ranked"]]
            contributions = data["contributions"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InferenceError(f"malformed decision result document: {exc}") from exc
        return cls(ranked=ranked, per_criterion_contributions=contributions)


def load_alternatives(path: str | Path) -> list[Alternative]:
    """Alternatives from a JSONL file of {id, name, profile} records."""
    file = Path(path)
    if not file.exists():
        raise InferenceError(f"alternatives file missing: {file}")
    alternatives: list[Alternative] = []
    seen: set[str] = set()
    with file.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InferenceError(
                    f"{file.name}:{lineno}: invalid JSON record: {exc}"
                ) from exc
            try:
                alternative = Alternative(
                    id=str(record["id"]),
                    name=str(record.get("name", record["id"])),
                    profile=str(record["profile"]),
                )
            except (KeyError, TypeError) as exc:
                raise InferenceError(
                    f"{file.name}:{lineno}: record must carry id and profile"
                ) from exc
            if alternative.id in seen:
                raise InferenceError(f"duplicate alternative id: {alternative.id!r}")
            seen.add(alternative.id)
            alternatives.append(alternative)
    if not alternatives:
        raise InferenceError("no alternatives")
    return alternatives


def score_alternative(
    alt: Alternative,
    leaf: Criterion,
    evidence: Sequence[str],
    provider: Provider,
    samples: int = 1,
    seed: int = 0,
) -> tuple[float, str]:
    """Score one (alternative, criterion) pair in [0, 1].

    The expectation over the provider's output distribution is approximated
    by the mean of ``samples`` draws; each draw is parsed from the SCORE line
    and clamped after linear rescaling.
    """
    if samples < 1:
        raise InferenceError("samples must be >= 1")
    payload = {
        "alternative": {"id": alt.id, "name": alt.name, "profile": alt.profile},
        "criterion": {
            "id": leaf.id,
            "label": leaf.label,
            "description": leaf.description,
        },
        "evidence": list(evidence)[:8],
        "scale": DEFAULT_SCALE,
    }
    values: list[float] = []
    rationale = ""
    for draw in range(samples):
        parsed = None
        for attempt in range(2):
            request = AgentRequest(
                role_persona="evaluation analyst",
                task_kind="score",
                payload=payload if attempt == 0 else {**payload, "retry": True},
                seed=seed + draw,
            )
            try:
                parsed = provider.complete(request).parsed
                break
            except GrammarError as exc:
                log.warning(
                    "unparseable rating for (%s, %s), attempt %d: %s",
                    alt.id,
                    leaf.id,
                    attempt + 1,
                    exc,
                )
        if parsed is None:
            raise InferenceError(
                f"no parseable rating for alternative {alt.id!r} "
                f"on criterion {leaf.id!r} after retry"
            )
        value = parsed["score_raw"] / parsed["scale"]
        values.append(min(max(value, 0.0), 1.0))
        if not rationale:
            rationale = parsed["rationale"]
    return float(np.mean(values)), rationale


def build_score_matrix(
    alternatives: Sequence[Alternative],
    hierarchy: Hierarchy,
    evidence_for: Callable[[str], Sequence[str]],
    provider: Provider,
    samples: int = 1,
    seed: int = 0,
    max_workers: int = 1,
) -> ScoreMatrix:
    """Score every (alternative, leaf) pair; pairs are independent and may
    run concurrently, with results assembled in order."""
    if not alternatives:
        raise InferenceError("no alternatives")
    leaf_ids = hierarchy.leaf_ids()
    pairs = [
        (i, j, alt, hierarchy.criteria[leaf_id])
        for i, alt in enumerate(alternatives)
        for j, leaf_id in enumerate(leaf_ids)
    ]

    def run(pair):
        i, j, alt, leaf = pair
        return i, j, score_alternative(
            alt, leaf, evidence_for(leaf.id), provider, samples=samples, seed=seed
        )

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run, pairs))
    else:
        outcomes = [run(p) for p in pairs]

    scores = np.zeros((len(alternatives), len(leaf_ids)))
    rationales = [["" for _ in leaf_ids] for _ in alternatives]
    for i, j, (value, rationale) in outcomes:
        scores[i, j] = value
        rationales[i][j] = rationale
    return ScoreMatrix(
        alternative_ids=[a.id for a in alternatives],
        leaf_ids=leaf_ids,
        scores=scores,
        rationales=rationales,
    )


def global_leaf_weights(
    hierarchy: Hierarchy, weights: dict[str, WeightVector]
) -> dict[str, float]:
    """Product of sibling weights along the path from the root to each leaf."""
    for node_id in hierarchy.internal_ids():
        if node_id not in weights:
            raise InferenceError(f"missing weight vector for internal node {node_id!r}")
    result: dict[str, float] = {}

    def descend(node_id: str, acc: float) -> None:
        if hierarchy.is_leaf(node_id):
            result[node_id] = acc
            return
        vector = weights[node_id]
        lookup = vector.as_dict()
        for child in hierarchy.children(node_id):
            if child.id not in lookup:
                raise InferenceError(
                    f"weight vector at {node_id!r} does not cover child {child.id!r}"
                )
            descend(child.id, acc * lookup[child.id])

    descend(hierarchy.root, 1.0)
    return result


def aggregate_utilities(
    hierarchy: Hierarchy,
    weights: dict[str, WeightVector],
    scores: ScoreMatrix,
) -> DecisionResult:
    """Bottom-up weighted aggregation of leaf scores into utilities.

    Ranking is by descending utility with lexicographic ids breaking ties.
    Contributions record each leaf's (global weight x score) share.
    """
    leaf_ids = hierarchy.leaf_ids()
    missing = [l for l in leaf_ids if l not in scores.leaf_ids]
    if missing:
        raise InferenceError(f"score matrix missing leaf criteria: {missing}")

    leaf_col = {leaf_id: scores.leaf_ids.index(leaf_id) for leaf_id in leaf_ids}
    gw = global_leaf_weights(hierarchy, weights)

    def node_utility(node_id: str, row: np.ndarray) -> float:
        if hierarchy.is_leaf(node_id):
            return float(row[leaf_col[node_id]])
        lookup = weights[node_id].as_dict()
        return sum(
            lookup[child.id] * node_utility(child.id, row)
            for child in hierarchy.children(node_id)
        )

    utilities: dict[str, float] = {}
    contributions: dict[str, list[dict]] = {}
    for i, alt_id in enumerate(scores.alternative_ids):
        row = scores.scores[i]
        utilities[alt_id] = node_utility(hierarchy.root, row)
        contributions[alt_id] = [
            {
                "leaf_id": leaf_id,
                "global_weight": gw[leaf_id],
                "score": float(row[leaf_col[leaf_id]]),
                "contribution": gw[leaf_id] * float(row[leaf_col[leaf_id]]),
            }
            for leaf_id in leaf_ids
        ]

    ranked = sorted(utilities.items(), key=lambda kv: (-kv[1], kv[0]))
    return DecisionResult(ranked=ranked, per_criterion_contributions=contributions)


def _render_tree(
    hierarchy: Hierarchy,
    weights_by_parent: dict[str, dict[str, float]],
    node_id: str,
    indent: int,
    lines: list[str],
) -> None:
    criterion = hierarchy.criteria[node_id]
    if criterion.parent is None:
        prefix = ""
        weight_note = ""
    else:
        prefix = "  " * indent + "- "
        weight = weights_by_parent.get(criterion.parent, {}).get(node_id)
        weight_note = f" (weight {weight:.4f})" if weight is not None else ""
    lines.append(f"{prefix}**{criterion.label}**{weight_note}")
    for child in hierarchy.children(node_id):
        _render_tree(hierarchy, weights_by_parent, child.id, indent + 1, lines)


def render_report(
    result: DecisionResult,
    hierarchy: Hierarchy,
    audits: dict[str, NodeWeightAudit],
    scores: ScoreMatrix,
    provider: Provider | None = None,
    leaf_evidence: dict[str, list[str]] | None = None,
    alternative_names: dict[str, str] | None = None,
    seed: int = 0,
) -> str:
    """Markdown decision report.

    The templated sections are deterministic functions of the artifacts; a
    provider, when given, appends one extra prose section (its failure only
    drops that section).
    """
    names = alternative_names or {}
    lines: list[str] = [f"# Decision Report: {hierarchy.goal}", ""]

    lines.append("## Criteria Hierarchy")
    lines.append("")
    weights_by_parent = {
        node_id: dict(zip(a.criterion_ids, a.weights.tolist()))
        for node_id, a in audits.items()
    }
    _render_tree(hierarchy, weights_by_parent, hierarchy.root, 0, lines)
    lines.append("")

    lines.append("## Consistency Summary")
    lines.append("")
    lines.append("| Node | Consensus CR | Optimized | Final CR | Snapped CR |")
    lines.append("|---|---|---|---|---|")
    for node_id in hierarchy.internal_ids():
        audit = audits[node_id]
        lines.append(
            f"| {node_id} ({hierarchy.criteria[node_id].label}) "
            f"| {audit.cr_before.cr:.4f} "
            f"| {'yes' if audit.optimized else 'no'} "
            f"| {audit.cr_after.cr:.4f} "
            f"| {audit.cr_snapped.cr:.4f} |"
        )
    lines.append("")

    lines.append("## Ranking")
    lines.append("")
    lines.append("| Rank | Alternative | Utility |")
    lines.append("|---|---|---|")
    for rank, (alt_id, utility) in enumerate(result.ranked, start=1):
        display = names.get(alt_id, alt_id)
        lines.append(f"| {rank} | {display} | {utility:.4f} |")
    lines.append("")

    lines.append("## Top Contribution Breakdowns")
    lines.append("")
    for alt_id, utility in result.ranked[:3]:
        display = names.get(alt_id, alt_id)
        lines.append(f"### {display} (utility {utility:.4f})")
        lines.append("")
        lines.append("| Criterion | Global Weight | Score | Contribution |")
        lines.append("|---|---|---|---|")
        rows = sorted(
            result.per_criterion_contributions[alt_id],
            key=lambda r: (-r["contribution"], r["leaf_id"]),
        )
        for row in rows:
            label = hierarchy.criteria[row["leaf_id"]].label
            lines.append(
                f"| {label} | {row['global_weight']:.4f} "
                f"| {row['score']:.4f} | {row['contribution']:.4f} |"
            )
        lines.append("")

    if leaf_evidence:
        lines.append("## Evidence")
        lines.append("")
        for leaf_id in hierarchy.leaf_ids():
            docs = leaf_evidence.get(leaf_id)
            if docs:
                label = hierarchy.criteria[leaf_id].label
                lines.append(f"- **{label}**: grounded in {', '.join(docs)}")
        lines.append("")

    if provider is not None:
        winner_id = result.ranked[0][0]
        facts = {
            "goal": hierarchy.goal,
            "winner": names.get(winner_id, winner_id),
            "n_alternatives": len(result.ranked),
            "top3": [
                {"id": alt_id, "utility": round(utility, 4)}
                for alt_id, utility in result.ranked[:3]
            ],
        }
        lines.append("## Summary")
        lines.append("")
        try:
            request = AgentRequest(
                role_persona="decision report writer",
                task_kind="report_prose",
                payload={"facts": facts},
                seed=seed,
            )
            lines.append(provider.complete(request).parsed["text"].strip())
        except ProviderError as exc:
            log.warning("prose summary unavailable: %s", exc)
            lines.append("*Prose summary unavailable (provider failure).*")
        lines.append("")

    return "\n".join(lines)


def save_scores(scores: ScoreMatrix, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scores.to_dict(), indent=2), encoding="utf-8")


def load_scores(path: str | Path) -> ScoreMatrix:
    file = Path(path)
    if not file.exists():
        raise InferenceError(f"score artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InferenceError(f"score artifact is not valid JSON: {exc}") from exc
    return ScoreMatrix.from_dict(data)


def save_result(result: DecisionResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2), encoding="utf-8")


def load_result(path: str | Path) -> DecisionResult:
    file = Path(path)
    if not file.exists():
        raise InferenceError(f"result artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InferenceError(f"result artifact is not valid JSON: {exc}") from exc
    return DecisionResult.from_dict(data)
