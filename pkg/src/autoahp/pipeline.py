"""Stage orchestration shared by the CLI and the eval harness.

Each stage is a pure function of its input artifacts plus the seed, and each
writes its outputs as JSON so any stage can be rerun or inspected on its own.
Running the stages one by one produces byte-identical artifacts to a chained
run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import cluster as cluster_mod
from . import corpus as corpus_mod
from . import hierarchy as hierarchy_mod
from . import inference as inference_mod
from . import weights as weights_mod
from .agents.base import Provider
from .errors import ArtifactError, WeightsError
from .weights import DEFAULT_PANEL, WeightVector

log = logging.getLogger(__name__)

ARTIFACTS = {
    "corpus": "embedded_corpus.json",
    "dendrogram": "dendrogram.json",
    "hierarchy": "hierarchy.json",
    "weights": "weights.json",
    "scores": "scores.json",
    "result": "result.json",
    "report": "report.md",
}


@dataclass
class PipelineSettings:
    goal: str
    corpus_path: str
    alternatives_path: str
    k_max: int | None = None  # None -> adaptive recommendation
    d_max: int | None = None
    tau: float = hierarchy_mod.DEFAULT_TAU
    panel: list[str] = field(default_factory=lambda: list(DEFAULT_PANEL))
    seed: int = 0
    min_paragraph_chars: int = corpus_mod.DEFAULT_MIN_PARAGRAPH_CHARS
    samples: int = 1
    out_dir: str | None = None
    report_prose: bool = False


@dataclass
class BuildOutcome:
    corpus: corpus_mod.EmbeddedCorpus
    dendrogram: cluster_mod.Dendrogram
    hierarchy: hierarchy_mod.Hierarchy
    budget: hierarchy_mod.ComplexityBudget


@dataclass
class PipelineOutcome:
    corpus: corpus_mod.EmbeddedCorpus
    dendrogram: cluster_mod.Dendrogram
    hierarchy: hierarchy_mod.Hierarchy
    weights: dict[str, WeightVector]
    audits: dict[str, weights_mod.NodeWeightAudit]
    scores: inference_mod.ScoreMatrix
    result: inference_mod.DecisionResult
    report: str


def _out(settings: PipelineSettings) -> Path | None:
    if settings.out_dir is None:
        return None
    path = Path(settings.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_budget(
    settings: PipelineSettings,
    corpus: corpus_mod.EmbeddedCorpus,
    provider: Provider,
) -> hierarchy_mod.ComplexityBudget:
    if settings.k_max is not None and settings.d_max is not None:
        return hierarchy_mod.ComplexityBudget(
            k_max=settings.k_max, d_max=settings.d_max, source="expert_specified"
        )
    if (settings.k_max is None) != (settings.d_max is None):
        raise ArtifactError("k_max and d_max must be given together or not at all")
    digest = (
        f"{len(corpus.paragraphs)} paragraphs from "
        f"{len({p.doc_id for p in corpus.paragraphs})} documents; "
        f"sample: {corpus.paragraphs[0].text[:160]}"
    )
    return hierarchy_mod.infer_complexity(
        settings.goal, digest, provider, seed=settings.seed
    )


def evidence_lookup(
    hierarchy: hierarchy_mod.Hierarchy,
    tree: cluster_mod.Dendrogram,
    corpus: corpus_mod.EmbeddedCorpus,
):
    """criterion id -> texts of the paragraphs under its mapped cluster."""

    def lookup(criterion_id: str) -> list[str]:
        node = hierarchy.criteria[criterion_id].cluster_node
        return [corpus.paragraphs[i].text for i in tree.members(node)]

    return lookup


def leaf_evidence_docs(
    hierarchy: hierarchy_mod.Hierarchy,
    tree: cluster_mod.Dendrogram,
    corpus: corpus_mod.EmbeddedCorpus,
) -> dict[str, list[str]]:
    """criterion id -> sorted doc ids its cluster draws from."""
    docs: dict[str, list[str]] = {}
    for leaf_id in hierarchy.leaf_ids():
        node = hierarchy.criteria[leaf_id].cluster_node
        docs[leaf_id] = sorted(
            {corpus.paragraphs[i].doc_id for i in tree.members(node)}
        )
    return docs


def stage_build(settings: PipelineSettings, provider: Provider) -> BuildOutcome:
    """corpus -> cluster -> hierarchy; writes the first three artifacts."""
    documents = corpus_mod.ingest_corpus(settings.corpus_path)
    paragraphs = corpus_mod.segment_corpus(
        documents, min_chars=settings.min_paragraph_chars
    )
    embedded = corpus_mod.embed(paragraphs, provider)
    dendrogram = cluster_mod.ward_cluster(embedded)
    budget = resolve_budget(settings, embedded, provider)
    tree = hierarchy_mod.build_hierarchy(
        dendrogram,
        settings.goal,
        embedded,
        budget,
        settings.tau,
        provider,
        seed=settings.seed,
    )
    out = _out(settings)
    if out is not None:
        corpus_mod.save_embedded_corpus(embedded, out / ARTIFACTS["corpus"])
        cluster_mod.save_dendrogram(dendrogram, out / ARTIFACTS["dendrogram"])
        hierarchy_mod.save_hierarchy(tree, out / ARTIFACTS["hierarchy"])
    return BuildOutcome(
        corpus=embedded, dendrogram=dendrogram, hierarchy=tree, budget=budget
    )


def stage_weigh(
    settings: PipelineSettings,
    provider: Provider,
    build: BuildOutcome,
) -> tuple[dict[str, WeightVector], dict[str, weights_mod.NodeWeightAudit]]:
    """Panel elicitation and consistent weighting; writes weights.json."""
    evidence_for = evidence_lookup(build.hierarchy, build.dendrogram, build.corpus)
    weights, audits = weights_mod.weigh_hierarchy(
        build.hierarchy,
        evidence_for,
        settings.panel,
        provider,
        seed=settings.seed,
    )
    out = _out(settings)
    if out is not None:
        save_weights(weights, audits, settings, out / ARTIFACTS["weights"])
    return weights, audits


def stage_rank(
    settings: PipelineSettings,
    provider: Provider,
    build: BuildOutcome,
    weights: dict[str, WeightVector],
    audits: dict[str, weights_mod.NodeWeightAudit],
) -> tuple[inference_mod.ScoreMatrix, inference_mod.DecisionResult, str]:
    """Score alternatives, aggregate utilities, render the report."""
    alternatives = inference_mod.load_alternatives(settings.alternatives_path)
    evidence_for = evidence_lookup(build.hierarchy, build.dendrogram, build.corpus)
    scores = inference_mod.build_score_matrix(
        alternatives,
        build.hierarchy,
        evidence_for,
        provider,
        samples=settings.samples,
        seed=settings.seed,
    )
    result = inference_mod.aggregate_utilities(build.hierarchy, weights, scores)
    report = inference_mod.render_report(
        result,
        build.hierarchy,
        audits,
        scores,
        provider=provider if settings.report_prose else None,
        leaf_evidence=leaf_evidence_docs(
            build.hierarchy, build.dendrogram, build.corpus
        ),
        alternative_names={a.id: a.name for a in alternatives},
        seed=settings.seed,
    )
    out = _out(settings)
    if out is not None:
        inference_mod.save_scores(scores, out / ARTIFACTS["scores"])
        inference_mod.save_result(result, out / ARTIFACTS["result"])
        (out / ARTIFACTS["report"]).write_text(report, encoding="utf-8")
    return scores, result, report


def run_pipeline(settings: PipelineSettings, provider: Provider) -> PipelineOutcome:
    """build -> weigh -> rank, returning every stage product."""
    build = stage_build(settings, provider)
    weights, audits = stage_weigh(settings, provider, build)
    scores, result, report = stage_rank(settings, provider, build, weights, audits)
    return PipelineOutcome(
        corpus=build.corpus,
        dendrogram=build.dendrogram,
        hierarchy=build.hierarchy,
        weights=weights,
        audits=audits,
        scores=scores,
        result=result,
        report=report,
    )


def save_weights(
    weights: dict[str, WeightVector],
    audits: dict[str, weights_mod.NodeWeightAudit],
    settings: PipelineSettings,
    path: str | Path,
) -> None:
    document = {
        "seed": settings.seed,
        "panel": list(settings.panel),
        "nodes": {node_id: audit.to_dict() for node_id, audit in audits.items()},
    }
    # weights are recoverable from the audits; assert the two views agree
    for node_id, vector in weights.items():
        assert document["nodes"][node_id]["criterion_ids"] == vector.criterion_ids
    Path(path).write_text(json.dumps(document, indent=2), encoding="utf-8")


def load_weights(path: str | Path) -> dict[str, WeightVector]:
    file = Path(path)
    if not file.exists():
        raise ArtifactError(f"weights artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
        nodes = data["nodes"]
        result = {
            node_id: WeightVector(
                criterion_ids=[str(c) for c in record["criterion_ids"]],
                weights=record["weights"],
            )
            for node_id, record in nodes.items()
        }
    except (KeyError, TypeError, ValueError, WeightsError) as exc:
        raise ArtifactError(f"malformed weights artifact {file}: {exc}") from exc
    return result


def load_audits(path: str | Path) -> dict[str, weights_mod.NodeWeightAudit]:
    """Reconstructed per-node audit records from weights.json."""
    file = Path(path)
    if not file.exists():
        raise ArtifactError(f"weights artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
        return {
            node_id: weights_mod.NodeWeightAudit.from_dict(node_id, record)
            for node_id, record in data["nodes"].items()
        }
    except (KeyError, TypeError, json.JSONDecodeError, WeightsError) as exc:
        raise ArtifactError(f"malformed weights artifact {file}: {exc}") from exc


def load_build_outcome(out_dir: str | Path) -> BuildOutcome:
    """Reload the three build artifacts for a staged weigh/rank run."""
    out = Path(out_dir)
    embedded = corpus_mod.load_embedded_corpus(out / ARTIFACTS["corpus"])
    dendrogram = cluster_mod.load_dendrogram(out / ARTIFACTS["dendrogram"])
    tree = hierarchy_mod.load_hierarchy(out / ARTIFACTS["hierarchy"])
    budget = hierarchy_mod.ComplexityBudget(
        k_max=tree.k_max, d_max=tree.d_max, source="expert_specified"
    )
    return BuildOutcome(
        corpus=embedded, dendrogram=dendrogram, hierarchy=tree, budget=budget
    )
