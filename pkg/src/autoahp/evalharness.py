"""Ranking/consistency metrics and repeatable synthetic benchmark scenarios.

Scenarios plant keyword-themed paragraph clusters and alternatives whose
profiles mention each theme's vocabulary in proportion to a hidden quality
grade; the relevance judgments are those planted grades, so an end-to-end
run can be measured with NDCG without any external dataset.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents.base import Provider
from .errors import EvalError
from .pipeline import PipelineSettings, run_pipeline
from .weights import DEFAULT_PANEL, NodeWeightAudit

log = logging.getLogger(__name__)

# Disjoint topic vocabularies for the planted clusters. Generated tokens take
# over past the curated list.
_TOPIC_BANK = [
    ("safety", ["safety", "guard", "alarm", "camera", "lock", "patrol",
                "emergency", "fence", "railing", "sensor", "helmet", "drill"]),
    ("pool", ["pool", "swim", "splash", "slide", "lifeguard", "towel",
              "deck", "lane", "float", "dive", "swimsuit", "poolside"]),
    ("dining", ["dining", "restaurant", "menu", "breakfast", "chef", "buffet",
                "cuisine", "meal", "snack", "dessert", "espresso", "pastry"]),
    ("location", ["location", "downtown", "transit", "airport", "walkable",
                  "nearby", "station", "central", "parking", "shuttle",
                  "landmark", "riverside"]),
    ("service", ["service", "staff", "concierge", "helpful", "checkin",
                 "luggage", "courteous", "welcome", "attentive", "responsive",
                 "reception", "housekeeping"]),
    ("rooms", ["room", "bed", "linen", "quiet", "spacious", "balcony",
               "pillow", "suite", "curtain", "carpet", "wardrobe", "lamp"]),
    ("fitness", ["fitness", "gym", "treadmill", "yoga", "sauna", "trainer",
                 "cardio", "stretch", "locker", "barbell", "rowing", "mat"]),
    ("business", ["business", "meeting", "conference", "projector", "printer",
                  "keyboard", "deadline", "invoice", "workspace", "webinar",
                  "briefing", "agenda"]),
]

MAX_PLANTED_GRADE = 4
_WORDS_PER_PARAGRAPH = 30


@dataclass
class ConsistencyStats:
    cr_mean: float
    cr_max: float
    pass_rate: float
    n_matrices: int

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "ConsistencyStats":
        if not values:
            raise EvalError("consistency stats need at least one matrix record")
        arr = np.asarray(values, dtype=float)
        return cls(
            cr_mean=float(arr.mean()),
            cr_max=float(arr.max()),
            pass_rate=float(np.mean(arr < 0.1)),
            n_matrices=len(arr),
        )

    def to_dict(self) -> dict:
        return {
            "cr_mean": self.cr_mean,
            "cr_max": self.cr_max,
            "pass_rate": self.pass_rate,
            "n_matrices": self.n_matrices,
        }


@dataclass
class Scenario:
    goal: str
    corpus_path: str
    alternatives_path: str
    judgments_path: str
    k_max: int
    d_max: int
    tau: float
    panel: list[str]
    seed: int
    noise: float = 0.0
    base_dir: str = "."

    def resolve(self, name: str) -> Path:
        path = Path(getattr(self, name))
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> dict:
        return {
            "goal": self.goal,
            "corpus": self.corpus_path,
            "alternatives": self.alternatives_path,
            "judgments": self.judgments_path,
            "k_max": self.k_max,
            "d_max": self.d_max,
            "tau": self.tau,
            "panel": self.panel,
            "seed": self.seed,
            "noise": self.noise,
        }

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        file = Path(path)
        if not file.exists():
            raise EvalError(f"scenario file missing: {file}")
        try:
            data = json.loads(file.read_text(encoding="utf-8"))
            scenario = cls(
                goal=str(data["goal"]),
                corpus_path=str(data["corpus"]),
                alternatives_path=str(data["alternatives"]),
                judgments_path=str(data["judgments"]),
                k_max=int(data["k_max"]),
                d_max=int(data["d_max"]),
                tau=float(data["tau"]),
                panel=[str(p) for p in data["panel"]],
                seed=int(data["seed"]),
                noise=float(data.get("noise", 0.0)),
                base_dir=str(file.parent),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise EvalError(f"malformed scenario file {file}: {exc}") from exc
        for name in ("corpus_path", "alternatives_path", "judgments_path"):
            if not scenario.resolve(name).exists():
                raise EvalError(
                    f"scenario path not resolvable: {getattr(scenario, name)}"
                )
        return scenario


def ndcg_at_k(
    ranked: Sequence[str], judgments: dict[str, int], k: int
) -> float:
    """NDCG@k with gain 2^rel - 1 and discount log2(rank + 1).

    IDCG comes from the ideal ordering of all judged grades; an all-zero
    judgment set yields 0 by convention.
    """
    if k < 1:
        raise EvalError("k must be >= 1")
    if not ranked:
        raise EvalError("ranking must be non-empty")
    missing = [a for a in ranked if a not in judgments]
    if missing:
        raise EvalError(f"alternatives missing from judgments: {missing}")

    def dcg(grades: Sequence[int]) -> float:
        return sum(
            (2.0 ** g - 1.0) / math.log2(i + 2)
            for i, g in enumerate(grades[:k])
        )

    actual = dcg([judgments[a] for a in ranked])
    ideal = dcg(sorted(judgments.values(), reverse=True))
    if ideal == 0:
        return 0.0
    return actual / ideal


def consistency_stats(
    audits: Sequence[NodeWeightAudit] | dict[str, NodeWeightAudit],
    stage: str,
) -> ConsistencyStats:
    """CR statistics across audit records.

    Stages: ``pre_opt`` reads the consensus-matrix CR, ``post_opt`` the
    snapped final matrix's CR (the discrete audit artifact), ``continuous``
    the CR of the matrix induced by the continuous weights.
    """
    records = list(audits.values()) if isinstance(audits, dict) else list(audits)
    if not records:
        raise EvalError("consistency stats need at least one audit record")
    if stage == "pre_opt":
        values = [a.cr_before.cr for a in records]
    elif stage == "post_opt":
        values = [a.cr_snapped.cr for a in records]
    elif stage == "continuous":
        values = [a.cr_after.cr for a in records]
    else:
        raise EvalError(f"unknown consistency stage: {stage!r}")
    return ConsistencyStats.from_values(values)


def _topic_vocabulary(index: int) -> tuple[str, list[str]]:
    if index < len(_TOPIC_BANK):
        return _TOPIC_BANK[index]
    name = f"theme{index}"
    return name, [f"{name}term{j}" for j in range(12)]


def _make_paragraph(
    rng: np.random.Generator,
    vocab: list[str],
    other_vocab: list[str],
    noise: float,
) -> str:
    words = [vocab[rng.integers(0, len(vocab))] for _ in range(_WORDS_PER_PARAGRAPH)]
    if noise > 0 and other_vocab:
        for pos in range(len(words)):
            if rng.random() < noise:
                words[pos] = other_vocab[rng.integers(0, len(other_vocab))]
    sentences = []
    for start in range(0, len(words), 10):
        chunk = words[start : start + 10]
        sentences.append(" ".join(chunk).capitalize() + ".")
    return " ".join(sentences)


def generate_synthetic_scenario(
    out_dir: str | Path,
    topics: int = 5,
    paragraphs_per_topic: int = 6,
    n_alternatives: int = 20,
    noise: float = 0.0,
    seed: int = 0,
    k_max: int = 5,
    d_max: int = 2,
    tau: float = 0.2,
    panel: Sequence[str] | None = None,
) -> Scenario:
    """Materialize a planted-cluster scenario on disk; fully seed-determined.

    One document per topic, each holding ``paragraphs_per_topic`` paragraphs
    drawn from that topic's vocabulary. Each alternative gets an integer
    quality grade per topic; its profile mentions every term of the topic's
    vocabulary grade-many times (so lexical scorers see a signal proportional
    to the grade whichever terms a criterion ends up labeled with), and its
    judgment is the sum of its grades.
    """
    if topics < 2:
        raise EvalError("topics must be >= 2")
    if paragraphs_per_topic < 3:
        raise EvalError("paragraphs_per_topic must be >= 3")
    if n_alternatives < 4:
        raise EvalError("n_alternatives must be >= 4")
    if not 0.0 <= noise <= 1.0:
        raise EvalError("noise must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    root = Path(out_dir)
    corpus_dir = root / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)

    vocabularies = [_topic_vocabulary(t) for t in range(topics)]
    topic_paragraphs: list[list[str]] = []
    for t, (name, vocab) in enumerate(vocabularies):
        other = [w for u, (_, v) in enumerate(vocabularies) if u != t for w in v]
        paragraphs = [
            _make_paragraph(rng, vocab, other, noise)
            for _ in range(paragraphs_per_topic)
        ]
        topic_paragraphs.append(paragraphs)
        (corpus_dir / f"{t:02d}_{name}.txt").write_text(
            "\n\n".join(paragraphs), encoding="utf-8"
        )

    alternatives = []
    judgments: dict[str, int] = {}
    for m in range(n_alternatives):
        grades = rng.integers(0, MAX_PLANTED_GRADE + 1, size=topics)
        alt_id = f"alt-{m:02d}"
        pieces = []
        for t, (_, vocab) in enumerate(vocabularies):
            grade = int(grades[t])
            if grade == 0:
                continue
            mention = " ".join(term for term in vocab for _ in range(grade))
            pieces.append(f"{mention}.")
        profile = (
            "Offers " + " ".join(pieces) if pieces else "Nothing of note."
        )
        alternatives.append(
            {"id": alt_id, "name": f"Option {m:02d}", "profile": profile}
        )
        judgments[alt_id] = int(grades.sum())

    alternatives_path = root / "alternatives.jsonl"
    with alternatives_path.open("w", encoding="utf-8") as handle:
        for record in alternatives:
            handle.write(json.dumps(record) + "\n")
    judgments_path = root / "judgments.json"
    judgments_path.write_text(json.dumps(judgments, indent=2), encoding="utf-8")

    scenario = Scenario(
        goal="Select the best option balancing "
        + ", ".join(name for name, _ in vocabularies),
        corpus_path="corpus",
        alternatives_path="alternatives.jsonl",
        judgments_path="judgments.json",
        k_max=k_max,
        d_max=d_max,
        tau=tau,
        panel=list(panel) if panel is not None else list(DEFAULT_PANEL),
        seed=seed,
        noise=noise,
        base_dir=str(root),
    )
    (root / "scenario.json").write_text(
        json.dumps(scenario.to_dict(), indent=2), encoding="utf-8"
    )
    return scenario


def load_judgments(path: str | Path) -> dict[str, int]:
    file = Path(path)
    if not file.exists():
        raise EvalError(f"judgments file missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
        judgments = {str(k): int(v) for k, v in data.items()}
    except (json.JSONDecodeError, TypeError, ValueError, AttributeError) as exc:
        raise EvalError(f"malformed judgments file {file}: {exc}") from exc
    if not judgments or all(v <= 0 for v in judgments.values()):
        raise EvalError("judgments must include at least one positive grade")
    if any(v < 0 for v in judgments.values()):
        raise EvalError("judgment grades must be non-negative")
    return judgments


def run_scenario(
    scenario: Scenario,
    provider: Provider,
    repeats: int = 1,
    out_dir: str | Path | None = None,
) -> dict:
    """Execute the full pipeline on a scenario ``repeats`` times and report
    per-run plus aggregate metrics. With a fixed seed and the mock provider,
    every run's metrics are identical."""
    if repeats < 1:
        raise EvalError("repeats must be >= 1")
    judgments = load_judgments(scenario.resolve("judgments_path"))
    root = Path(out_dir) if out_dir is not None else None
    runs = []
    for run_index in range(repeats):
        run_out = root / f"run-{run_index}" if root is not None else None
        settings = PipelineSettings(
            goal=scenario.goal,
            corpus_path=str(scenario.resolve("corpus_path")),
            alternatives_path=str(scenario.resolve("alternatives_path")),
            k_max=scenario.k_max,
            d_max=scenario.d_max,
            tau=scenario.tau,
            panel=list(scenario.panel),
            seed=scenario.seed,
            out_dir=str(run_out) if run_out is not None else None,
        )
        outcome = run_pipeline(settings, provider)
        ranked_ids = [alt_id for alt_id, _ in outcome.result.ranked]
        hierarchy = outcome.hierarchy
        fanouts = [
            len(hierarchy.children(node_id)) for node_id in hierarchy.internal_ids()
        ]
        metrics = {
            "run": run_index,
            "ndcg_at_5": ndcg_at_k(ranked_ids, judgments, 5),
            "ndcg_at_10": ndcg_at_k(ranked_ids, judgments, 10),
            "cr_pre": consistency_stats(outcome.audits, "pre_opt").to_dict(),
            "cr_post": consistency_stats(outcome.audits, "post_opt").to_dict(),
            "cr_continuous": consistency_stats(outcome.audits, "continuous").to_dict(),
            "hierarchy": {
                "n_criteria": len(hierarchy.criteria),
                "n_leaves": len(hierarchy.leaf_ids()),
                "depth": hierarchy.depth(),
                "max_fanout": max(fanouts) if fanouts else 0,
                "min_fanout": min(fanouts) if fanouts else 0,
            },
        }
        runs.append(metrics)

    def mean_over(path: tuple[str, ...]) -> float:
        values = []
        for run in runs:
            value = run
            for key in path:
                value = value[key]
            values.append(value)
        return float(np.mean(values))

    bundle = {
        "scenario": scenario.to_dict(),
        "repeats": repeats,
        "runs": runs,
        "aggregate": {
            "ndcg_at_5": mean_over(("ndcg_at_5",)),
            "ndcg_at_10": mean_over(("ndcg_at_10",)),
            "cr_pre_mean": mean_over(("cr_pre", "cr_mean")),
            "cr_post_mean": mean_over(("cr_post", "cr_mean")),
            "pre_pass_rate": mean_over(("cr_pre", "pass_rate")),
            "post_pass_rate": mean_over(("cr_post", "pass_rate")),
        },
    }
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        (root / "metrics.json").write_text(
            json.dumps(bundle, indent=2), encoding="utf-8"
        )
        write_metrics_csv(runs, root / "metrics.csv")
    return bundle


def write_metrics_csv(runs: Sequence[dict], path: str | Path) -> None:
    """One flat CSV row per run, for assembling result tables."""
    columns = [
        "run",
        "ndcg_at_5",
        "ndcg_at_10",
        "cr_pre_mean",
        "cr_pre_max",
        "cr_pre_pass_rate",
        "cr_post_mean",
        "cr_post_max",
        "cr_post_pass_rate",
        "n_criteria",
        "n_leaves",
        "depth",
    ]
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for run in runs:
            writer.writerow(
                [
                    run["run"],
                    run["ndcg_at_5"],
                    run["ndcg_at_10"],
                    run["cr_pre"]["cr_mean"],
                    run["cr_pre"]["cr_max"],
                    run["cr_pre"]["pass_rate"],
                    run["cr_post"]["cr_mean"],
                    run["cr_post"]["cr_max"],
                    run["cr_post"]["pass_rate"],
                    run["hierarchy"]["n_criteria"],
                    run["hierarchy"]["n_leaves"],
                    run["hierarchy"]["depth"],
                ]
            )
