"""Criteria-tree construction from the dendrogram.

Top-down breadth-first expansion: each criterion maps to a dendrogram node,
the adaptive cut proposes child clusters, an agent names each cluster, a
second agent scores the child's relevance to its parent, and children below
the relevance threshold are pruned. A node keeps fewer than 2 verified
children only by staying a leaf, and expansion stops at the depth budget.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .agents.base import AgentRequest, Provider
from .cluster import Dendrogram, adaptive_cut
from .corpus import EmbeddedCorpus
from .errors import ClusterError, HierarchyError, ProviderError

log = logging.getLogger(__name__)

K_MAX_BOUNDS = (2, 15)
D_MAX_BOUNDS = (1, 6)
DEFAULT_BUDGET = (5, 2)
DEFAULT_TAU = 0.5
MAX_LABEL_WORDS = 8
MAX_EVIDENCE_TEXTS = 12
MAX_EVIDENCE_CHARS = 400


@dataclass(frozen=True)
class Criterion:
    id: str
    label: str
    description: str
    parent: str | None
    depth: int
    cluster_node: int

    def __post_init__(self):
        if not self.label.strip():
            raise HierarchyError(f"criterion {self.id!r} has an empty label")
        if (self.parent is None) != (self.depth == 0):
            raise HierarchyError(
                f"criterion {self.id!r}: only the depth-0 root lacks a parent"
            )


@dataclass(frozen=True)
class ComplexityBudget:
    k_max: int
    d_max: int
    source: str = "expert_specified"  # or "llm_recommended"
    fallback_used: bool = False

    def __post_init__(self):
        lo, hi = K_MAX_BOUNDS
        if not (lo <= self.k_max <= hi):
            raise HierarchyError(f"k_max must be in [{lo}, {hi}], got {self.k_max}")
        lo, hi = D_MAX_BOUNDS
        if not (lo <= self.d_max <= hi):
            raise HierarchyError(f"d_max must be in [{lo}, {hi}], got {self.d_max}")
        if self.source not in ("expert_specified", "llm_recommended"):
            raise HierarchyError(f"unknown budget source: {self.source!r}")


def _id_sort_key(criterion_id: str) -> tuple:
    # Path ids ("0.1.2") sort numerically; anything else falls back to text.
    parts = criterion_id.split(".")
    try:
        return tuple((0, int(part)) for part in parts)
    except ValueError:
        return tuple((1, part) for part in parts)


@dataclass
class Hierarchy:
    criteria: dict[str, Criterion]
    root: str
    k_max: int
    d_max: int
    tau: float
    _children: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._children = {}
        for criterion in self.criteria.values():
            if criterion.parent is not None:
                self._children.setdefault(criterion.parent, []).append(criterion.id)
        for kids in self._children.values():
            kids.sort(key=_id_sort_key)
        self.validate()

    def validate(self) -> None:
        if self.root not in self.criteria:
            raise HierarchyError("hierarchy root missing from criteria")
        root = self.criteria[self.root]
        if root.parent is not None or root.depth != 0:
            raise HierarchyError("root criterion must have depth 0 and no parent")
        for criterion in self.criteria.values():
            if criterion.parent is None:
                if criterion.id != self.root:
                    raise HierarchyError("multiple roots in hierarchy")
                continue
            parent = self.criteria.get(criterion.parent)
            if parent is None:
                raise HierarchyError(
                    f"criterion {criterion.id!r} references missing parent "
                    f"{criterion.parent!r}"
                )
            if criterion.depth != parent.depth + 1:
                raise HierarchyError(
                    f"criterion {criterion.id!r} depth inconsistent with parent"
                )
            if criterion.depth > self.d_max:
                raise HierarchyError(
                    f"criterion {criterion.id!r} exceeds depth budget {self.d_max}"
                )
        for node_id, kids in self._children.items():
            if not 2 <= len(kids) <= self.k_max:
                raise HierarchyError(
                    f"internal criterion {node_id!r} has {len(kids)} children; "
                    f"expected 2..{self.k_max}"
                )
        # Reachability doubles as the cycle check.
        seen = set()
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            if node in seen:
                raise HierarchyError("cycle detected in hierarchy")
            seen.add(node)
            queue.extend(self._children.get(node, []))
        if seen != set(self.criteria):
            raise HierarchyError("hierarchy contains criteria unreachable from root")

    def children(self, criterion_id: str) -> list[Criterion]:
        return [self.criteria[c] for c in self._children.get(criterion_id, [])]

    def is_leaf(self, criterion_id: str) -> bool:
        return criterion_id not in self._children

    def leaf_ids(self) -> list[str]:
        return sorted(
            (c for c in self.criteria if self.is_leaf(c)), key=_id_sort_key
        )

    def internal_ids(self) -> list[str]:
        return sorted(self._children, key=_id_sort_key)

    def depth(self) -> int:
        return max(c.depth for c in self.criteria.values())

    @property
    def goal(self) -> str:
        return self.criteria[self.root].label

    def to_dict(self) -> dict:
        ordered = sorted(self.criteria.values(), key=lambda c: _id_sort_key(c.id))
        return {
            "goal": self.goal,
            "k_max": self.k_max,
            "d_max": self.d_max,
            "tau": self.tau,
            "nodes": [
                {
                    "id": c.id,
                    "label": c.label,
                    "description": c.description,
                    "parent": c.parent,
                    "cluster_node": c.cluster_node,
                }
                for c in ordered
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hierarchy":
        try:
            nodes = data["nodes"]
            k_max = int(data["k_max"])
            d_max = int(data["d_max"])
            tau = float(data["tau"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HierarchyError(f"malformed hierarchy document: {exc}") from exc
        criteria: dict[str, Criterion] = {}
        root_id = None
        for node in nodes:
            try:
                parent = node["parent"]
                criterion = Criterion(
                    id=str(node["id"]),
                    label=str(node["label"]),
                    description=str(node.get("description", "")),
                    parent=None if parent is None else str(parent),
                    depth=0 if parent is None else str(parent).count(".") + 1,
                    cluster_node=int(node["cluster_node"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise HierarchyError(f"malformed hierarchy node {node!r}: {exc}") from exc
            criteria[criterion.id] = criterion
            if criterion.parent is None:
                root_id = criterion.id
        if root_id is None:
            raise HierarchyError("hierarchy document has no root node")
        return cls(criteria=criteria, root=root_id, k_max=k_max, d_max=d_max, tau=tau)


def infer_complexity(
    goal: str, corpus_digest: str, provider: Provider, seed: int = 0
) -> ComplexityBudget:
    """Ask the provider for a (k_max, d_max) recommendation, clamped into
    bounds; unusable output falls back to the defaults with a warning."""
    if not goal.strip():
        raise HierarchyError("decision goal must be non-empty")
    request = AgentRequest(
        role_persona="decision modeling consultant",
        task_kind="infer_complexity",
        payload={"goal": goal, "corpus_digest": corpus_digest},
        seed=seed,
    )
    try:
        parsed = provider.complete(request).parsed
        k_max = min(max(parsed["k_max"], K_MAX_BOUNDS[0]), K_MAX_BOUNDS[1])
        d_max = min(max(parsed["d_max"], D_MAX_BOUNDS[0]), D_MAX_BOUNDS[1])
        return ComplexityBudget(k_max=k_max, d_max=d_max, source="llm_recommended")
    except ProviderError as exc:
        log.warning(
            "complexity recommendation unusable (%s); using defaults %s",
            exc,
            DEFAULT_BUDGET,
        )
        return ComplexityBudget(
            k_max=DEFAULT_BUDGET[0],
            d_max=DEFAULT_BUDGET[1],
            source="llm_recommended",
            fallback_used=True,
        )


def summarize_criterion(
    paragraph_texts: list[str],
    parent: Criterion,
    provider: Provider,
    seed: int = 0,
    cluster_node: int | None = None,
) -> tuple[str, str]:
    """Label (at most 8 words) and description (at most 2 sentences) for a
    cluster of paragraphs."""
    if not paragraph_texts:
        raise HierarchyError("summarize_criterion requires a non-empty text list")
    evidence = [
        text[:MAX_EVIDENCE_CHARS] for text in paragraph_texts[:MAX_EVIDENCE_TEXTS]
    ]
    request = AgentRequest(
        role_persona="taxonomy editor",
        task_kind="summarize",
        payload={
            "texts": evidence,
            "parent_label": parent.label,
            "parent_description": parent.description,
        },
        seed=seed,
    )
    try:
        parsed = provider.complete(request).parsed
    except ProviderError as exc:
        where = f" (cluster node {cluster_node})" if cluster_node is not None else ""
        raise HierarchyError(f"criterion summarization failed{where}: {exc}") from exc
    label_words = parsed["label"].split()
    label = " ".join(label_words[:MAX_LABEL_WORDS])
    sentences = [s for s in parsed["description"].split(". ") if s]
    description = ". ".join(sentences[:2])
    return label, description


def verify_relevance(
    child_label: str, parent: Criterion, provider: Provider, seed: int = 0
) -> float:
    """Relevance of a proposed child to its parent in [0, 1]. Provider
    failures score 0 (the branch gets pruned) rather than aborting a build."""
    if not child_label.strip() or not parent.label.strip():
        raise HierarchyError("verify_relevance requires non-empty labels")
    request = AgentRequest(
        role_persona="taxonomy reviewer",
        task_kind="verify",
        payload={"child_label": child_label, "parent_label": parent.label},
        seed=seed,
    )
    try:
        score = provider.complete(request).parsed["score"]
    except ProviderError as exc:
        log.warning(
            "relevance verification failed for %r under %r: %s; scoring 0",
            child_label,
            parent.label,
            exc,
        )
        return 0.0
    return min(max(float(score), 0.0), 1.0)


def build_hierarchy(
    tree: Dendrogram,
    goal: str,
    corpus: EmbeddedCorpus,
    budget: ComplexityBudget,
    tau: float,
    provider: Provider,
    seed: int = 0,
) -> Hierarchy:
    """Breadth-first expansion of the criteria tree under the complexity
    budget, with per-child semantic verification against ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise HierarchyError(f"tau must lie in [0, 1], got {tau}")
    if tree.n_leaves != len(corpus.paragraphs):
        raise HierarchyError(
            f"dendrogram covers {tree.n_leaves} paragraphs but corpus has "
            f"{len(corpus.paragraphs)}"
        )

    root = Criterion(
        id="0",
        label=goal,
        description=goal,
        parent=None,
        depth=0,
        cluster_node=tree.root,
    )
    criteria: dict[str, Criterion] = {root.id: root}
    queue: deque[tuple[str, int]] = deque([(root.id, 0)])

    while queue:
        current_id, depth = queue.popleft()
        current = criteria[current_id]
        cluster = tree.nodes[current.cluster_node]
        if depth >= budget.d_max or cluster.is_leaf:
            continue

        try:
            cut = adaptive_cut(tree, current.cluster_node, budget.k_max)
        except ClusterError as exc:
            raise HierarchyError(
                f"adaptive cut failed under criterion {current_id!r}: {exc}"
            ) from exc

        accepted: list[tuple[str, str, int]] = []
        for cluster_root in cut.cluster_roots:
            texts = [corpus.paragraphs[i].text for i in tree.members(cluster_root)]
            label, description = summarize_criterion(
                texts, current, provider, seed=seed, cluster_node=cluster_root
            )
            score = verify_relevance(label, current, provider, seed=seed)
            if score >= tau:
                accepted.append((label, description, cluster_root))
            else:
                log.info(
                    "pruned candidate %r under %r (relevance %.3f < tau %.3f)",
                    label,
                    current.label,
                    score,
                    tau,
                )

        if len(accepted) < 2:
            # A single verified child adds no comparative structure.
            continue
        for position, (label, description, cluster_root) in enumerate(accepted):
            child = Criterion(
                id=f"{current_id}.{position}",
                label=label,
                description=description,
                parent=current_id,
                depth=depth + 1,
                cluster_node=cluster_root,
            )
            criteria[child.id] = child
            queue.append((child.id, depth + 1))

    return Hierarchy(
        criteria=criteria,
        root=root.id,
        k_max=budget.k_max,
        d_max=budget.d_max,
        tau=tau,
    )


def save_hierarchy(hierarchy: Hierarchy, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(hierarchy.to_dict(), indent=2), encoding="utf-8"
    )


def load_hierarchy(path: str | Path) -> Hierarchy:
    file = Path(path)
    if not file.exists():
        raise HierarchyError(f"hierarchy artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HierarchyError(f"hierarchy artifact is not valid JSON: {exc}") from exc
    return Hierarchy.from_dict(data)
