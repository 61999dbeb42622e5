"""Ward agglomerative clustering and gap-maximizing dendrogram cuts.

Heights are Ward merge costs: the increase in total within-cluster sum of
squares caused by the merge, i.e. |A||B|/(|A|+|B|) * ||centroid_A -
centroid_B||^2 (so two points merge at half their squared Euclidean
distance). The merge loop uses the Lance-Williams recurrence, which is
algebraically identical to recomputing that cost from centroids.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClusterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DendrogramNode:
    id: int
    height: float
    children: tuple[int, int] | None  # None for leaves
    members: tuple[int, ...]  # sorted paragraph indices under this subtree

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class Dendrogram:
    """Binary merge tree; node ids are 0..L-1 for leaves, then one id per
    merge in execution order (SciPy linkage convention)."""

    nodes: list[DendrogramNode]
    root: int

    def __post_init__(self):
        n = len(self.nodes)
        if n < 3 or n % 2 == 0:
            raise ClusterError("a dendrogram over L leaves has 2L-1 nodes")
        leaves = [node for node in self.nodes if node.is_leaf]
        if len(leaves) != (n + 1) // 2:
            raise ClusterError("wrong leaf count for node count")
        if self.root != n - 1:
            raise ClusterError("root must be the last merge")
        covered = sorted(self.nodes[self.root].members)
        if covered != list(range(len(leaves))):
            raise ClusterError("root must cover every paragraph index exactly once")

    @property
    def n_leaves(self) -> int:
        return (len(self.nodes) + 1) // 2

    def members(self, node_id: int) -> tuple[int, ...]:
        return self.nodes[node_id].members

    def subtree_internal_nodes(self, node_id: int) -> list[DendrogramNode]:
        """Internal nodes of the subtree rooted at ``node_id`` (root included)."""
        found = []
        stack = [node_id]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                continue
            found.append(node)
            stack.extend(node.children)
        return found

    def to_dict(self) -> dict:
        merges = [
            [node.children[0], node.children[1], node.height]
            for node in self.nodes
            if not node.is_leaf
        ]
        return {"leaves": self.n_leaves, "merges": merges}

    @classmethod
    def from_dict(cls, data: dict) -> "Dendrogram":
        try:
            n_leaves = int(data["leaves"])
            merges = data["merges"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ClusterError(f"malformed dendrogram document: {exc}") from exc
        if n_leaves < 2 or len(merges) != n_leaves - 1:
            raise ClusterError(
                f"dendrogram with {n_leaves} leaves needs {n_leaves - 1} merges"
            )
        nodes = [
            DendrogramNode(id=i, height=0.0, children=None, members=(i,))
            for i in range(n_leaves)
        ]
        for step, row in enumerate(merges):
            try:
                left, right, height = int(row[0]), int(row[1]), float(row[2])
            except (TypeError, ValueError, IndexError) as exc:
                raise ClusterError(f"malformed merge row {row!r}: {exc}") from exc
            node_id = n_leaves + step
            if not (0 <= left < node_id and 0 <= right < node_id) or left == right:
                raise ClusterError(f"merge {step} references invalid children")
            members = tuple(sorted(nodes[left].members + nodes[right].members))
            nodes.append(
                DendrogramNode(
                    id=node_id,
                    height=height,
                    children=(min(left, right), max(left, right)),
                    members=members,
                )
            )
        return cls(nodes=nodes, root=len(nodes) - 1)


@dataclass
class CutResult:
    cluster_roots: list[int]
    separation_score: float


def ward_cluster(corpus) -> Dendrogram:
    """Full Ward merge tree over an EmbeddedCorpus (or raw (n, k) array).

    Ties on merge distance break toward the lexicographically smallest
    (id, id) pair, so the sequence is deterministic across runs.
    """
    vectors = getattr(corpus, "vectors", corpus)
    points = np.asarray(vectors, dtype=float)
    if points.ndim != 2:
        raise ClusterError("ward_cluster expects a 2-D point matrix")
    n = points.shape[0]
    if n < 2:
        raise ClusterError("ward clustering needs at least 2 points")
    if not np.all(np.isfinite(points)):
        raise ClusterError("point matrix contains non-finite values")

    # Pairwise Ward merge costs for singletons: ||x - y||^2 / 2.
    sq_norms = np.sum(points * points, axis=1)
    dist = 0.5 * (sq_norms[:, None] + sq_norms[None, :] - 2.0 * points @ points.T)
    np.fill_diagonal(dist, np.inf)
    dist = np.maximum(dist, 0.0)
    np.fill_diagonal(dist, np.inf)

    alive = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=float)
    slot_cluster = np.arange(n)  # slot -> current cluster id

    nodes = [
        DendrogramNode(id=i, height=0.0, children=None, members=(i,))
        for i in range(n)
    ]

    for step in range(n - 1):
        masked = np.where(alive[:, None] & alive[None, :], dist, np.inf)
        d_min = masked.min()
        rows, cols = np.nonzero(masked == d_min)
        best = None
        best_slots = None
        for r, c in zip(rows, cols):
            if r >= c:
                continue
            pair = (
                int(min(slot_cluster[r], slot_cluster[c])),
                int(max(slot_cluster[r], slot_cluster[c])),
            )
            if best is None or pair < best:
                best = pair
                best_slots = (r, c)
        a, b = best_slots
        new_id = n + step
        members = tuple(
            sorted(nodes[slot_cluster[a]].members + nodes[slot_cluster[b]].members)
        )
        nodes.append(
            DendrogramNode(
                id=new_id, height=float(d_min), children=best, members=members
            )
        )

        # Lance-Williams update for Ward: the merged cluster takes slot a.
        sa, sb = sizes[a], sizes[b]
        others = alive.copy()
        others[a] = others[b] = False
        sc = sizes[others]
        dist[a, others] = (
            (sa + sc) * dist[a, others]
            + (sb + sc) * dist[b, others]
            - sc * d_min
        ) / (sa + sb + sc)
        dist[others, a] = dist[a, others]
        dist[a, a] = np.inf
        alive[b] = False
        sizes[a] = sa + sb
        slot_cluster[a] = new_id

    return Dendrogram(nodes=nodes, root=2 * n - 2)


def adaptive_cut(tree: Dendrogram, subtree_root: int, k_max: int) -> CutResult:
    """Best horizontal cut of the subtree into m clusters, 2 <= m <= k_max.

    Scores each feasible cut by the relative height gap: (lowest merge height
    crossed by the cut minus highest merge height below it) / subtree root
    height. Ties prefer fewer clusters. When no horizontal line yields a
    feasible m (degenerate height ties, or a zero-height subtree), the root's
    two children are returned with score 0.
    """
    if k_max < 2:
        raise ClusterError("k_max must be >= 2")
    root_node = tree.nodes[subtree_root]
    if root_node.is_leaf:
        raise ClusterError(f"subtree {subtree_root} is a leaf: nothing to cut")

    internal = tree.subtree_internal_nodes(subtree_root)
    heights = np.array([node.height for node in internal])
    root_height = root_node.height

    def roots_below(threshold: float) -> list[int]:
        # Clusters = children of above-threshold nodes that are not
        # themselves above the threshold.
        above = {node.id for node in internal if node.height >= threshold}
        roots = []
        for node in internal:
            if node.id not in above:
                continue
            for child in node.children:
                if child not in above:
                    roots.append(child)
        return sorted(roots, key=lambda nid: tree.nodes[nid].members[0])

    if root_height <= 0.0:
        # Zero-height subtree: every horizontal cut is degenerate.
        return CutResult(
            cluster_roots=sorted(
                root_node.children, key=lambda nid: tree.nodes[nid].members[0]
            ),
            separation_score=0.0,
        )

    distinct = sorted(set(heights.tolist()), reverse=True)
    best: tuple[float, int, float] | None = None  # (-score, m, threshold)
    for j, level in enumerate(distinct):
        m = int(np.sum(heights >= level)) + 1
        if m < 2 or m > k_max:
            continue
        below = distinct[j + 1] if j + 1 < len(distinct) else 0.0
        score = (level - below) / root_height
        key = (-score, m, level)
        if best is None or key < best:
            best = key
    if best is None:
        log.warning(
            "no horizontal cut of subtree %d yields 2..%d clusters; "
            "falling back to the root's children",
            subtree_root,
            k_max,
        )
        return CutResult(
            cluster_roots=sorted(
                root_node.children, key=lambda nid: tree.nodes[nid].members[0]
            ),
            separation_score=0.0,
        )

    score = -best[0]
    cluster_roots = roots_below(best[2])
    return CutResult(cluster_roots=cluster_roots, separation_score=float(score))


def save_dendrogram(tree: Dendrogram, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree.to_dict(), indent=2), encoding="utf-8")


def load_dendrogram(path: str | Path) -> Dendrogram:
    file = Path(path)
    if not file.exists():
        raise ClusterError(f"dendrogram artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ClusterError(f"dendrogram artifact is not valid JSON: {exc}") from exc
    return Dendrogram.from_dict(data)
