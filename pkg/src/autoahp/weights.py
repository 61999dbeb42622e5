"""Pairwise judgment elicitation, aggregation, and consistent weight derivation.

Per sibling group: a panel of agents each produces a reciprocal comparison
matrix, the matrices are fused by a confidence-weighted geometric mean, and
weights come either from the consensus matrix's principal eigenvector (when
it is already consistent and unconstrained) or from a log-least-squares fit
subject to the leader agent's dominance constraints. Final weight ratios are
also snapped onto the discrete 1-9 scale for the audit trail.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .agents.base import AgentRequest, Provider
from .errors import GrammarError, ProviderError, WeightsError
from .hierarchy import Criterion, Hierarchy

log = logging.getLogger(__name__)

# Saaty random consistency indices (expected CI of random reciprocal
# matrices); the de facto standard table.
RANDOM_INDEX = {
    1: 0.0,
    2: 0.0,
    3: 0.58,
    4: 0.90,
    5: 1.12,
    6: 1.24,
    7: 1.32,
    8: 1.41,
    9: 1.45,
    10: 1.49,
}

CR_THRESHOLD = 0.1
SAATY_VALUES = np.array(
    [1 / 9, 1 / 8, 1 / 7, 1 / 6, 1 / 5, 1 / 4, 1 / 3, 1 / 2, 1.0]
    + [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
)
SAATY_MIN, SAATY_MAX = 1 / 9, 9.0

DEFAULT_PANEL = (
    "pragmatic operations analyst",
    "risk-averse domain expert",
    "end-user advocate",
)

MAX_EVIDENCE_SNIPPETS = 12


@dataclass
class PairwiseMatrix:
    """Positive reciprocal judgment matrix over an ordered sibling group."""

    criterion_ids: list[str]
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        n = len(self.criterion_ids)
        if n < 2:
            raise WeightsError("a pairwise matrix needs at least 2 criteria")
        if self.entries.shape != (n, n):
            raise WeightsError(
                f"matrix shape {self.entries.shape} does not match {n} criteria"
            )
        if np.any(self.entries <= 0):
            raise WeightsError("pairwise entries must be positive")
        if np.any(np.abs(np.diag(self.entries) - 1.0) > 1e-9):
            raise WeightsError("pairwise diagonal must be 1")
        if np.any(np.abs(self.entries * self.entries.T - 1.0) > 1e-9):
            raise WeightsError("pairwise matrix violates reciprocity")

    @property
    def n(self) -> int:
        return len(self.criterion_ids)

    @classmethod
    def from_upper(
        cls, criterion_ids: Sequence[str], upper: dict[tuple[int, int], float]
    ) -> "PairwiseMatrix":
        """Build from strict upper-triangle values; the lower triangle is the
        exact reciprocal."""
        n = len(criterion_ids)
        entries = np.ones((n, n))
        for (a, b), value in upper.items():
            if not 0 <= a < b < n:
                raise WeightsError(f"invalid upper-triangle index ({a}, {b})")
            entries[a, b] = value
            entries[b, a] = 1.0 / value
        return cls(criterion_ids=list(criterion_ids), entries=entries)


@dataclass(frozen=True)
class ConsistencyReport:
    lambda_max: float
    ci: float
    cr: float
    n: int
    passes: bool


@dataclass(frozen=True)
class LeaderConstraint:
    """Criterion ``i`` must be at least ``beta`` times as important as ``j``."""

    i: str
    j: str
    beta: float

    def __post_init__(self):
        if self.i == self.j:
            raise WeightsError("leader constraint must relate two distinct criteria")
        if self.beta < 1.0:
            raise WeightsError(f"leader constraint beta must be >= 1, got {self.beta}")


@dataclass
class WeightVector:
    criterion_ids: list[str]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.criterion_ids),):
            raise WeightsError("weight count does not match criterion count")
        if np.any(self.weights <= 0):
            raise WeightsError("weights must be positive")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise WeightsError("weights must sum to 1")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.criterion_ids, self.weights.tolist()))


@dataclass
class AgentJudgment:
    agent_id: str
    matrix: PairwiseMatrix
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise WeightsError("judgment confidence gamma must lie in [0, 1]")


@dataclass
class NodeWeightAudit:
    """Everything needed to replay one sibling group's weighting."""

    node_id: str
    criterion_ids: list[str]
    personas: list[str]
    agent_matrices: list[np.ndarray]
    gammas: list[float]
    consensus: np.ndarray
    constraints: list[LeaderConstraint]
    weights: np.ndarray
    snapped: np.ndarray
    cr_before: ConsistencyReport
    cr_after: ConsistencyReport
    cr_snapped: ConsistencyReport
    optimized: bool

    def to_dict(self) -> dict:
        def report(r: ConsistencyReport) -> dict:
            return {
                "lambda_max": r.lambda_max,
                "ci": r.ci,
                "cr": r.cr,
                "n": r.n,
                "passes": r.passes,
            }

        return {
            "criterion_ids": self.criterion_ids,
            "personas": self.personas,
            "agent_matrices": [m.tolist() for m in self.agent_matrices],
            "gammas": self.gammas,
            "consensus_matrix": self.consensus.tolist(),
            "leader_constraints": [
                {"i": c.i, "j": c.j, "beta": c.beta} for c in self.constraints
            ],
            "weights": self.weights.tolist(),
            "snapped_matrix": self.snapped.tolist(),
            "cr_before": report(self.cr_before),
            "cr_after": report(self.cr_after),
            "cr_snapped": report(self.cr_snapped),
            "optimized": self.optimized,
        }

    @classmethod
    def from_dict(cls, node_id: str, data: dict) -> "NodeWeightAudit":
        def report(record: dict) -> ConsistencyReport:
            return ConsistencyReport(
                lambda_max=float(record["lambda_max"]),
                ci=float(record["ci"]),
                cr=float(record["cr"]),
                n=int(record["n"]),
                passes=bool(record["passes"]),
            )

        try:
            return cls(
                node_id=node_id,
                criterion_ids=[str(c) for c in data["criterion_ids"]],
                personas=[str(p) for p in data["personas"]],
                agent_matrices=[
                    np.asarray(m, dtype=float) for m in data["agent_matrices"]
                ],
                gammas=[float(g) for g in data["gammas"]],
                consensus=np.asarray(data["consensus_matrix"], dtype=float),
                constraints=[
                    LeaderConstraint(i=c["i"], j=c["j"], beta=float(c["beta"]))
                    for c in data["leader_constraints"]
                ],
                weights=np.asarray(data["weights"], dtype=float),
                snapped=np.asarray(data["snapped_matrix"], dtype=float),
                cr_before=report(data["cr_before"]),
                cr_after=report(data["cr_after"]),
                cr_snapped=report(data["cr_snapped"]),
                optimized=bool(data["optimized"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightsError(
                f"malformed audit record for node {node_id!r}: {exc}"
            ) from exc


def power_iteration(
    matrix: np.ndarray, tol: float = 1e-10, max_iter: int = 1000
) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a positive matrix.

    Iterates x <- Ax normalized to sum 1 (the Perron vector of a positive
    matrix is positive, so the L1-normalized iterate stays a probability
    vector). Returns (lambda_max, eigenvector).
    """
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or np.any(A <= 0):
        raise WeightsError("power iteration requires a square positive matrix")
    x = np.full(n, 1.0 / n)
    lam = float("nan")
    for _ in range(max_iter):
        y = A @ x
        total = float(y.sum())
        x_new = y / total
        lam = total  # at the fixed point, sum(Ax) / sum(x) with sum(x) = 1
        if np.max(np.abs(x_new - x)) < tol:
            return lam, x_new
        x = x_new
    residual = float(np.max(np.abs(A @ x - lam * x)))
    raise WeightsError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})"
    )


def consistency_ratio(matrix: PairwiseMatrix | np.ndarray) -> ConsistencyReport:
    """Saaty consistency report: CI = (lambda_max - n)/(n - 1), CR = CI/RI."""
    entries = matrix.entries if isinstance(matrix, PairwiseMatrix) else np.asarray(matrix, float)
    n = entries.shape[0]
    lam, _ = power_iteration(entries)
    if n <= 2:
        ci = 0.0
        cr = 0.0
    else:
        ci = (lam - n) / (n - 1)
        ri = RANDOM_INDEX.get(n)
        if ri is None:
            raise WeightsError(f"no random index tabulated for n = {n}")
        cr = ci / ri
    return ConsistencyReport(lambda_max=lam, ci=ci, cr=cr, n=n, passes=cr < CR_THRESHOLD)


def elicit_matrix(
    siblings: Sequence[Criterion],
    evidence: Sequence[str],
    provider: Provider,
    persona: str,
    seed: int = 0,
    sizes: Sequence[int] | None = None,
    noise_scale: float | None = None,
) -> PairwiseMatrix:
    """One agent's pairwise comparison matrix for a sibling group.

    The provider supplies the strict upper triangle on the 1-9 scale; the
    lower triangle is filled by reciprocity. Out-of-range values are clamped
    and anything unparseable after one retry defaults to 1 with a warning.
    """
    if len(siblings) < 2:
        raise WeightsError("elicitation needs at least 2 siblings")
    ids = [c.id for c in siblings]
    payload = {
        "criteria": [
            {"id": c.id, "label": c.label, "description": c.description}
            for c in siblings
        ],
        "evidence": list(evidence)[:MAX_EVIDENCE_SNIPPETS],
    }
    if sizes is not None:
        payload["sizes"] = list(sizes)
    if noise_scale is not None:
        payload["noise_scale"] = noise_scale

    comparisons: list[dict] = []
    for attempt in range(2):
        request = AgentRequest(
            role_persona=persona,
            task_kind="elicit_matrix",
            payload=payload if attempt == 0 else {**payload, "retry": True},
            seed=seed,
        )
        try:
            comparisons = provider.complete(request).parsed["comparisons"]
            break
        except GrammarError as exc:
            log.warning(
                "elicitation reply unparseable for persona %r (attempt %d): %s",
                persona,
                attempt + 1,
                exc,
            )
    index = {cid: pos for pos, cid in enumerate(ids)}
    upper: dict[tuple[int, int], float] = {}
    for row in comparisons:
        if row["i"] not in index or row["j"] not in index:
            log.warning("comparison references unknown criterion: %r", row)
            continue
        a, b = index[row["i"]], index[row["j"]]
        if a == b:
            continue
        if a > b:
            a, b = b, a
            row = {**row, "value": 1.0 / row["value"]} if row["value"] > 0 else row
        value = row["value"]
        if value <= 0:
            log.warning("non-positive comparison value %r defaults to 1", value)
            value = 1.0
        value = min(max(value, SAATY_MIN), SAATY_MAX)
        if (a, b) not in upper:
            upper[(a, b)] = value
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            if (a, b) not in upper:
                log.warning(
                    "missing comparison (%s, %s) defaults to 1", ids[a], ids[b]
                )
                upper[(a, b)] = 1.0
    return PairwiseMatrix.from_upper(ids, upper)


def aggregate_matrices(judgments: Sequence[AgentJudgment]) -> PairwiseMatrix:
    """Confidence-weighted geometric mean of the panel's matrices."""
    if not judgments:
        raise WeightsError("aggregation needs at least 1 judgment")
    first = judgments[0].matrix
    for j in judgments[1:]:
        if j.matrix.criterion_ids != first.criterion_ids:
            raise WeightsError(
                f"judgment {j.agent_id!r} orders criteria differently"
            )
    gammas = np.array([j.gamma for j in judgments])
    if abs(float(gammas.sum()) - 1.0) > 1e-9:
        raise WeightsError(f"confidence weights must sum to 1, got {gammas.sum()}")
    if len(judgments) == 1:
        return PairwiseMatrix(
            criterion_ids=list(first.criterion_ids), entries=first.entries.copy()
        )
    log_stack = np.stack([np.log(j.matrix.entries) for j in judgments])
    fused = np.exp(np.tensordot(gammas, log_stack, axes=1))
    n = first.n
    upper = {
        (a, b): float(fused[a, b]) for a in range(n) for b in range(a + 1, n)
    }
    return PairwiseMatrix.from_upper(first.criterion_ids, upper)


def derive_leader_constraints(
    hierarchy_context: str,
    siblings: Sequence[Criterion],
    provider: Provider,
    seed: int = 0,
    fixture_constraints: Sequence[dict] | None = None,
) -> list[LeaderConstraint]:
    """Leader agent's dominance requirements for a sibling group. Malformed
    or out-of-scope triples are dropped with warnings; nothing here aborts."""
    if len(siblings) < 2:
        raise WeightsError("leader constraints need at least 2 siblings")
    ids = {c.id for c in siblings}
    payload = {
        "goal_context": hierarchy_context,
        "criteria": [{"id": c.id, "label": c.label} for c in siblings],
    }
    if fixture_constraints is not None:
        payload["fixture_constraints"] = list(fixture_constraints)
    request = AgentRequest(
        role_persona="lead decision strategist",
        task_kind="leader_constraints",
        payload=payload,
        seed=seed,
    )
    try:
        rows = provider.complete(request).parsed["constraints"]
    except ProviderError as exc:
        log.warning("leader constraint elicitation failed: %s; using none", exc)
        return []
    constraints: list[LeaderConstraint] = []
    for row in rows:
        if row["i"] not in ids or row["j"] not in ids or row["i"] == row["j"]:
            log.warning("dropping constraint with unknown criteria: %r", row)
            continue
        if row["beta"] < 1.0:
            log.warning("dropping constraint with beta < 1: %r", row)
            continue
        constraints.append(
            LeaderConstraint(i=row["i"], j=row["j"], beta=float(row["beta"]))
        )
    return constraints


def _check_feasible(n: int, constraints: list[tuple[int, int, float]]) -> None:
    """Difference-constraint feasibility via Bellman-Ford.

    x_i - x_j >= c becomes the edge i -> j with weight -c (x_j <= x_i - c);
    a reachable negative cycle means the constraint set contradicts itself.
    """
    dist = [0.0] * n
    edges = [(i, j, -c) for i, j, c in constraints]
    for _ in range(n - 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v] - 1e-15:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return
    for u, v, w in edges:
        if dist[u] + w < dist[v] - 1e-15:
            raise WeightsError(
                "leader constraints are infeasible (contradictory dominance cycle)"
            )


def _project_onto_constraints(
    x: np.ndarray,
    constraints: list[tuple[int, int, float]],
    tol: float = 1e-13,
    max_cycles: int = 2000,
) -> np.ndarray:
    """Euclidean projection onto {x : x_i - x_j >= c} via Dykstra's method.

    Each halfspace projection moves x_i up and x_j down by half the
    violation, so the mean of x is preserved.
    """
    if not constraints:
        return x
    if len(constraints) == 1:
        i, j, c = constraints[0]
        out = x.copy()
        violation = c - (out[i] - out[j])
        if violation > 0:
            out[i] += violation / 2
            out[j] -= violation / 2
        return out
    out = x.copy()
    corrections = [np.zeros_like(x) for _ in constraints]
    for _ in range(max_cycles):
        moved = 0.0
        for idx, (i, j, c) in enumerate(constraints):
            y = out + corrections[idx]
            projected = y.copy()
            violation = c - (y[i] - y[j])
            if violation > 0:
                projected[i] += violation / 2
                projected[j] -= violation / 2
            corrections[idx] = y - projected
            moved = max(moved, float(np.max(np.abs(projected - out))))
            out = projected
        if moved < tol:
            break
    return out


def solve_constrained_llsm(
    matrix: PairwiseMatrix,
    constraints: Sequence[LeaderConstraint] = (),
    tol: float = 1e-8,
    max_iter: int = 50_000,
) -> WeightVector:
    """Log-least-squares weights subject to leader dominance constraints.

    Minimizes sum_ij (ln a_ij - (x_i - x_j))^2 over x = ln w with x_i - x_j
    >= ln beta per constraint, by projected gradient descent with the step
    from the Lipschitz bound (the objective's Hessian is 4(nI - 11^T), so
    the gradient is 4n-Lipschitz). Stops when the gradient-mapping residual
    falls below ``tol``. Weights are recovered by stable exponentiation and
    normalization; without constraints this is exactly the row geometric
    mean solution.
    """
    ids = matrix.criterion_ids
    index = {cid: pos for pos, cid in enumerate(ids)}
    triplets: list[tuple[int, int, float]] = []
    for con in constraints:
        if con.i not in index or con.j not in index:
            raise WeightsError(
                f"constraint references criteria outside the matrix: {con}"
            )
        triplets.append((index[con.i], index[con.j], float(np.log(con.beta))))

    n = matrix.n
    log_entries = np.log(matrix.entries)
    row_means = log_entries.mean(axis=1)  # unconstrained LLSM optimum

    if triplets:
        _check_feasible(n, triplets)
        step = 1.0 / (4.0 * n)
        x = _project_onto_constraints(row_means, triplets)
        converged = False
        residual = float("inf")
        for _ in range(max_iter):
            gradient = -4.0 * (log_entries.sum(axis=1) - n * x + x.sum())
            x_next = _project_onto_constraints(x - step * gradient, triplets)
            residual = float(np.max(np.abs(x_next - x))) / step
            x = x_next
            if residual <= tol:
                converged = True
                break
        if not converged:
            raise WeightsError(
                f"constrained LLSM did not converge (KKT residual {residual:.3e})"
            )
    else:
        x = row_means

    x = x - x[-1]  # gauge: objective and constraints are shift-invariant
    stable = np.exp(x - x.max())
    weights = stable / stable.sum()

    for i, j, c in triplets:
        if weights[i] < np.exp(c) * weights[j] - 1e-9:
            raise WeightsError(
                f"solver produced weights violating constraint "
                f"{ids[i]} >= {np.exp(c):.3f} * {ids[j]}"
            )
    return WeightVector(criterion_ids=list(ids), weights=weights)


def snap_to_saaty(weights: WeightVector) -> PairwiseMatrix:
    """Map weight ratios onto the discrete 1-9 scale, nearest in log space."""
    n = len(weights.criterion_ids)
    log_scale = np.log(SAATY_VALUES)
    upper: dict[tuple[int, int], float] = {}
    for a in range(n):
        for b in range(a + 1, n):
            ratio = weights.weights[a] / weights.weights[b]
            nearest = int(np.argmin(np.abs(log_scale - np.log(ratio))))
            upper[(a, b)] = float(SAATY_VALUES[nearest])
    return PairwiseMatrix.from_upper(weights.criterion_ids, upper)


def matrix_from_weights(weights: WeightVector) -> PairwiseMatrix:
    """The perfectly consistent matrix induced by a weight vector."""
    n = len(weights.criterion_ids)
    upper = {
        (a, b): float(weights.weights[a] / weights.weights[b])
        for a in range(n)
        for b in range(a + 1, n)
    }
    return PairwiseMatrix.from_upper(weights.criterion_ids, upper)


def weigh_node(
    node_id: str,
    siblings: Sequence[Criterion],
    evidence: Sequence[str],
    provider: Provider,
    panel: Sequence[str] = DEFAULT_PANEL,
    seed: int = 0,
    sizes: Sequence[int] | None = None,
    goal_context: str = "",
    fixture_constraints: Sequence[dict] | None = None,
) -> tuple[WeightVector, NodeWeightAudit]:
    """Run the full weighting pipeline for one sibling group."""
    if not panel:
        raise WeightsError("panel must contain at least one persona")
    judgments = [
        AgentJudgment(
            agent_id=persona,
            matrix=elicit_matrix(
                siblings, evidence, provider, persona, seed=seed, sizes=sizes
            ),
            gamma=1.0 / len(panel),
        )
        for persona in panel
    ]
    consensus = aggregate_matrices(judgments)
    cr_before = consistency_ratio(consensus)
    constraints = derive_leader_constraints(
        goal_context, siblings, provider, seed=seed,
        fixture_constraints=fixture_constraints,
    )

    optimized = cr_before.cr >= CR_THRESHOLD or bool(constraints)
    if optimized:
        weight_vector = solve_constrained_llsm(consensus, constraints)
    else:
        _, eigvec = power_iteration(consensus.entries)
        weight_vector = WeightVector(
            criterion_ids=list(consensus.criterion_ids),
            weights=eigvec / eigvec.sum(),
        )

    snapped = snap_to_saaty(weight_vector)
    cr_after = consistency_ratio(matrix_from_weights(weight_vector))
    cr_snapped = consistency_ratio(snapped)
    if not cr_snapped.passes:
        log.warning(
            "node %s: snapped matrix CR %.4f still exceeds %.2f",
            node_id,
            cr_snapped.cr,
            CR_THRESHOLD,
        )

    audit = NodeWeightAudit(
        node_id=node_id,
        criterion_ids=list(consensus.criterion_ids),
        personas=list(panel),
        agent_matrices=[j.matrix.entries for j in judgments],
        gammas=[j.gamma for j in judgments],
        consensus=consensus.entries,
        constraints=constraints,
        weights=weight_vector.weights,
        snapped=snapped.entries,
        cr_before=cr_before,
        cr_after=cr_after,
        cr_snapped=cr_snapped,
        optimized=optimized,
    )
    return weight_vector, audit


def weigh_hierarchy(
    hierarchy: Hierarchy,
    evidence_for: Callable[[str], Sequence[str]],
    panel: Sequence[str],
    provider: Provider,
    seed: int = 0,
    fixture_constraints: dict[str, list[dict]] | None = None,
) -> tuple[dict[str, WeightVector], dict[str, NodeWeightAudit]]:
    """Weigh every internal node of the hierarchy.

    ``evidence_for`` maps a criterion id to the texts grounding it (used both
    as elicitation evidence and, via its length, as the cluster size signal).
    Returns ({internal node id -> children WeightVector}, audit records).
    """
    weights: dict[str, WeightVector] = {}
    audits: dict[str, NodeWeightAudit] = {}
    for node_id in hierarchy.internal_ids():
        siblings = hierarchy.children(node_id)
        texts_per_child = [list(evidence_for(c.id)) for c in siblings]
        sizes = [max(len(texts), 1) for texts in texts_per_child]
        evidence = [
            text[:200]
            for texts in texts_per_child
            for text in texts[:2]
        ]
        context = (
            f"Goal: {hierarchy.goal}. Weighing children of "
            f"{hierarchy.criteria[node_id].label!r}."
        )
        try:
            vector, audit = weigh_node(
                node_id,
                siblings,
                evidence,
                provider,
                panel=panel,
                seed=seed,
                sizes=sizes,
                goal_context=context,
                fixture_constraints=(fixture_constraints or {}).get(node_id),
            )
        except (WeightsError, ProviderError) as exc:
            raise WeightsError(f"weighting failed at node {node_id!r}: {exc}") from exc
        weights[node_id] = vector
        audits[node_id] = audit
    return weights, audits
