"""Document corpus -> AHP decision model -> ranked alternatives.

Pipeline: ingest and embed a corpus, cluster it into a semantic dendrogram,
instantiate a criteria hierarchy under cognitive-complexity budgets, derive
mathematically consistent sibling weights from a multi-agent panel, score
alternatives against leaf criteria, and aggregate utilities into a ranking
with a full audit trail. Every LLM touchpoint goes through one pluggable
provider with a deterministic offline mock.
"""

from .agents import (
    AgentRequest,
    AgentResponse,
    HttpProvider,
    MockProvider,
    Provider,
    ProviderConfig,
    make_provider,
)
from .cluster import CutResult, Dendrogram, DendrogramNode, adaptive_cut, ward_cluster
from .corpus import (
    Document,
    EmbeddedCorpus,
    Paragraph,
    embed,
    ingest_corpus,
    segment_paragraphs,
)
from .errors import (
    AhpError,
    ArtifactError,
    ClusterError,
    ConfigError,
    CorpusError,
    EvalError,
    GrammarError,
    HierarchyError,
    InferenceError,
    ProviderError,
    WeightsError,
)
from .evalharness import (
    ConsistencyStats,
    Scenario,
    consistency_stats,
    generate_synthetic_scenario,
    ndcg_at_k,
    run_scenario,
)
from .hierarchy import (
    ComplexityBudget,
    Criterion,
    Hierarchy,
    build_hierarchy,
    infer_complexity,
    summarize_criterion,
    verify_relevance,
)
from .inference import (
    Alternative,
    DecisionResult,
    ScoreMatrix,
    aggregate_utilities,
    render_report,
    score_alternative,
)
from .pipeline import PipelineSettings, run_pipeline
from .weights import (
    AgentJudgment,
    ConsistencyReport,
    LeaderConstraint,
    NodeWeightAudit,
    PairwiseMatrix,
    WeightVector,
    aggregate_matrices,
    consistency_ratio,
    derive_leader_constraints,
    elicit_matrix,
    snap_to_saaty,
    solve_constrained_llsm,
    weigh_hierarchy,
)

__version__ = "0.1.0"
