"""Repository-scale context construction.

codescout indexes a codebase into hierarchical units and a layered
relation graph, scouts it with metadata-only tools under a cost-aware
budget, and assembles a compact context pack for a downstream reasoner.
"""

from .budget_policy import (
    BudgetConfig,
    ContextPack,
    IterationRecord,
    NavState,
    PackedUnit,
    TerminalReason,
    compute_budget,
    estimate_complexity,
    info_gain_rate,
    prioritize,
    repo_entropy,
    select_context,
    should_terminate,
)
from .config import AppConfig, load_config
from .engine import (
    Workspace,
    answer,
    build_index,
    load_workspace,
    locate,
    locate_view,
    make_backend,
    ranked_files,
    retrieval_only,
    scout,
    workspace_stats,
)
from .errors import (
    CodeScoutError,
    ConfigError,
    IndexCorrupt,
    IndexMissing,
    InvalidPattern,
    MalformedAfterRetry,
    PathNotFound,
    PathOutsideSnapshot,
    ProviderUnavailable,
    ReasonerUnavailable,
    RootNotFound,
    ScriptExhausted,
    SchemaError,
    StaleIndex,
    UnknownUnit,
)
from .hybrid_index import (
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    RepoIndices,
    build_indices,
    hybrid_query,
    tokenize_code,
)
from .navigator import AugmentedQuery, Candidate, ScoutOutcome, run_scout, trace_to_json
from .reasoner import (
    OfflineReasoner,
    ReasonerRequest,
    ScriptedReasoner,
    TokenLedger,
    ledger_report,
)
from .relation_graph import (
    RelationGraph,
    build_relation_graph,
    export_edges,
    neighbors,
)
from .repo_model import (
    CodeUnit,
    RepoSnapshot,
    UnitCatalog,
    UnitKind,
    build_catalog,
    compute_repo_stats,
    read_unit_body,
    render_skeleton,
    scan_repository,
)
from .scout_tools import codebase_search, directory_traverse, render_candidate_profile

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "AugmentedQuery",
    "BudgetConfig",
    "Candidate",
    "CodeScoutError",
    "CodeUnit",
    "ConfigError",
    "ContextPack",
    "HttpEmbeddingProvider",
    "IndexCorrupt",
    "IndexMissing",
    "InvalidPattern",
    "IterationRecord",
    "MalformedAfterRetry",
    "MockEmbeddingProvider",
    "NavState",
    "OfflineReasoner",
    "PackedUnit",
    "PathNotFound",
    "PathOutsideSnapshot",
    "ProviderUnavailable",
    "ReasonerRequest",
    "ReasonerUnavailable",
    "RelationGraph",
    "RepoIndices",
    "RepoSnapshot",
    "RootNotFound",
    "SchemaError",
    "ScoutOutcome",
    "ScriptExhausted",
    "ScriptedReasoner",
    "StaleIndex",
    "TerminalReason",
    "TokenLedger",
    "UnitCatalog",
    "UnitKind",
    "UnknownUnit",
    "Workspace",
    "answer",
    "build_catalog",
    "build_index",
    "build_indices",
    "build_relation_graph",
    "codebase_search",
    "compute_budget",
    "compute_repo_stats",
    "directory_traverse",
    "estimate_complexity",
    "export_edges",
    "hybrid_query",
    "info_gain_rate",
    "ledger_report",
    "load_config",
    "load_workspace",
    "locate",
    "locate_view",
    "make_backend",
    "neighbors",
    "prioritize",
    "ranked_files",
    "read_unit_body",
    "render_candidate_profile",
    "render_skeleton",
    "repo_entropy",
    "retrieval_only",
    "run_scout",
    "scan_repository",
    "scout",
    "select_context",
    "should_terminate",
    "tokenize_code",
    "trace_to_json",
    "workspace_stats",
]
