"""Application facade shared by the command line and the HTTP service.

Both front ends call the same functions here, so a locate run through
the CLI and one through the service produce the same payload for the
same inputs.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from . import persist
from .budget_policy import ContextPack, select_context
from .config import AppConfig
from .hybrid_index import (
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    RepoIndices,
    build_indices,
    hybrid_query,
)
from .navigator import ScoutOutcome, run_scout, trace_to_json
from .reasoner import (
    ROLE_ANSWER,
    HttpReasoner,
    OfflineReasoner,
    ReasonerBackend,
    ReasonerRequest,
    ScriptedReasoner,
    TokenLedger,
    ledger_report,
    request,
)
from .relation_graph import RelationGraph, build_relation_graph
from .repo_model import (
    RepoSnapshot,
    RepoStats,
    UnitCatalog,
    build_catalog,
    compute_repo_stats,
    read_file_text,
    scan_repository,
)

logger = logging.getLogger(__name__)


@dataclass
class Workspace:
    root: str
    snapshot: RepoSnapshot
    catalog: UnitCatalog
    graph: RelationGraph
    indices: RepoIndices
    stats: RepoStats
    manifest: dict
    fresh: bool


def make_embed_provider(config: AppConfig):
    emb = config.embedding
    if emb.provider == "none":
        return None
    if emb.provider == "http":
        api_key = os.environ.get(emb.api_key_env) if emb.api_key_env else None
        return HttpEmbeddingProvider(emb.url, emb.dim, api_key=api_key, timeout=emb.timeout)
    return MockEmbeddingProvider(dim=emb.dim)


def make_backend(config: AppConfig, scripted_path: str | None = None) -> ReasonerBackend:
    """Reasoner backend; an explicit script path overrides the config."""
    if scripted_path is not None:
        return ScriptedReasoner.from_file(scripted_path)
    rsn = config.reasoner
    if rsn.backend == "scripted":
        return ScriptedReasoner.from_file(rsn.script_path)
    if rsn.backend == "http":
        api_key = os.environ.get(rsn.api_key_env) if rsn.api_key_env else None
        return HttpReasoner(url=rsn.url, model_id=rsn.model, api_key=api_key)
    return OfflineReasoner()


def index_dir_for(root: str | Path, index_dir: str | Path | None) -> Path:
    if index_dir is not None:
        return Path(index_dir)
    return Path(root) / persist.INDEX_DIR_NAME


def build_index(root: str | Path, config: AppConfig, index_dir: str | Path | None = None) -> dict:
    """Scan, parse, relate, and index a tree, then persist everything."""
    snapshot = scan_repository(root, config.include_globs, config.exclude_globs)
    catalog, facts = build_catalog(snapshot)
    graph = build_relation_graph(snapshot, catalog, facts)
    texts = {f.path: read_file_text(snapshot, f.path) for f in snapshot.files}
    provider = make_embed_provider(config)
    indices = build_indices(catalog.units, texts, provider)
    if indices.degraded:
        logger.warning("embedding provider unavailable; index is sparse-only")
    return persist.write_index(index_dir_for(root, index_dir), snapshot, catalog, graph, indices)


def load_workspace(
    root: str | Path,
    config: AppConfig,
    index_dir: str | Path | None = None,
    allow_stale: bool = False,
) -> Workspace:
    """Load a persisted index, verifying digests and freshness.

    Freshness is judged by re-scanning the tree (cheap, no parsing) and
    comparing snapshot hashes; a stale index raises unless allowed.
    """
    directory = index_dir_for(root, index_dir)
    snapshot_now = scan_repository(root, config.include_globs, config.exclude_globs)
    loaded_snapshot, catalog, graph, indices, manifest = persist.load_index(directory)
    fresh = persist.check_freshness(manifest, snapshot_now.snapshot_hash, allow_stale)
    # Bodies are read from the live tree, so keep the live root path even
    # when the index was built elsewhere and copied here.
    snapshot = persist_snapshot_with_root(loaded_snapshot, str(Path(root).resolve()))
    stats = compute_repo_stats(snapshot, catalog)
    return Workspace(
        root=str(Path(root).resolve()),
        snapshot=snapshot,
        catalog=catalog,
        graph=graph,
        indices=indices,
        stats=stats,
        manifest=manifest,
        fresh=fresh,
    )


def persist_snapshot_with_root(snapshot: RepoSnapshot, root: str) -> RepoSnapshot:
    if snapshot.root_path == root:
        return snapshot
    return RepoSnapshot(
        root_path=root,
        files=snapshot.files,
        directories=snapshot.directories,
        corpus_grammar_id=snapshot.corpus_grammar_id,
        snapshot_hash=snapshot.snapshot_hash,
        include_globs=snapshot.include_globs,
        exclude_globs=snapshot.exclude_globs,
        diagnostics=snapshot.diagnostics,
    )


def _effective_provider(workspace: Workspace, config: AppConfig):
    """Drop the dense stream when the stored vectors came from elsewhere."""
    provider = make_embed_provider(config)
    dense = workspace.indices.dense
    if provider is None or dense is None:
        return None
    if dense.provider_id != provider.provider_id:
        logger.warning(
            "dense index built with %s but configured provider is %s; using sparse only",
            dense.provider_id,
            provider.provider_id,
        )
        return None
    return provider


def scout(
    workspace: Workspace,
    query: str,
    backend: ReasonerBackend,
    config: AppConfig,
    ledger: TokenLedger | None = None,
) -> ScoutOutcome:
    return run_scout(
        query,
        workspace.snapshot,
        workspace.catalog,
        workspace.indices,
        workspace.graph,
        workspace.stats,
        backend,
        config.budget,
        ledger=ledger,
        embed_provider=_effective_provider(workspace, config),
        candidate_cap=config.candidate_cap,
        tool_caps={"listing_entries": config.listing_cap, "search_total": config.search_cap},
        config_echo=config.echo(),
    )


def assemble_pack(workspace: Workspace, outcome: ScoutOutcome, config: AppConfig) -> ContextPack:
    prioritized = []
    from .budget_policy import prioritize

    for cand in outcome.kept_candidates():
        unit = workspace.catalog.get(cand.unit_id)
        if unit is None:
            continue
        prioritized.append(
            prioritize(
                cand.unit_id,
                rel=float(cand.provenance.get("retrieval", 0.0)),
                tool_flag=1 if cand.provenance.get("tool") else 0,
                line_count=unit.line_count,
                cfg=config.budget,
            )
        )
    return select_context(prioritized, outcome.budget, workspace.catalog, workspace.snapshot)


def ranked_files(pack: ContextPack, top_k: int | None = None) -> list[dict[str, Any]]:
    """Files deduplicated from the packed units, best priority first.

    The pack is already in selection order, so a file's score is the
    priority of its best unit and the ordering follows first appearance.
    """
    by_path: dict[str, dict[str, Any]] = {}
    ordered: list[dict[str, Any]] = []
    for unit in pack.units:
        entry = by_path.get(unit.path)
        if entry is None:
            entry = {"path": unit.path, "score": round(unit.priority, 6), "units": []}
            by_path[unit.path] = entry
            ordered.append(entry)
        entry["units"].append(unit.unit_id)
    if top_k is not None:
        ordered = ordered[: max(top_k, 0)]
    return ordered


def locate(
    workspace: Workspace,
    query: str,
    backend: ReasonerBackend,
    config: AppConfig,
    ledger: TokenLedger | None = None,
    top_k: int | None = None,
) -> dict[str, Any]:
    """Scout plus pack assembly; the payload both front ends return."""
    ledger = ledger if ledger is not None else TokenLedger()
    outcome = scout(workspace, query, backend, config, ledger)
    pack = assemble_pack(workspace, outcome, config)
    candidates = []
    for cand in sorted(
        outcome.kept_candidates(), key=lambda c: c.unit_id
    ):
        unit = workspace.catalog.get(cand.unit_id)
        if unit is None:
            continue
        candidates.append(
            {
                "unit": cand.unit_id,
                "kind": unit.kind.value,
                "path": unit.file_path,
                "span": [unit.span[0], unit.span[1]],
                "lines": unit.line_count,
                "provenance": {
                    key: (round(value, 6) if isinstance(value, float) else value)
                    for key, value in sorted(cand.provenance.items())
                },
            }
        )
    return {
        "query": query,
        "snapshot_hash": workspace.snapshot.snapshot_hash,
        "budget": outcome.budget,
        "terminal_reason": outcome.terminal_reason,
        "confidence": outcome.final_state.kappa_t,
        "rounds": outcome.final_state.t,
        "files": ranked_files(pack, top_k),
        "candidates": candidates,
        "pack": {
            "total_lines": pack.total_lines,
            "budget": pack.budget,
            "units": [
                {
                    "unit": p.unit_id,
                    "path": p.path,
                    "span": [p.span[0], p.span[1]],
                    "lines": p.line_count,
                    "truncated": p.truncated,
                    "body": p.body,
                }
                for p in pack.units
            ],
            "omitted": list(pack.omitted),
        },
        "trace": outcome.trace,
    }


def locate_view(payload: dict[str, Any]) -> dict[str, Any]:
    """The locate payload without bodies or diagnostics.

    This is what ``locate --json`` prints and what POST /locate returns,
    so the two front ends stay comparable field for field.
    """
    return {key: value for key, value in payload.items() if key not in ("pack", "trace")}


def answer(
    workspace: Workspace,
    query: str,
    backend: ReasonerBackend,
    config: AppConfig,
) -> dict[str, Any]:
    """Locate, then hand the packed context to the answering role."""
    ledger = TokenLedger()
    payload = locate(workspace, query, backend, config, ledger)
    context = [
        {"unit": u["unit"], "path": u["path"], "span": u["span"], "body": u["body"]}
        for u in payload["pack"]["units"]
    ]
    response = request(
        backend,
        ReasonerRequest(role=ROLE_ANSWER, payload={"query": query, "context": context}),
        ledger,
    )
    payload["answer"] = response["text"]
    payload["ledger"] = ledger_report(ledger)
    return payload


def retrieval_only(
    workspace: Workspace, query: str, config: AppConfig, top_k: int | None = None
) -> list[dict[str, Any]]:
    """Plain hybrid retrieval without any reasoner involvement."""
    from .hybrid_index import relevance_weights, tokenize_code

    k = top_k if top_k is not None else config.top_k
    hits = hybrid_query(
        workspace.indices,
        tokenize_code(query),
        query,
        _effective_provider(workspace, config),
        k,
    )
    rel = relevance_weights(hits)
    out = []
    for hit in hits:
        unit = workspace.catalog.get(hit.unit_id)
        out.append(
            {
                "unit": hit.unit_id,
                "rank": hit.rank,
                "rel": round(rel[hit.unit_id], 6),
                "kind": unit.kind.value if unit else None,
                "path": unit.file_path if unit else None,
            }
        )
    return out


def workspace_stats(workspace: Workspace) -> dict[str, Any]:
    graph = workspace.graph
    return {
        "snapshot_hash": workspace.snapshot.snapshot_hash,
        "root": workspace.root,
        "fresh": workspace.fresh,
        "file_count": workspace.stats.file_count,
        "total_lines": workspace.stats.total_lines,
        "mean_dir_depth": round(workspace.stats.mean_dir_depth, 4),
        "unit_counts": dict(sorted(workspace.stats.unit_counts.items())),
        "edges": {layer: len(edges) for layer, edges in sorted(graph.edges.items())},
        "unresolved": len(graph.unresolved),
        "degraded": workspace.indices.degraded,
        "format_version": persist.FORMAT_VERSION,
    }
