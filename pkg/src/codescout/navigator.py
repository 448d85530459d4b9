"""Adaptive scouting sessions over an indexed repository.

A session is a short loop: augment the query, pull candidates from the
two retrieval streams and any requested tools, extend one hop through
the relation graph, show the reasoner metadata profiles, and let the
budget policy decide whether another round is worth it.  Every step is
recorded in a versioned trace whose serialization is byte-stable, so a
replay with the same scripted reasoner reproduces the same bytes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any

from . import scout_tools
from .budget_policy import (
    BudgetConfig,
    IterationRecord,
    NavState,
    PolicyDecision,
    TerminalReason,
    compute_budget,
    estimate_complexity,
    info_gain_rate,
    prioritize,
    repo_entropy,
    should_terminate,
)
from .errors import (
    CodeScoutError,
    MalformedAfterRetry,
    ReasonerUnavailable,
)
from .hybrid_index import RepoIndices, hybrid_query, relevance_weights, tokenize_code
from .reasoner import (
    ROLE_AUGMENT,
    ROLE_INIT,
    ROLE_REFINE,
    ReasonerBackend,
    ReasonerRequest,
    TokenLedger,
    request,
)
from .relation_graph import RelationGraph, neighbors, render_path
from .repo_model import RepoSnapshot, RepoStats, UnitCatalog

logger = logging.getLogger(__name__)

TRACE_VERSION = 1

DEFAULT_CANDIDATE_CAP = 50
EXPANSION_FACTOR = 2

DEGENERATE_INTENT = "concept_lookup"


@dataclass(frozen=True)
class AugmentedQuery:
    original: str
    intent: str
    rewritten: str
    keywords: tuple[str, ...]
    pseudocode_hints: str | None
    degenerate: bool = False

    def sparse_terms(self) -> list[str]:
        return tokenize_code(" ".join(self.keywords))

    def dense_text(self) -> str:
        if self.pseudocode_hints:
            return f"{self.rewritten}\n{self.pseudocode_hints}"
        return self.rewritten


def degenerate_augmentation(query: str) -> AugmentedQuery:
    return AugmentedQuery(
        original=query,
        intent=DEGENERATE_INTENT,
        rewritten=query,
        keywords=tuple(tokenize_code(query)),
        pseudocode_hints=None,
        degenerate=True,
    )


def augment_query(
    query: str, backend: ReasonerBackend, ledger: TokenLedger | None = None
) -> tuple[AugmentedQuery, list[str]]:
    """Reasoner-driven rewrite; falls back to the raw query on failure."""
    from .reasoner import QUERY_INTENTS

    notes: list[str] = []
    try:
        response = request(
            backend,
            ReasonerRequest(role=ROLE_AUGMENT, payload={"query": query, "intents": list(QUERY_INTENTS)}),
            ledger,
        )
    except ReasonerUnavailable:
        notes.append("augmentation unavailable; degenerate fallback")
        return degenerate_augmentation(query), notes
    except MalformedAfterRetry:
        notes.append("augmentation malformed twice; degenerate fallback")
        return degenerate_augmentation(query), notes
    return (
        AugmentedQuery(
            original=query,
            intent=response["intent"],
            rewritten=response["rewritten"],
            keywords=tuple(response["keywords"]),
            pseudocode_hints=response.get("pseudocode_hints"),
        ),
        notes,
    )


# ---------------------------------------------------------------------------
# candidates
# ---------------------------------------------------------------------------


@dataclass
class Candidate:
    unit_id: str
    provenance: dict[str, Any] = field(default_factory=dict)
    first_round: int = 1
    kept: bool = True
    relation_notes: tuple[str, ...] = ()


@dataclass
class ScoutOutcome:
    query: str
    candidates: dict[str, Candidate]
    records: list[IterationRecord]
    trace: dict[str, Any]
    terminal_reason: str
    final_state: NavState
    budget: int

    def kept_candidates(self) -> list[Candidate]:
        return [c for c in self.candidates.values() if c.kept]


def trace_to_json(trace: dict[str, Any]) -> str:
    """Canonical serialization used for persistence and replay checks."""
    return json.dumps(trace, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# session
# ---------------------------------------------------------------------------


class _Session:
    def __init__(
        self,
        query: str,
        snapshot: RepoSnapshot,
        catalog: UnitCatalog,
        indices: RepoIndices,
        graph: RelationGraph,
        stats: RepoStats,
        backend: ReasonerBackend,
        cfg: BudgetConfig,
        ledger: TokenLedger,
        embed_provider: Any = None,
        candidate_cap: int = DEFAULT_CANDIDATE_CAP,
        tool_caps: dict[str, int] | None = None,
    ):
        self.query = query
        self.snapshot = snapshot
        self.catalog = catalog
        self.indices = indices
        self.graph = graph
        self.stats = stats
        self.backend = backend
        self.cfg = cfg
        self.ledger = ledger
        self.embed_provider = embed_provider
        self.candidate_cap = candidate_cap
        self.tool_caps = tool_caps or {}
        self.candidates: dict[str, Candidate] = {}
        self.ever_kept: set[str] = set()
        self.records: list[IterationRecord] = []
        self.rounds: list[dict[str, Any]] = []
        self.pending_tool_calls: list[dict[str, Any]] = []

    # -- candidate bookkeeping ----------------------------------------------

    def _line_count(self, unit_id: str) -> int:
        unit = self.catalog.get(unit_id)
        return unit.line_count if unit is not None else 0

    def _add_candidate(self, unit_id: str, source: str, value: Any, round_no: int, note: str = "") -> None:
        if self.catalog.get(unit_id) is None:
            return
        cand = self.candidates.get(unit_id)
        if cand is None:
            cand = Candidate(unit_id=unit_id, first_round=round_no)
            self.candidates[unit_id] = cand
        cand.kept = True
        if source == "tool":
            cand.provenance["tool"] = cand.provenance.get("tool", 0) + int(value)
        elif source not in cand.provenance:
            cand.provenance[source] = value
        if note:
            cand.relation_notes = cand.relation_notes + (note,)

    def _priority_of(self, cand: Candidate) -> float:
        p = prioritize(
            cand.unit_id,
            rel=float(cand.provenance.get("retrieval", 0.0)),
            tool_flag=1 if cand.provenance.get("tool") else 0,
            line_count=self._line_count(cand.unit_id),
            cfg=self.cfg,
        )
        return p.priority

    def working_set(self) -> list[Candidate]:
        kept = [c for c in self.candidates.values() if c.kept]
        kept.sort(key=lambda c: (-self._priority_of(c), c.unit_id))
        return kept

    def _enforce_cap(self, notes: list[str]) -> None:
        working = self.working_set()
        if len(working) <= self.candidate_cap:
            return
        overflow = working[self.candidate_cap:]
        for cand in overflow:
            cand.kept = False
        notes.append(f"working set capped at {self.candidate_cap}; pruned {len(overflow)}")

    def kept_lines(self) -> int:
        return sum(self._line_count(c.unit_id) for c in self.candidates.values() if c.kept)

    def commit_round_lines(self) -> int:
        for cand in self.candidates.values():
            if cand.kept:
                self.ever_kept.add(cand.unit_id)
        return sum(self._line_count(uid) for uid in self.ever_kept)

    # -- streams -------------------------------------------------------------

    def run_retrieval(self, sparse_terms: list[str], dense_text: str, round_no: int) -> dict[str, Any]:
        hits = hybrid_query(self.indices, sparse_terms, dense_text, self.embed_provider, self.cfg.k)
        rel = relevance_weights(hits)
        for hit in hits:
            self._add_candidate(hit.unit_id, "retrieval", rel[hit.unit_id], round_no)
        return {
            "sparse_terms": sparse_terms,
            "hits": [
                {"unit": h.unit_id, "rank": h.rank, "rel": round(rel[h.unit_id], 6)}
                for h in hits
            ],
        }

    def run_tool_call(self, call: dict[str, Any], round_no: int) -> dict[str, Any]:
        tool = call.get("tool")
        args = call.get("args", {})
        record: dict[str, Any] = {"tool": tool, "args": args, "ok": False}
        try:
            if tool == "traverse":
                listing = scout_tools.directory_traverse(
                    self.snapshot,
                    self.catalog,
                    path=str(args.get("path", "")),
                    max_depth=int(args.get("max_depth", 1)),
                    entry_cap=self.tool_caps.get("listing_entries", scout_tools.DEFAULT_LISTING_CAP),
                )
                record["ok"] = True
                record["report"] = {
                    "path": listing.path,
                    "truncated": listing.truncated,
                    "entries": [
                        {
                            "name": e.name,
                            "kind": e.kind,
                            "line_count": e.line_count,
                            "units": e.unit_counts,
                        }
                        for e in listing.entries
                    ],
                }
            elif tool == "search":
                scope = args.get("scope")
                report = scout_tools.codebase_search(
                    self.snapshot,
                    self.catalog,
                    pattern=str(args.get("pattern", "")),
                    scope_globs=tuple(scope) if scope else None,
                    max_total=self.tool_caps.get("search_total", scout_tools.DEFAULT_SEARCH_CAP),
                )
                record["ok"] = True
                record["report"] = {
                    "pattern": report.pattern,
                    "total": report.total_matches,
                    "truncated": report.truncated,
                    "files": [
                        {"path": fm.path, "count": fm.match_count, "units": fm.unit_counts}
                        for fm in report.per_file
                    ],
                }
                matched: dict[str, int] = {}
                for fm in report.per_file:
                    for unit_id, count in fm.unit_counts.items():
                        matched[unit_id] = matched.get(unit_id, 0) + count
                for unit_id, count in sorted(matched.items(), key=lambda kv: (-kv[1], kv[0])):
                    self._add_candidate(unit_id, "tool", count, round_no)
            else:
                record["error"] = f"unknown tool {tool!r}"
        except CodeScoutError as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
        return record

    def expand(self, round_no: int) -> list[dict[str, Any]]:
        kept_ids = sorted(c.unit_id for c in self.candidates.values() if c.kept)
        if not kept_ids:
            return []
        cap = EXPANSION_FACTOR * len(self.candidates)
        additions: list[dict[str, Any]] = []
        hits = neighbors(self.graph, kept_ids, hops=1, direction="both")
        hits = [h for h in hits if h.unit_id not in self.candidates]
        hits.sort(key=lambda h: (h.hop, h.unit_id))
        for hit in hits[:cap]:
            path_text = render_path(hit.path)
            last = hit.path[-1]
            if last.forward:
                note = {"call": f"called-by {last.src}", "dependency": f"imported-by {last.src}",
                        "inheritance": f"base-of {last.src}"}[last.layer]
            else:
                note = {"call": f"calls {last.src}", "dependency": f"imports {last.src}",
                        "inheritance": f"inherits {last.src}"}[last.layer]
            self._add_candidate(hit.unit_id, "graph", path_text, round_no, note=note)
            additions.append({"unit": hit.unit_id, "path": path_text})
        return additions

    # -- profiles and refinement ----------------------------------------------

    def render_profiles(self) -> list[str]:
        profiles = []
        for cand in self.working_set():
            unit = self.catalog.get(cand.unit_id)
            if unit is None:
                continue
            prov: dict[str, Any] = {}
            if "retrieval" in cand.provenance:
                prov["retrieval"] = float(cand.provenance["retrieval"])
            if "tool" in cand.provenance:
                prov["tool"] = cand.provenance["tool"]
            if "graph" in cand.provenance:
                prov["graph"] = cand.provenance["graph"]
            profile = scout_tools.render_candidate_profile(unit, prov, cand.relation_notes)
            profiles.append(profile.text)
        return profiles

    def refine(self, state: dict[str, Any], tool_reports: list[dict[str, Any]], notes: list[str]) -> dict[str, Any]:
        payload = {
            "query": self.query,
            "state": state,
            "profiles": self.render_profiles(),
            "tool_reports": tool_reports,
        }
        try:
            decision = request(self.backend, ReasonerRequest(role=ROLE_REFINE, payload=payload), self.ledger)
        except (ReasonerUnavailable, MalformedAfterRetry) as exc:
            notes.append(f"refinement fallback ({type(exc).__name__}): keeping all candidates")
            return {"keep": None, "new_tool_calls": [], "confidence": None, "terminate": False}
        known = set(self.candidates)
        keep = [uid for uid in decision["keep"] if uid in known]
        dropped_unknown = len(decision["keep"]) - len(keep)
        if dropped_unknown:
            notes.append(f"decision referenced {dropped_unknown} unknown unit ids; ignored")
        return {
            "keep": keep,
            "new_tool_calls": decision["new_tool_calls"],
            "confidence": decision["confidence"],
            "terminate": decision["terminate"],
        }


def _state_dict(state: NavState) -> dict[str, Any]:
    return {
        "d_q": state.d_q,
        "h_r": round(state.h_r, 6),
        "l_t": state.l_t,
        "t": state.t,
        "kappa": state.kappa_t,
        "budget": state.b,
    }


def run_scout(
    query: str,
    snapshot: RepoSnapshot,
    catalog: UnitCatalog,
    indices: RepoIndices,
    graph: RelationGraph,
    stats: RepoStats,
    backend: ReasonerBackend,
    cfg: BudgetConfig,
    ledger: TokenLedger | None = None,
    embed_provider: Any = None,
    candidate_cap: int = DEFAULT_CANDIDATE_CAP,
    tool_caps: dict[str, int] | None = None,
    config_echo: dict[str, Any] | None = None,
) -> ScoutOutcome:
    """Run one scouting session and return kept candidates plus the trace."""
    cfg.validate()
    ledger = ledger if ledger is not None else TokenLedger()
    session = _Session(
        query,
        snapshot,
        catalog,
        indices,
        graph,
        stats,
        backend,
        cfg,
        ledger,
        embed_provider,
        candidate_cap,
        tool_caps,
    )

    estimate = estimate_complexity(query, backend, stats, ledger)
    d_q = estimate.score
    kappa = estimate.confidence
    h_r = repo_entropy(stats)
    budget = compute_budget(d_q, h_r, cfg)

    trace: dict[str, Any] = {
        "version": TRACE_VERSION,
        "query": query,
        "snapshot_hash": snapshot.snapshot_hash,
        "config": config_echo or {},
        "complexity": d_q,
        "entropy": round(h_r, 6),
        "budget": budget,
        "initial_confidence": kappa,
        "fast_path": False,
        "rounds": [],
        "terminal_reason": None,
        "notes": [],
    }
    if estimate.fallback:
        trace["notes"].append("complexity assessment fell back to default")

    pre = should_terminate(
        NavState(d_q=d_q, h_r=h_r, l_t=0, t=0, kappa_t=kappa, b=budget), [], cfg, 0
    )
    fast = pre.action == "fast_path"
    trace["fast_path"] = fast

    terminal: TerminalReason | None = None
    prev_kappa, prev_l = kappa, 0
    l_t = 0
    t = 0

    if fast:
        # Round 1: plain retrieval with the raw query, then graph extension.
        t = 1
        round_rec: dict[str, Any] = {"round": t, "phase": "retrieval"}
        round_rec["retrieval"] = session.run_retrieval(tokenize_code(query), query, t)
        round_rec["expansion"] = session.expand(t)
        notes: list[str] = []
        session._enforce_cap(notes)
        l_t = session.commit_round_lines()
        igr = info_gain_rate(prev_kappa, prev_l, kappa, l_t)
        session.records.append(IterationRecord(t=t, kappa=kappa, l=l_t, igr=igr))
        round_rec["state"] = _state_dict(NavState(d_q, h_r, l_t, t, kappa, budget))
        round_rec["notes"] = notes
        session.rounds.append(round_rec)
        prev_kappa, prev_l = kappa, l_t

        if not session.candidates:
            terminal = TerminalReason.EXHAUSTION
            trace["notes"].append("degenerate: no candidates found")
        else:
            # Round 2: single refinement pass, then commit.
            t = 2
            notes = []
            round_rec = {"round": t, "phase": "refinement"}
            state_view = _state_dict(NavState(d_q, h_r, l_t, t, kappa, budget))
            decision = session.refine(state_view, [], notes)
            if decision["keep"] is not None:
                keep = set(decision["keep"])
                for cand in session.candidates.values():
                    cand.kept = cand.unit_id in keep
            if decision["confidence"] is not None:
                kappa = max(0.0, min(100.0, decision["confidence"]))
            l_t = session.commit_round_lines()
            igr = info_gain_rate(prev_kappa, prev_l, kappa, l_t)
            session.records.append(IterationRecord(t=t, kappa=kappa, l=l_t, igr=igr))
            round_rec["decision"] = {
                "keep": sorted(decision["keep"]) if decision["keep"] is not None else None,
                "confidence": decision["confidence"],
                "terminate": decision["terminate"],
                "new_tool_calls": decision["new_tool_calls"],
            }
            round_rec["state"] = _state_dict(NavState(d_q, h_r, l_t, t, kappa, budget))
            round_rec["notes"] = notes
            session.rounds.append(round_rec)
            verdict = should_terminate(
                NavState(d_q, h_r, l_t, t, kappa, budget), session.records, cfg, session.kept_lines()
            )
            if verdict.terminated and verdict.reason is not None:
                terminal = verdict.reason
            else:
                terminal = TerminalReason.SUFFICIENCY
                trace["notes"].append("fast path committed after verification round")
    else:
        aq, aug_notes = augment_query(query, backend, ledger)
        trace["augmentation"] = {
            "intent": aq.intent,
            "rewritten": aq.rewritten,
            "keywords": list(aq.keywords),
            "pseudocode_hints": aq.pseudocode_hints,
            "degenerate": aq.degenerate,
        }
        trace["notes"].extend(aug_notes)

        while t < cfg.t_max and terminal is None:
            t += 1
            notes = []
            round_rec = {"round": t}
            tool_reports: list[dict[str, Any]] = []

            if t == 1:
                try:
                    init = request(
                        backend,
                        ReasonerRequest(
                            role=ROLE_INIT,
                            payload={
                                "query": aq.rewritten,
                                "intent": aq.intent,
                                "keywords": list(aq.keywords),
                            },
                        ),
                        ledger,
                    )
                    calls = init["tool_calls"]
                except (ReasonerUnavailable, MalformedAfterRetry) as exc:
                    notes.append(f"init decision fallback ({type(exc).__name__}): no tool calls")
                    calls = []
                round_rec["retrieval"] = session.run_retrieval(aq.sparse_terms(), aq.dense_text(), t)
            else:
                calls = session.pending_tool_calls
                session.pending_tool_calls = []

            for call in calls:
                report = session.run_tool_call(call, t)
                tool_reports.append(report)
            if tool_reports:
                round_rec["tool_calls"] = tool_reports

            round_rec["expansion"] = session.expand(t)
            session._enforce_cap(notes)

            if not session.candidates:
                l_t = session.commit_round_lines()
                session.records.append(IterationRecord(t=t, kappa=kappa, l=l_t, igr=None))
                round_rec["state"] = _state_dict(NavState(d_q, h_r, l_t, t, kappa, budget))
                round_rec["notes"] = notes
                session.rounds.append(round_rec)
                terminal = TerminalReason.EXHAUSTION
                trace["notes"].append("degenerate: no candidates found")
                break

            state_view = _state_dict(NavState(d_q, h_r, l_t, t, kappa, budget))
            decision = session.refine(state_view, tool_reports, notes)
            if decision["keep"] is not None:
                keep = set(decision["keep"])
                for cand in session.candidates.values():
                    cand.kept = cand.unit_id in keep
            if decision["confidence"] is not None:
                kappa = max(0.0, min(100.0, decision["confidence"]))
            session.pending_tool_calls = decision["new_tool_calls"]

            l_t = session.commit_round_lines()
            igr = info_gain_rate(prev_kappa, prev_l, kappa, l_t)
            session.records.append(IterationRecord(t=t, kappa=kappa, l=l_t, igr=igr))
            prev_kappa, prev_l = kappa, l_t

            round_rec["decision"] = {
                "keep": sorted(decision["keep"]) if decision["keep"] is not None else None,
                "confidence": decision["confidence"],
                "terminate": decision["terminate"],
                "new_tool_calls": decision["new_tool_calls"],
            }
            round_rec["state"] = _state_dict(NavState(d_q, h_r, l_t, t, kappa, budget))
            round_rec["notes"] = notes
            session.rounds.append(round_rec)

            verdict = should_terminate(
                NavState(d_q, h_r, l_t, t, kappa, budget), session.records, cfg, session.kept_lines()
            )
            if verdict.terminated and verdict.reason is not None:
                terminal = verdict.reason
            elif decision["terminate"]:
                trace["notes"].append(f"round {t}: terminate request below thresholds; continuing")

    if terminal is None:
        terminal = TerminalReason.HORIZON

    trace["rounds"] = session.rounds
    trace["terminal_reason"] = terminal.value
    final_state = NavState(d_q=d_q, h_r=h_r, l_t=l_t, t=t, kappa_t=kappa, b=budget)
    trace["final_state"] = _state_dict(final_state)

    return ScoutOutcome(
        query=query,
        candidates=session.candidates,
        records=session.records,
        trace=trace,
        terminal_reason=terminal.value,
        final_state=final_state,
        budget=budget,
    )
