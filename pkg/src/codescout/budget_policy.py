"""Cost-aware scouting policy.

Pure functions over a small navigation state: how hard the query looks,
how tangled the repository is, how many lines the session has committed
to, and how confident the reasoner currently is.  The policy decides
when a session keeps scouting, takes the two-round fast path, or stops
(and for which of four reasons), plus which units make the final cut
under the line budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import ConfigError, ReasonerUnavailable, MalformedAfterRetry
from .reasoner import ROLE_COMPLEXITY, ReasonerBackend, ReasonerRequest, TokenLedger, request
from .repo_model import RepoSnapshot, RepoStats, UnitCatalog, read_unit_body

DEFAULT_COMPLEXITY = 50.0


class TerminalReason(str, Enum):
    SUFFICIENCY = "Sufficiency"
    INEFFICIENCY = "Inefficiency"
    EXHAUSTION = "Exhaustion"
    HORIZON = "Horizon"


@dataclass(frozen=True)
class PolicyDecision:
    action: str  # "continue" | "fast_path" | "terminate"
    reason: TerminalReason | None = None

    @property
    def terminated(self) -> bool:
        return self.action == "terminate"


CONTINUE = PolicyDecision(action="continue")
FAST_PATH = PolicyDecision(action="fast_path")


@dataclass(frozen=True)
class BudgetConfig:
    """Every knob of the policy; nothing here is hard-coded elsewhere."""

    c: float = 20.0  # budget lines per unit of complexity-entropy product
    b_min: int = 200  # floor so trivial queries still get working room
    tau: float = 90.0  # confidence threshold for sufficiency
    epsilon: float = 0.01  # information-gain-rate floor
    patience: int = 2  # consecutive low-gain rounds tolerated
    t_max: int = 6  # hard round cap
    w1: float = 0.6  # relevance weight
    w2: float = 0.3  # tool-evidence weight
    w3: float = 0.1  # density weight
    k: int = 20  # retrieval depth per stream

    def validate(self) -> None:
        if abs(self.w1 + self.w2 + self.w3 - 1.0) > 1e-9:
            raise ConfigError("priority weights must sum to 1")
        if self.tau <= 0 or self.epsilon <= 0:
            raise ConfigError("tau and epsilon must be positive")
        if self.patience < 1 or self.t_max < 2:
            raise ConfigError("patience must be >= 1 and t_max >= 2")
        if self.c <= 0 or self.b_min <= 0 or self.k <= 0:
            raise ConfigError("c, b_min and k must be positive")


@dataclass(frozen=True)
class NavState:
    d_q: float  # query complexity, [0, 100]
    h_r: float  # repository entropy factor, [0.5, 2.0]
    l_t: int  # committed context lines so far (non-decreasing)
    t: int  # round counter
    kappa_t: float  # current confidence, [0, 100]
    b: int  # line budget


@dataclass(frozen=True)
class IterationRecord:
    t: int
    kappa: float
    l: int
    igr: float | None  # None when no lines were added that round


# ---------------------------------------------------------------------------
# assessments
# ---------------------------------------------------------------------------


def clamp(value: float, low: float, high: float) -> float:
    return max(low, min(high, value))


@dataclass(frozen=True)
class ComplexityEstimate:
    score: float  # D_q in [0, 100]
    confidence: float  # kappa_0 in [0, 100]
    fallback: bool = False


def estimate_complexity(
    query: str,
    backend: ReasonerBackend,
    stats: RepoStats | None = None,
    ledger: TokenLedger | None = None,
) -> ComplexityEstimate:
    """Ask the reasoner how hard the query is; default 50 on any failure."""
    payload: dict[str, object] = {"query": query}
    if stats is not None:
        payload["repo"] = {
            "file_count": stats.file_count,
            "total_lines": stats.total_lines,
            "mean_dir_depth": round(stats.mean_dir_depth, 4),
        }
    try:
        response = request(backend, ReasonerRequest(role=ROLE_COMPLEXITY, payload=payload), ledger)
    except (ReasonerUnavailable, MalformedAfterRetry):
        return ComplexityEstimate(score=DEFAULT_COMPLEXITY, confidence=0.0, fallback=True)
    return ComplexityEstimate(
        score=clamp(response["complexity"], 0.0, 100.0),
        confidence=clamp(response["confidence"], 0.0, 100.0),
    )


def repo_entropy(stats: RepoStats) -> float:
    """Structural difficulty factor in [0.5, 2.0].

    Grows with the log of file count and with mean directory depth; a
    single-file repository bottoms out at 0.5.
    """
    raw = 0.5 + 0.3 * math.log10(max(stats.file_count, 1)) + 0.1 * stats.mean_dir_depth
    return clamp(raw, 0.5, 2.0)


def compute_budget(d_q: float, h_r: float, cfg: BudgetConfig) -> int:
    return max(cfg.b_min, round(cfg.c * d_q * h_r))


# ---------------------------------------------------------------------------
# iteration accounting
# ---------------------------------------------------------------------------


def info_gain_rate(prev_kappa: float, prev_l: int, kappa: float, l: int) -> float | None:
    """Confidence gained per context line added; None when L stalled."""
    if l <= prev_l:
        return None
    return (kappa - prev_kappa) / (l - prev_l)


def should_terminate(
    state: NavState,
    history: Sequence[IterationRecord],
    cfg: BudgetConfig,
    next_round_cost_estimate: int,
) -> PolicyDecision:
    """Decide the session's fate after the round described by ``state``.

    Precedence: Horizon, then Sufficiency, then Exhaustion, then
    Inefficiency.  At t=0 this is the pre-assessment check where high
    confidence selects the fast path instead of full scouting.
    """
    if state.t == 0:
        if state.kappa_t >= cfg.tau:
            return FAST_PATH
        return CONTINUE
    if state.t >= cfg.t_max:
        return PolicyDecision(action="terminate", reason=TerminalReason.HORIZON)
    if state.kappa_t >= cfg.tau:
        return PolicyDecision(action="terminate", reason=TerminalReason.SUFFICIENCY)
    if next_round_cost_estimate > state.b - state.l_t:
        return PolicyDecision(action="terminate", reason=TerminalReason.EXHAUSTION)
    if len(history) >= cfg.patience:
        tail = history[-cfg.patience:]
        # a stalled round (no new lines) counts as zero gain
        if all(r.igr is None or r.igr < cfg.epsilon for r in tail):
            return PolicyDecision(action="terminate", reason=TerminalReason.INEFFICIENCY)
    return CONTINUE


# ---------------------------------------------------------------------------
# prioritization and selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrioritizedUnit:
    unit_id: str
    rel: float  # fused retrieval relevance, [0, 1]
    tool_flag: int  # 1 when tool evidence exists
    density: float
    priority: float
    line_count: int


def density_of(line_count: int) -> float:
    return 1.0 / (1.0 + math.log(1.0 + line_count))


def priority_value(rel: float, tool_flag: int, density: float, w1: float, w2: float, w3: float) -> float:
    return w1 * rel + w2 * tool_flag + w3 * density


def prioritize(
    unit_id: str,
    rel: float,
    tool_flag: int,
    line_count: int,
    cfg: BudgetConfig,
) -> PrioritizedUnit:
    density = density_of(line_count)
    return PrioritizedUnit(
        unit_id=unit_id,
        rel=rel,
        tool_flag=tool_flag,
        density=density,
        priority=priority_value(rel, tool_flag, density, cfg.w1, cfg.w2, cfg.w3),
        line_count=line_count,
    )


@dataclass(frozen=True)
class PackedUnit:
    unit_id: str
    path: str
    span: tuple[int, int]
    line_count: int
    truncated: bool
    priority: float
    body: str


@dataclass(frozen=True)
class ContextPack:
    units: tuple[PackedUnit, ...]
    total_lines: int
    omitted: tuple[str, ...]
    budget: int


def select_context(
    candidates: Sequence[PrioritizedUnit],
    budget: int,
    catalog: UnitCatalog,
    snapshot: RepoSnapshot,
) -> ContextPack:
    """Greedy pack: descending priority, skip whatever would overflow.

    Ties break on unit id.  A unit whose ancestor is already packed is
    skipped since its body is contained.  When even the best unit exceeds
    the budget on its own, that unit ships truncated to the budget rather
    than returning nothing.  Bodies are read here and nowhere earlier.
    """
    ordered = sorted(candidates, key=lambda u: (-u.priority, u.unit_id))
    packed: list[PackedUnit] = []
    selected_ids: set[str] = set()
    omitted: list[str] = []
    total = 0
    for cand in ordered:
        unit = catalog.get(cand.unit_id)
        if unit is None:
            omitted.append(cand.unit_id)
            continue
        if any(anc in selected_ids for anc in catalog.ancestors(cand.unit_id)):
            omitted.append(cand.unit_id)
            continue
        if total + cand.line_count > budget:
            omitted.append(cand.unit_id)
            continue
        body = read_unit_body(snapshot, unit)
        packed.append(
            PackedUnit(
                unit_id=unit.unit_id,
                path=unit.file_path,
                span=unit.span,
                line_count=cand.line_count,
                truncated=False,
                priority=cand.priority,
                body=body,
            )
        )
        selected_ids.add(unit.unit_id)
        total += cand.line_count
    if not packed and ordered:
        # best unit alone exceeds the budget: ship its head, marked as cut
        top = ordered[0]
        unit = catalog.get(top.unit_id)
        if unit is not None:
            body_lines = read_unit_body(snapshot, unit).splitlines()[:budget]
            packed.append(
                PackedUnit(
                    unit_id=unit.unit_id,
                    path=unit.file_path,
                    span=(unit.span[0], unit.span[0] + max(len(body_lines) - 1, 0)),
                    line_count=len(body_lines),
                    truncated=True,
                    priority=top.priority,
                    body="\n".join(body_lines),
                )
            )
            total = len(body_lines)
            omitted = [u.unit_id for u in ordered[1:]]
    return ContextPack(
        units=tuple(packed),
        total_lines=total,
        omitted=tuple(omitted),
        budget=budget,
    )
