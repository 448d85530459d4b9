"""Policy math, termination decisions, and greedy selection checks."""

from __future__ import annotations

import math

import pytest

from codescout.budget_policy import (
    BudgetConfig,
    IterationRecord,
    NavState,
    TerminalReason,
    compute_budget,
    density_of,
    estimate_complexity,
    info_gain_rate,
    prioritize,
    priority_value,
    repo_entropy,
    select_context,
    should_terminate,
)
from codescout.errors import ConfigError
from codescout.reasoner import OfflineReasoner, ScriptedReasoner, TokenLedger
from codescout.repo_model import compute_repo_stats, read_unit_body

from policy_trajectories import TRAJECTORIES, run_trajectory

FIXTURE_ENTROPY = 1.0731363764158987  # 0.5 + 0.3*log10(30) + 0.1*1.3


@pytest.fixture(scope="module")
def stats(snapshot, catalog):
    return compute_repo_stats(snapshot, catalog)


# ---------------------------------------------------------------------------
# assessments
# ---------------------------------------------------------------------------


def test_estimate_complexity_scripted(stats):
    backend = ScriptedReasoner({"complexity": [{"complexity": 55, "confidence": 30}]})
    ledger = TokenLedger()
    estimate = estimate_complexity("find the discount rule", backend, stats, ledger)
    assert (estimate.score, estimate.confidence, estimate.fallback) == (55.0, 30.0, False)
    entry = backend.request_log[0]
    assert entry.role == "complexity"
    assert entry.payload_json == (
        '{"query":"find the discount rule",'
        '"repo":{"file_count":30,"mean_dir_depth":1.3,"total_lines":1582}}'
    )
    assert ledger.total_tokens() > 0


def test_estimate_complexity_clamps():
    backend = ScriptedReasoner({"complexity": [{"complexity": 150, "confidence": -5}]})
    estimate = estimate_complexity("q", backend)
    assert (estimate.score, estimate.confidence) == (100.0, 0.0)


def test_estimate_complexity_fallback():
    estimate = estimate_complexity("q", OfflineReasoner())
    assert (estimate.score, estimate.confidence, estimate.fallback) == (50.0, 0.0, True)


def test_repo_entropy(stats):
    assert repo_entropy(stats) == pytest.approx(FIXTURE_ENTROPY, abs=1e-12)
    single = type(stats)(file_count=1, mean_dir_depth=0.0, total_lines=10, unit_counts={})
    assert repo_entropy(single) == 0.5
    huge = type(stats)(file_count=10**6, mean_dir_depth=20.0, total_lines=1, unit_counts={})
    assert repo_entropy(huge) == 2.0


def test_compute_budget(stats):
    cfg = BudgetConfig()
    assert compute_budget(55.0, repo_entropy(stats), cfg) == 1180
    assert compute_budget(1.0, 0.5, cfg) == 200  # floor
    assert compute_budget(0.0, 2.0, cfg) == 200


def test_budget_config_validation():
    BudgetConfig().validate()
    with pytest.raises(ConfigError, match="weights must sum to 1"):
        BudgetConfig(w1=0.5, w2=0.3, w3=0.1).validate()
    with pytest.raises(ConfigError, match="tau and epsilon"):
        BudgetConfig(tau=0.0).validate()
    with pytest.raises(ConfigError, match="patience"):
        BudgetConfig(t_max=1).validate()
    with pytest.raises(ConfigError, match="must be positive"):
        BudgetConfig(b_min=0).validate()


# ---------------------------------------------------------------------------
# iteration accounting
# ---------------------------------------------------------------------------


def test_info_gain_rate():
    assert info_gain_rate(40.0, 100, 50.0, 200) == pytest.approx(0.1)
    assert info_gain_rate(40.0, 100, 50.0, 100) is None
    assert info_gain_rate(40.0, 100, 50.0, 50) is None
    assert info_gain_rate(50.0, 0, 40.0, 100) == pytest.approx(-0.1)


def test_policy_trajectories():
    for case in TRAJECTORIES:
        run_trajectory(
            case, should_terminate, NavState, IterationRecord, BudgetConfig, info_gain_rate
        )


def test_exhaustion_outranks_inefficiency():
    cfg = BudgetConfig()
    history = [
        IterationRecord(t=1, kappa=30.5, l=100, igr=0.005),
        IterationRecord(t=2, kappa=30.9, l=150, igr=0.008),
    ]
    state = NavState(d_q=50.0, h_r=1.0, l_t=150, t=2, kappa_t=30.9, b=200)
    decision = should_terminate(state, history, cfg, next_round_cost_estimate=100)
    assert decision.reason is TerminalReason.EXHAUSTION


def test_gain_exactly_at_epsilon_is_not_low():
    cfg = BudgetConfig()
    history = [
        IterationRecord(t=1, kappa=30.5, l=50, igr=0.01),
        IterationRecord(t=2, kappa=31.0, l=100, igr=0.01),
    ]
    state = NavState(d_q=50.0, h_r=1.0, l_t=100, t=2, kappa_t=31.0, b=10000)
    decision = should_terminate(state, history, cfg, next_round_cost_estimate=50)
    assert decision.action == "continue"


# ---------------------------------------------------------------------------
# prioritization
# ---------------------------------------------------------------------------


def test_density_of():
    assert density_of(0) == 1.0
    assert density_of(10) == pytest.approx(1.0 / (1.0 + math.log(11.0)))
    assert density_of(100) < density_of(10)


def test_priority_value_and_prioritize():
    assert priority_value(0.5, 1, 0.2, 0.6, 0.3, 0.1) == pytest.approx(0.62)
    cfg = BudgetConfig()
    unit = prioritize("u", rel=1.0, tool_flag=0, line_count=0, cfg=cfg)
    assert unit.density == 1.0
    assert unit.priority == pytest.approx(0.6 * 1.0 + 0.1 * 1.0)


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------


def pick(unit_id, rel, line_count, tool_flag=0):
    return prioritize(unit_id, rel=rel, tool_flag=tool_flag, line_count=line_count, cfg=BudgetConfig())


def test_select_greedy_order_and_overflow_skip(snapshot, catalog):
    candidates = [
        pick("shop/models.py::PriceRule", rel=0.3, line_count=14),
        pick("shop/models.py::Product.unit_price", rel=1.0, line_count=3),
        pick("shop/models.py::PerishableProduct", rel=0.7, line_count=12),
        pick("shop/models.py::Product.describe", rel=0.1, line_count=2),
    ]
    pack = select_context(candidates, budget=17, catalog=catalog, snapshot=snapshot)
    assert [u.unit_id for u in pack.units] == [
        "shop/models.py::Product.unit_price",
        "shop/models.py::PerishableProduct",
        "shop/models.py::Product.describe",
    ]
    assert pack.total_lines == 17  # exact fit is allowed
    assert pack.omitted == ("shop/models.py::PriceRule",)
    assert pack.budget == 17
    assert all(not u.truncated for u in pack.units)


def test_select_tie_breaks_by_unit_id(snapshot, catalog):
    candidates = [
        pick("shop/models.py::Product.unit_price", rel=0.5, line_count=3),
        pick("shop/models.py::Product.describe", rel=0.5, line_count=3),
    ]
    # identical rel/lines mean identical priority; only the id can order them
    pack = select_context(candidates, budget=3, catalog=catalog, snapshot=snapshot)
    assert [u.unit_id for u in pack.units] == ["shop/models.py::Product.describe"]
    assert pack.omitted == ("shop/models.py::Product.unit_price",)


def test_select_skips_unit_inside_packed_ancestor(snapshot, catalog):
    candidates = [
        pick("shop/models.py::Product", rel=1.0, line_count=15),
        pick("shop/models.py::Product.unit_price", rel=0.9, line_count=3),
        pick("shop/models.py::PriceRule.applies_to", rel=0.2, line_count=2),
    ]
    pack = select_context(candidates, budget=100, catalog=catalog, snapshot=snapshot)
    assert [u.unit_id for u in pack.units] == [
        "shop/models.py::Product",
        "shop/models.py::PriceRule.applies_to",
    ]
    assert pack.omitted == ("shop/models.py::Product.unit_price",)


def test_select_omits_unknown_ids(snapshot, catalog):
    candidates = [
        pick("shop/models.py::Product.unit_price", rel=0.5, line_count=3),
        pick("gone.py::nothing", rel=1.0, line_count=5),
    ]
    pack = select_context(candidates, budget=100, catalog=catalog, snapshot=snapshot)
    assert [u.unit_id for u in pack.units] == ["shop/models.py::Product.unit_price"]
    assert pack.omitted == ("gone.py::nothing",)


def test_select_truncates_oversized_best_unit(fixture_root, snapshot, catalog):
    candidates = [
        pick("docs/guide.md::__doc__", rel=1.0, line_count=695),
        pick("shop/models.py::PriceRule", rel=0.9, line_count=14),
    ]
    pack = select_context(candidates, budget=10, catalog=catalog, snapshot=snapshot)
    assert len(pack.units) == 1
    top = pack.units[0]
    assert top.truncated
    assert top.span == (1, 10)
    assert top.line_count == 10
    guide = (fixture_root / "docs" / "guide.md").read_text(encoding="utf-8")
    assert top.body == "\n".join(guide.splitlines()[:10])
    assert pack.total_lines == 10
    # the loop's own omissions are replaced by everything below the top pick
    assert pack.omitted == ("shop/models.py::PriceRule",)


def test_select_unknown_top_yields_empty_pack(snapshot, catalog):
    candidates = [
        pick("gone.py::nothing", rel=1.0, line_count=5),
        pick("shop/models.py::Product.unit_price", rel=0.5, line_count=3),
    ]
    pack = select_context(candidates, budget=2, catalog=catalog, snapshot=snapshot)
    assert pack.units == ()
    assert pack.total_lines == 0
    assert pack.omitted == ("gone.py::nothing", "shop/models.py::Product.unit_price")


def test_select_zero_line_unit_fits_zero_budget(snapshot, catalog):
    candidates = [pick("tests/__init__.py", rel=1.0, line_count=0)]
    pack = select_context(candidates, budget=0, catalog=catalog, snapshot=snapshot)
    assert [u.unit_id for u in pack.units] == ["tests/__init__.py"]
    assert pack.units[0].body == ""
    assert pack.total_lines == 0


def test_select_bodies_match_source(snapshot, catalog):
    candidates = [pick("shop/pricing.py::compute_discount", rel=1.0, line_count=14)]
    pack = select_context(candidates, budget=100, catalog=catalog, snapshot=snapshot)
    unit = catalog.get("shop/pricing.py::compute_discount")
    assert pack.units[0].body == read_unit_body(snapshot, unit)
    assert pack.units[0].span == unit.span
    assert pack.units[0].path == "shop/pricing.py"
