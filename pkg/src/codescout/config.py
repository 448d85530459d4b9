"""Application configuration loaded from a JSON file.

Unknown keys are rejected rather than ignored so a typo like
``"budjet"`` fails loudly instead of silently running with defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .budget_policy import BudgetConfig
from .errors import ConfigError
from .navigator import DEFAULT_CANDIDATE_CAP
from .scout_tools import DEFAULT_LISTING_CAP, DEFAULT_SEARCH_CAP

_BUDGET_KEYS = {
    "c", "b_min", "tau", "epsilon", "patience", "t_max", "w1", "w2", "w3", "k",
}
_EMBEDDING_KEYS = {"provider", "dim", "url", "api_key_env", "timeout"}
_REASONER_KEYS = {"backend", "script_path", "strict", "url", "model", "api_key_env"}
_TOP_KEYS = {
    "include_globs",
    "exclude_globs",
    "budget",
    "embedding",
    "reasoner",
    "candidate_cap",
    "listing_cap",
    "search_cap",
    "top_k",
}


@dataclass(frozen=True)
class EmbeddingSettings:
    provider: str = "mock"  # "mock" | "http" | "none"
    dim: int = 64
    url: str | None = None
    api_key_env: str | None = None
    timeout: float = 10.0


@dataclass(frozen=True)
class ReasonerSettings:
    backend: str = "offline"  # "offline" | "scripted" | "http"
    script_path: str | None = None
    strict: bool = False
    url: str | None = None
    model: str | None = None
    api_key_env: str | None = None


@dataclass(frozen=True)
class AppConfig:
    include_globs: tuple[str, ...] | None = None
    exclude_globs: tuple[str, ...] | None = None
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    reasoner: ReasonerSettings = field(default_factory=ReasonerSettings)
    candidate_cap: int = DEFAULT_CANDIDATE_CAP
    listing_cap: int = DEFAULT_LISTING_CAP
    search_cap: int = DEFAULT_SEARCH_CAP
    top_k: int = 10

    def echo(self) -> dict[str, Any]:
        """Settings snapshot embedded in traces for reproducibility."""
        b = self.budget
        return {
            "budget": {
                "c": b.c, "b_min": b.b_min, "tau": b.tau, "epsilon": b.epsilon,
                "patience": b.patience, "t_max": b.t_max,
                "w1": b.w1, "w2": b.w2, "w3": b.w3, "k": b.k,
            },
            "candidate_cap": self.candidate_cap,
            "embedding_provider": self.embedding.provider,
        }


def _check_keys(section: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _coerce(value: Any, kind: type, where: str):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, kind) and not (kind is not bool and isinstance(value, bool)):
        return value
    raise ConfigError(f"{where} must be {kind.__name__}")


def parse_config(raw: Mapping[str, Any]) -> AppConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("configuration must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "configuration")

    budget_raw = raw.get("budget", {})
    if not isinstance(budget_raw, Mapping):
        raise ConfigError("budget must be an object")
    _check_keys(budget_raw, _BUDGET_KEYS, "budget")
    defaults = BudgetConfig()
    budget = BudgetConfig(
        c=_coerce(budget_raw.get("c", defaults.c), float, "budget.c"),
        b_min=_coerce(budget_raw.get("b_min", defaults.b_min), int, "budget.b_min"),
        tau=_coerce(budget_raw.get("tau", defaults.tau), float, "budget.tau"),
        epsilon=_coerce(budget_raw.get("epsilon", defaults.epsilon), float, "budget.epsilon"),
        patience=_coerce(budget_raw.get("patience", defaults.patience), int, "budget.patience"),
        t_max=_coerce(budget_raw.get("t_max", defaults.t_max), int, "budget.t_max"),
        w1=_coerce(budget_raw.get("w1", defaults.w1), float, "budget.w1"),
        w2=_coerce(budget_raw.get("w2", defaults.w2), float, "budget.w2"),
        w3=_coerce(budget_raw.get("w3", defaults.w3), float, "budget.w3"),
        k=_coerce(budget_raw.get("k", defaults.k), int, "budget.k"),
    )
    budget.validate()

    emb_raw = raw.get("embedding", {})
    if not isinstance(emb_raw, Mapping):
        raise ConfigError("embedding must be an object")
    _check_keys(emb_raw, _EMBEDDING_KEYS, "embedding")
    provider = emb_raw.get("provider", "mock")
    if provider not in ("mock", "http", "none"):
        raise ConfigError(f"unknown embedding provider {provider!r}")
    if provider == "http" and not emb_raw.get("url"):
        raise ConfigError("embedding.url required for the http provider")
    embedding = EmbeddingSettings(
        provider=provider,
        dim=_coerce(emb_raw.get("dim", 64), int, "embedding.dim"),
        url=emb_raw.get("url"),
        api_key_env=emb_raw.get("api_key_env"),
        timeout=_coerce(emb_raw.get("timeout", 10.0), float, "embedding.timeout"),
    )

    rsn_raw = raw.get("reasoner", {})
    if not isinstance(rsn_raw, Mapping):
        raise ConfigError("reasoner must be an object")
    _check_keys(rsn_raw, _REASONER_KEYS, "reasoner")
    backend = rsn_raw.get("backend", "offline")
    if backend not in ("offline", "scripted", "http"):
        raise ConfigError(f"unknown reasoner backend {backend!r}")
    if backend == "scripted" and not rsn_raw.get("script_path"):
        raise ConfigError("reasoner.script_path required for the scripted backend")
    reasoner = ReasonerSettings(
        backend=backend,
        script_path=rsn_raw.get("script_path"),
        strict=_coerce(rsn_raw.get("strict", False), bool, "reasoner.strict"),
        url=rsn_raw.get("url"),
        model=rsn_raw.get("model"),
        api_key_env=rsn_raw.get("api_key_env"),
    )

    def _globs(key: str) -> tuple[str, ...] | None:
        value = raw.get(key)
        if value is None:
            return None
        if not isinstance(value, list) or not all(isinstance(g, str) for g in value):
            raise ConfigError(f"{key} must be a list of strings")
        return tuple(value)

    return AppConfig(
        include_globs=_globs("include_globs"),
        exclude_globs=_globs("exclude_globs"),
        budget=budget,
        embedding=embedding,
        reasoner=reasoner,
        candidate_cap=_coerce(raw.get("candidate_cap", DEFAULT_CANDIDATE_CAP), int, "candidate_cap"),
        listing_cap=_coerce(raw.get("listing_cap", DEFAULT_LISTING_CAP), int, "listing_cap"),
        search_cap=_coerce(raw.get("search_cap", DEFAULT_SEARCH_CAP), int, "search_cap"),
        top_k=_coerce(raw.get("top_k", 10), int, "top_k"),
    )


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"configuration file not found: {file_path}")
    try:
        raw = json.loads(file_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"configuration unreadable: {exc}") from None
    return parse_config(raw)
