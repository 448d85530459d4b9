"""Configuration parsing, validation, and the trace echo."""

from __future__ import annotations

import json

import pytest

from codescout.config import AppConfig, load_config, parse_config
from codescout.errors import ConfigError


def test_defaults():
    cfg = AppConfig()
    assert cfg.include_globs is None
    assert cfg.exclude_globs is None
    assert cfg.budget.tau == 90.0
    assert cfg.embedding.provider == "mock"
    assert cfg.reasoner.backend == "offline"
    assert cfg.candidate_cap == 50
    assert cfg.listing_cap == 500
    assert cfg.search_cap == 10000
    assert cfg.top_k == 10


def test_parse_full_config():
    cfg = parse_config(
        {
            "include_globs": ["**/*.py"],
            "exclude_globs": ["build/**"],
            "budget": {"c": 30, "tau": 85, "patience": 3},
            "embedding": {"provider": "http", "url": "http://e", "dim": 32},
            "reasoner": {"backend": "scripted", "script_path": "s.json", "strict": True},
            "candidate_cap": 25,
            "top_k": 3,
        }
    )
    assert cfg.include_globs == ("**/*.py",)
    assert cfg.exclude_globs == ("build/**",)
    assert cfg.budget.c == 30.0
    assert cfg.budget.tau == 85.0
    assert cfg.budget.patience == 3
    assert cfg.budget.b_min == 200  # untouched default
    assert cfg.embedding.provider == "http"
    assert cfg.embedding.url == "http://e"
    assert cfg.embedding.dim == 32
    assert cfg.reasoner.backend == "scripted"
    assert cfg.reasoner.script_path == "s.json"
    assert cfg.reasoner.strict is True
    assert cfg.candidate_cap == 25
    assert cfg.top_k == 3


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown configuration keys: budjet"):
        parse_config({"budjet": {}})
    with pytest.raises(ConfigError, match="unknown budget keys: cc, zz"):
        parse_config({"budget": {"cc": 1, "zz": 2}})
    with pytest.raises(ConfigError, match="unknown embedding keys: host"):
        parse_config({"embedding": {"host": "x"}})
    with pytest.raises(ConfigError, match="unknown reasoner keys: mode"):
        parse_config({"reasoner": {"mode": "x"}})


def test_type_coercion_rules():
    # ints are accepted where floats are wanted
    assert parse_config({"budget": {"c": 25}}).budget.c == 25.0
    with pytest.raises(ConfigError, match="budget.c must be float"):
        parse_config({"budget": {"c": "fast"}})
    with pytest.raises(ConfigError, match="budget.patience must be int"):
        parse_config({"budget": {"patience": 2.5}})
    # booleans are not numbers
    with pytest.raises(ConfigError, match="budget.b_min must be int"):
        parse_config({"budget": {"b_min": True}})
    with pytest.raises(ConfigError, match="top_k must be int"):
        parse_config({"top_k": "five"})
    with pytest.raises(ConfigError, match="reasoner.strict must be bool"):
        parse_config({"reasoner": {"strict": 1}})


def test_budget_validation_propagates():
    with pytest.raises(ConfigError, match="priority weights must sum to 1"):
        parse_config({"budget": {"w1": 0.9, "w2": 0.9, "w3": 0.9}})


def test_section_shape_errors():
    with pytest.raises(ConfigError, match="budget must be an object"):
        parse_config({"budget": [1]})
    with pytest.raises(ConfigError, match="embedding must be an object"):
        parse_config({"embedding": "mock"})
    with pytest.raises(ConfigError, match="reasoner must be an object"):
        parse_config({"reasoner": "offline"})


def test_provider_and_backend_validation():
    with pytest.raises(ConfigError, match="unknown embedding provider 'word2vec'"):
        parse_config({"embedding": {"provider": "word2vec"}})
    with pytest.raises(ConfigError, match="embedding.url required for the http provider"):
        parse_config({"embedding": {"provider": "http"}})
    with pytest.raises(ConfigError, match="unknown reasoner backend 'local'"):
        parse_config({"reasoner": {"backend": "local"}})
    with pytest.raises(
        ConfigError, match="reasoner.script_path required for the scripted backend"
    ):
        parse_config({"reasoner": {"backend": "scripted"}})


def test_glob_validation():
    with pytest.raises(ConfigError, match="include_globs must be a list of strings"):
        parse_config({"include_globs": "**/*.py"})
    with pytest.raises(ConfigError, match="exclude_globs must be a list of strings"):
        parse_config({"exclude_globs": [1]})


def test_load_config(tmp_path):
    assert load_config(None) == AppConfig()
    path = tmp_path / "app.json"
    path.write_text(json.dumps({"top_k": 4}))
    assert load_config(path).top_k == 4
    with pytest.raises(ConfigError, match="configuration file not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="configuration unreadable"):
        load_config(bad)


def test_echo_shape():
    echo = AppConfig().echo()
    assert echo == {
        "budget": {
            "c": 20.0,
            "b_min": 200,
            "tau": 90.0,
            "epsilon": 0.01,
            "patience": 2,
            "t_max": 6,
            "w1": 0.6,
            "w2": 0.3,
            "w3": 0.1,
            "k": 20,
        },
        "candidate_cap": 50,
        "embedding_provider": "mock",
    }
