"""Shared fixtures over the sample storefront tree.

The tree under ``fixtures/shopcore`` is parsed and indexed once per
session.  Its index is written to a temporary directory so the committed
fixture stays byte-identical across test runs.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from codescout import engine
from codescout.config import AppConfig
from codescout.relation_graph import build_relation_graph
from codescout.repo_model import build_catalog, scan_repository

FIXTURE_ROOT = Path(__file__).parent / "fixtures" / "shopcore"


@pytest.fixture(scope="session")
def fixture_root() -> Path:
    return FIXTURE_ROOT


@pytest.fixture(scope="session")
def snapshot(fixture_root):
    return scan_repository(fixture_root)


@pytest.fixture(scope="session")
def parsed(snapshot):
    return build_catalog(snapshot)


@pytest.fixture(scope="session")
def catalog(parsed):
    return parsed[0]


@pytest.fixture(scope="session")
def facts(parsed):
    return parsed[1]


@pytest.fixture(scope="session")
def graph(snapshot, catalog, facts):
    return build_relation_graph(snapshot, catalog, facts)


@pytest.fixture(scope="session")
def app_config() -> AppConfig:
    return AppConfig()


@pytest.fixture(scope="session")
def index_dir(fixture_root, app_config, tmp_path_factory) -> Path:
    directory = tmp_path_factory.mktemp("shopcore-index")
    engine.build_index(fixture_root, app_config, index_dir=directory)
    return directory


@pytest.fixture(scope="session")
def workspace(fixture_root, app_config, index_dir):
    return engine.load_workspace(fixture_root, app_config, index_dir=index_dir)


def write_script(path: Path, responses: dict, strict: bool = False) -> str:
    """Write a scripted-reasoner response file and return its path."""
    path.write_text(
        json.dumps({"strict": strict, "responses": responses}), encoding="utf-8"
    )
    return str(path)
