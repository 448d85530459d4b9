"""HTTP front end: routes, status codes, and parity with the facade."""

from __future__ import annotations

import json
import shutil
import threading
import urllib.error
import urllib.request
from contextlib import contextmanager

import pytest

from codescout import engine
from codescout.reasoner import OfflineReasoner, ScriptedReasoner
from codescout.service import AppState, make_server

SLUG_SCRIPT = {
    "complexity": [{"complexity": 55, "confidence": 30}],
    "augment": [
        {"intent": "symbol_lookup", "rewritten": "slugify", "keywords": ["slugify"]}
    ],
    "init_decision": [{"tool_calls": []}],
    "refine_decision": [
        {"keep": ["shop/util/text.py::slugify"], "confidence": 95, "terminate": True}
    ],
}


@contextmanager
def serving(state):
    server = make_server(state, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server.server_address[1]
    finally:
        server.shutdown()
        thread.join()


def _call(port, path, method="GET", raw=None, payload=None):
    if payload is not None:
        raw = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}", data=raw, method=method
    )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, dict(resp.headers), json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, dict(err.headers), json.loads(err.read())


def _state(workspace, app_config, backend=None):
    return AppState(
        root=workspace.root,
        config=app_config,
        backend=backend or OfflineReasoner(),
        workspace=workspace,
    )


# ---------------------------------------------------------------------------
# GET
# ---------------------------------------------------------------------------


def test_stats_route(workspace, app_config):
    with serving(_state(workspace, app_config)) as port:
        status, headers, body = _call(port, "/stats")
        assert status == 200
        assert headers["X-Index-Format"] == "1"
        assert body == engine.workspace_stats(workspace)
        status, _, root_body = _call(port, "/")
        assert status == 200
        assert root_body == body


def test_unknown_paths_404(workspace, app_config):
    with serving(_state(workspace, app_config)) as port:
        status, _, body = _call(port, "/nope")
        assert (status, body) == (404, {"error": "unknown path /nope"})
        status, _, body = _call(port, "/nope", method="POST", payload={})
        assert (status, body) == (404, {"error": "unknown path /nope"})


def test_conflict_before_index(app_config):
    state = AppState(root="/tmp", config=app_config, backend=OfflineReasoner())
    with serving(state) as port:
        status, _, body = _call(port, "/stats")
        assert (status, body) == (409, {"error": "no index loaded; POST /index first"})
        status, _, body = _call(port, "/locate", method="POST", payload={"query": "x"})
        assert status == 409
        assert body == {"error": "IndexMissing: no index loaded; POST /index first"}


# ---------------------------------------------------------------------------
# POST /index
# ---------------------------------------------------------------------------


def test_index_route_builds_workspace(tmp_path, fixture_root, app_config):
    repo = tmp_path / "repo"
    shutil.copytree(fixture_root, repo)
    state = AppState(
        root=str(repo),
        config=app_config,
        backend=OfflineReasoner(),
        index_dir=str(tmp_path / "idx"),
    )
    with serving(state) as port:
        status, _, body = _call(port, "/index", method="POST")
        assert status == 200
        assert body["manifest"]["file_count"] == 30
        assert body["manifest"]["unit_count"] == 154
        status, _, stats = _call(port, "/stats")
        assert status == 200
        assert stats["fresh"] is True


# ---------------------------------------------------------------------------
# POST /locate, /context, /answer
# ---------------------------------------------------------------------------


def test_locate_route_matches_facade(workspace, app_config):
    backend = ScriptedReasoner(SLUG_SCRIPT)
    with serving(_state(workspace, app_config, backend)) as port:
        status, _, body = _call(
            port, "/locate", method="POST", payload={"query": "url slug", "top_k": 5}
        )
    assert status == 200
    direct = engine.locate(
        workspace, "url slug", ScriptedReasoner(SLUG_SCRIPT), app_config, top_k=5
    )
    assert body == engine.locate_view(direct)


def test_context_route_keeps_pack(workspace, app_config):
    backend = ScriptedReasoner(SLUG_SCRIPT)
    with serving(_state(workspace, app_config, backend)) as port:
        status, _, body = _call(
            port, "/context", method="POST", payload={"query": "url slug"}
        )
    assert status == 200
    assert "pack" in body and "trace" not in body
    assert body["pack"]["total_lines"] <= body["pack"]["budget"]
    assert body["pack"]["units"][0]["body"].startswith("def slugify")


def test_answer_route(workspace, app_config):
    script = dict(SLUG_SCRIPT)
    script["answer"] = ["text.py builds slugs"]
    backend = ScriptedReasoner(script)
    with serving(_state(workspace, app_config, backend)) as port:
        status, _, body = _call(
            port, "/answer", method="POST", payload={"query": "url slug"}
        )
    assert status == 200
    assert body["answer"] == "text.py builds slugs"
    assert body["ledger"]["totals"]["tokens"] > 0


def test_answer_without_reasoner_is_bad_gateway(workspace, app_config):
    with serving(_state(workspace, app_config)) as port:
        status, _, body = _call(port, "/answer", method="POST", payload={"query": "x"})
    assert status == 502
    assert body == {"error": "ReasonerUnavailable: no reasoner configured"}


# ---------------------------------------------------------------------------
# request validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("raw", "payload", "message"),
    [
        (b"{nope", None, "request body must be JSON"),
        (b"[1, 2]", None, "request body must be a JSON object"),
        (None, {}, "a non-empty 'query' string is required"),
        (None, {"query": "   "}, "a non-empty 'query' string is required"),
        (None, {"query": "x", "top_k": "five"}, "'top_k' must be an integer when present"),
    ],
)
def test_locate_request_validation(workspace, app_config, raw, payload, message):
    with serving(_state(workspace, app_config)) as port:
        status, _, body = _call(port, "/locate", method="POST", raw=raw, payload=payload)
    assert (status, body) == (400, {"error": message})
