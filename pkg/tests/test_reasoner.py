"""Schema validation, token accounting, and backend behavior checks."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from codescout.errors import (
    MalformedAfterRetry,
    ReasonerUnavailable,
    SchemaError,
    ScriptExhausted,
)
from codescout.reasoner import (
    DEFAULT_PRICE_TABLE,
    HttpReasoner,
    LedgerRecord,
    OfflineReasoner,
    ReasonerRequest,
    ScriptedReasoner,
    TokenLedger,
    canonical_json,
    ledger_report,
    request,
    synthetic_tokens,
    validate_request,
    validate_response,
)

from conftest import write_script


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
    assert canonical_json({"s": "é"}) == '{"s":"é"}'


def test_synthetic_tokens():
    assert canonical_json({"a": 1}) == '{"a":1}'
    assert synthetic_tokens({"a": 1}) == 1  # 7 chars // 4
    assert synthetic_tokens("") == 0


# ---------------------------------------------------------------------------
# request validation
# ---------------------------------------------------------------------------


def test_validate_request_role_and_payload():
    with pytest.raises(SchemaError, match="unknown role 'bogus'"):
        validate_request(ReasonerRequest(role="bogus", payload={}))
    with pytest.raises(SchemaError, match="payload must be a mapping"):
        validate_request(ReasonerRequest(role="augment", payload="q"))


def test_validate_request_required_keys():
    with pytest.raises(SchemaError, match="missing key 'query'"):
        validate_request(ReasonerRequest(role="complexity", payload={}))
    with pytest.raises(SchemaError, match="key 'query' has type int"):
        validate_request(ReasonerRequest(role="augment", payload={"query": 3}))
    with pytest.raises(SchemaError, match="missing key 'profiles'"):
        validate_request(ReasonerRequest(role="refine_decision", payload={"state": {}}))
    with pytest.raises(SchemaError, match="missing key 'state'"):
        validate_request(ReasonerRequest(role="refine_decision", payload={"profiles": []}))
    with pytest.raises(SchemaError, match="missing key 'context'"):
        validate_request(ReasonerRequest(role="answer", payload={"query": "q"}))
    validate_request(ReasonerRequest(role="init_decision", payload={"query": "q"}))


# ---------------------------------------------------------------------------
# response validation
# ---------------------------------------------------------------------------


def test_complexity_response_coerces_floats():
    out = validate_response("complexity", {"complexity": 55, "confidence": 30})
    assert out == {"complexity": 55.0, "confidence": 30.0}
    assert isinstance(out["complexity"], float)
    with pytest.raises(SchemaError, match="missing key 'confidence'"):
        validate_response("complexity", {"complexity": 55})


def test_augment_response():
    out = validate_response(
        "augment",
        {"intent": "symbol_lookup", "rewritten": "r", "keywords": ["a", "b"]},
    )
    assert out == {
        "intent": "symbol_lookup",
        "rewritten": "r",
        "keywords": ["a", "b"],
        "pseudocode_hints": None,
    }
    with pytest.raises(SchemaError, match="unknown intent 'vibe'"):
        validate_response("augment", {"intent": "vibe", "rewritten": "r", "keywords": []})
    with pytest.raises(SchemaError, match="keywords must be strings"):
        validate_response(
            "augment", {"intent": "architecture", "rewritten": "r", "keywords": [1]}
        )
    with pytest.raises(SchemaError, match="pseudocode_hints must be text when present"):
        validate_response(
            "augment",
            {"intent": "architecture", "rewritten": "r", "keywords": [], "pseudocode_hints": 9},
        )


def test_init_response_tool_call_rules():
    assert validate_response("init_decision", {}) == {"tool_calls": []}
    out = validate_response(
        "init_decision",
        {"tool_calls": [{"tool": "search", "args": {"pattern": "x"}}]},
    )
    assert out == {"tool_calls": [{"tool": "search", "args": {"pattern": "x"}}]}
    with pytest.raises(SchemaError, match="at most 3 tool calls allowed"):
        validate_response(
            "init_decision",
            {"tool_calls": [{"tool": "search", "args": {}}] * 4},
        )
    with pytest.raises(SchemaError, match="unknown tool 'rm'"):
        validate_response("init_decision", {"tool_calls": [{"tool": "rm", "args": {}}]})
    with pytest.raises(SchemaError, match="tool call must be a mapping"):
        validate_response("init_decision", {"tool_calls": ["search"]})
    with pytest.raises(SchemaError, match="tool_calls must be a list"):
        validate_response("init_decision", {"tool_calls": "search"})


def test_refine_response():
    out = validate_response("refine_decision", {"keep": ["a"], "confidence": 80})
    assert out == {
        "keep": ["a"],
        "new_tool_calls": [],
        "confidence": 80.0,
        "terminate": False,
    }
    with pytest.raises(SchemaError, match="keep entries must be unit ids"):
        validate_response("refine_decision", {"keep": [1], "confidence": 80})
    with pytest.raises(SchemaError, match="terminate must be a boolean"):
        validate_response(
            "refine_decision", {"keep": [], "confidence": 80, "terminate": "yes"}
        )


def test_answer_response():
    assert validate_response("answer", "plain text") == {"text": "plain text"}
    assert validate_response("answer", {"text": "t"}) == {"text": "t"}
    with pytest.raises(SchemaError, match="missing key 'text'"):
        validate_response("answer", {"body": "t"})
    with pytest.raises(SchemaError, match="answer must be text"):
        validate_response("answer", 42)


def test_response_shape_errors():
    with pytest.raises(SchemaError, match="response must be a mapping"):
        validate_response("complexity", "55")
    with pytest.raises(SchemaError, match="unknown role 'bogus'"):
        validate_response("bogus", {})


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------


def test_ledger_records_and_total():
    ledger = TokenLedger()
    ledger.add(LedgerRecord("complexity", "scripted", 10, 5))
    ledger.add(LedgerRecord("augment", "scripted", 20, 15))
    assert ledger.total_tokens() == 50
    assert [r.role for r in ledger.records] == ["complexity", "augment"]


def test_ledger_report_with_known_prices():
    ledger = TokenLedger()
    ledger.add(LedgerRecord("complexity", "gemini-3-flash", 1000, 500))
    ledger.add(LedgerRecord("answer", "gemini-3-flash", 2000, 1000))
    report = ledger_report(ledger)
    assert report["per_role"]["complexity"] == {
        "prompt_tokens": 1000,
        "completion_tokens": 500,
        "calls": 1,
    }
    assert report["totals"] == {
        "prompt_tokens": 3000,
        "completion_tokens": 1500,
        "tokens": 4500,
    }
    # 3000 * 0.40/1e6 + 1500 * 2.40/1e6
    assert report["cost_usd"] == pytest.approx(0.0048)
    assert report["unknown_models"] == []
    assert "gemini-3-flash" in DEFAULT_PRICE_TABLE


def test_ledger_report_with_unknown_model():
    ledger = TokenLedger()
    ledger.add(LedgerRecord("answer", "mystery", 100, 100))
    report = ledger_report(ledger)
    assert report["cost_usd"] is None
    assert report["unknown_models"] == ["mystery"]


def test_ledger_report_empty():
    report = ledger_report(TokenLedger())
    assert report["totals"]["tokens"] == 0
    assert report["cost_usd"] == 0.0


# ---------------------------------------------------------------------------
# scripted backend
# ---------------------------------------------------------------------------


def test_scripted_reasoner_consumes_in_order():
    backend = ScriptedReasoner({"answer": ["first", "second"]})
    assert backend.model_id == "scripted"
    req = ReasonerRequest(role="answer", payload={"query": "q", "context": []})
    assert backend.complete(req) == "first"
    assert backend.complete(req) == "second"
    with pytest.raises(ReasonerUnavailable, match="script exhausted for role 'answer'"):
        backend.complete(req)
    assert [e.role for e in backend.request_log] == ["answer"] * 3
    assert backend.request_log[0].payload_json == '{"context":[],"query":"q"}'


def test_scripted_reasoner_strict_mode():
    backend = ScriptedReasoner({}, strict=True)
    req = ReasonerRequest(role="augment", payload={"query": "q"})
    with pytest.raises(ScriptExhausted, match="no scripted response left for role 'augment'"):
        backend.complete(req)


def test_scripted_reasoner_from_file(tmp_path):
    path = write_script(
        tmp_path / "script.json",
        {"complexity": [{"complexity": 10, "confidence": 5}]},
        strict=True,
    )
    backend = ScriptedReasoner.from_file(path)
    assert backend.strict
    out = request(backend, ReasonerRequest(role="complexity", payload={"query": "q"}))
    assert out == {"complexity": 10.0, "confidence": 5.0}


def test_scripted_file_rejects_non_mapping_responses(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"responses": ["not", "a", "dict"]}), encoding="utf-8")
    with pytest.raises(SchemaError, match="scripted file must map roles to response lists"):
        ScriptedReasoner.from_file(str(path))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def test_request_meters_synthetic_tokens():
    backend = ScriptedReasoner({"complexity": [{"complexity": 10, "confidence": 5}]})
    ledger = TokenLedger()
    payload = {"query": "how are discounts applied"}
    request(backend, ReasonerRequest(role="complexity", payload=payload), ledger)
    record = ledger.records[0]
    assert record.model_id == "scripted"
    assert record.prompt_tokens == synthetic_tokens(payload)
    assert record.completion_tokens == synthetic_tokens({"complexity": 10, "confidence": 5})


def test_request_retries_once_on_malformed():
    backend = ScriptedReasoner(
        {"complexity": [{"wrong": 1}, {"complexity": 10, "confidence": 5}]}
    )
    ledger = TokenLedger()
    out = request(backend, ReasonerRequest(role="complexity", payload={"query": "q"}), ledger)
    assert out == {"complexity": 10.0, "confidence": 5.0}
    assert len(ledger.records) == 2  # both attempts metered


def test_request_raises_after_second_malformed():
    backend = ScriptedReasoner({"complexity": [{"wrong": 1}, {"also": 2}]})
    with pytest.raises(MalformedAfterRetry, match="role complexity: missing key 'complexity'"):
        request(backend, ReasonerRequest(role="complexity", payload={"query": "q"}))


def test_request_validates_before_calling_backend():
    backend = ScriptedReasoner({"complexity": [{"complexity": 1, "confidence": 1}]})
    with pytest.raises(SchemaError):
        request(backend, ReasonerRequest(role="complexity", payload={}))
    assert backend.request_log == []


def test_offline_reasoner():
    with pytest.raises(ReasonerUnavailable, match="no reasoner configured"):
        OfflineReasoner().complete(ReasonerRequest(role="answer", payload={}))


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------


class _ChatHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        sent = json.loads(self.rfile.read(length))
        self.server.last_body = sent
        if self.path == "/ok":
            content = canonical_json({"complexity": 12, "confidence": 34})
        elif self.path == "/text":
            content = "the final answer"
        else:
            content = "definitely not json"
        body = json.dumps(
            {
                "choices": [{"message": {"content": content}}],
                "usage": {"prompt_tokens": 7, "completion_tokens": 3},
            }
        ).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def chat_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        thread.join()


def test_http_reasoner_requires_url(monkeypatch):
    monkeypatch.delenv(HttpReasoner.ENV_URL, raising=False)
    with pytest.raises(ReasonerUnavailable, match="REASONER_URL is not set"):
        HttpReasoner()


def test_http_reasoner_round_trip_uses_reported_usage(chat_server):
    port = chat_server.server_address[1]
    backend = HttpReasoner(url=f"http://127.0.0.1:{port}/ok", model_id="gemini-3-flash")
    ledger = TokenLedger()
    out = request(backend, ReasonerRequest(role="complexity", payload={"query": "q"}), ledger)
    assert out == {"complexity": 12.0, "confidence": 34.0}
    assert (ledger.records[0].prompt_tokens, ledger.records[0].completion_tokens) == (7, 3)
    assert chat_server.last_body["model"] == "gemini-3-flash"
    assert chat_server.last_body["messages"][0]["content"] == (
        "role=complexity schema_version=1"
    )


def test_http_reasoner_answer_passes_text_through(chat_server):
    port = chat_server.server_address[1]
    backend = HttpReasoner(url=f"http://127.0.0.1:{port}/text", model_id="m")
    out = request(backend, ReasonerRequest(role="answer", payload={"query": "q", "context": []}))
    assert out == {"text": "the final answer"}


def test_http_reasoner_malformed_content(chat_server):
    port = chat_server.server_address[1]
    backend = HttpReasoner(url=f"http://127.0.0.1:{port}/garbled", model_id="m")
    with pytest.raises(MalformedAfterRetry):
        request(backend, ReasonerRequest(role="complexity", payload={"query": "q"}))


def test_http_reasoner_unreachable():
    backend = HttpReasoner(url="http://127.0.0.1:9/none", model_id="m", timeout=0.2)
    with pytest.raises(ReasonerUnavailable, match="reasoner unreachable"):
        backend.complete(ReasonerRequest(role="answer", payload={"query": "q", "context": []}))
