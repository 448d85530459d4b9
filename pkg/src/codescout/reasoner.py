"""Role-typed reasoner access with strict response validation.

Every exchange is a ReasonerRequest carrying one of five roles.  The
response must validate against that role's schema; a malformed response
buys exactly one retry before MalformedAfterRetry is raised and the
caller falls back to its documented degenerate behaviour.  All traffic,
including retries, is metered through a TokenLedger.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from .errors import MalformedAfterRetry, ReasonerUnavailable, SchemaError, ScriptExhausted

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

ROLE_AUGMENT = "augment"
ROLE_INIT = "init_decision"
ROLE_COMPLEXITY = "complexity"
ROLE_REFINE = "refine_decision"
ROLE_ANSWER = "answer"
ROLES = (ROLE_AUGMENT, ROLE_INIT, ROLE_COMPLEXITY, ROLE_REFINE, ROLE_ANSWER)

QUERY_INTENTS = (
    "concept_lookup",
    "symbol_lookup",
    "behavior_trace",
    "bug_localization",
    "architecture",
    "task_execution",
)

# Synthetic accounting for backends that do not report usage: one token
# per four characters of canonical JSON.
SYNTHETIC_CHARS_PER_TOKEN = 4


@dataclass(frozen=True)
class ReasonerRequest:
    role: str
    payload: Mapping[str, Any]
    schema_version: int = SCHEMA_VERSION


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def synthetic_tokens(value: Any) -> int:
    return len(canonical_json(value)) // SYNTHETIC_CHARS_PER_TOKEN


# ---------------------------------------------------------------------------
# schema validation
# ---------------------------------------------------------------------------


def _require(payload: Mapping[str, Any], key: str, types: tuple[type, ...]) -> Any:
    if key not in payload:
        raise SchemaError(f"missing key {key!r}")
    value = payload[key]
    if not isinstance(value, types):
        raise SchemaError(f"key {key!r} has type {type(value).__name__}")
    return value


def validate_request(request: ReasonerRequest) -> None:
    if request.role not in ROLES:
        raise SchemaError(f"unknown role {request.role!r}")
    if not isinstance(request.payload, Mapping):
        raise SchemaError("payload must be a mapping")
    if request.role in (ROLE_COMPLEXITY, ROLE_AUGMENT):
        _require(request.payload, "query", (str,))
    elif request.role == ROLE_INIT:
        _require(request.payload, "query", (str,))
    elif request.role == ROLE_REFINE:
        _require(request.payload, "profiles", (list,))
        _require(request.payload, "state", (Mapping, dict))
    elif request.role == ROLE_ANSWER:
        _require(request.payload, "query", (str,))
        _require(request.payload, "context", (list,))


def _validate_tool_calls(raw: Any, limit: int = 3) -> list[dict[str, Any]]:
    if not isinstance(raw, list):
        raise SchemaError("tool_calls must be a list")
    if len(raw) > limit:
        raise SchemaError(f"at most {limit} tool calls allowed")
    out = []
    for item in raw:
        if not isinstance(item, Mapping):
            raise SchemaError("tool call must be a mapping")
        tool = _require(item, "tool", (str,))
        if tool not in ("traverse", "search"):
            raise SchemaError(f"unknown tool {tool!r}")
        args = _require(item, "args", (Mapping, dict))
        out.append({"tool": tool, "args": dict(args)})
    return out


def validate_response(role: str, response: Any) -> dict[str, Any]:
    """Normalize and validate a raw response for ``role``."""
    if role == ROLE_ANSWER:
        if isinstance(response, str):
            return {"text": response}
        if isinstance(response, Mapping):
            return {"text": _require(response, "text", (str,))}
        raise SchemaError("answer must be text")
    if not isinstance(response, Mapping):
        raise SchemaError("response must be a mapping")
    if role == ROLE_COMPLEXITY:
        complexity = _require(response, "complexity", (int, float))
        confidence = _require(response, "confidence", (int, float))
        return {"complexity": float(complexity), "confidence": float(confidence)}
    if role == ROLE_AUGMENT:
        intent = _require(response, "intent", (str,))
        if intent not in QUERY_INTENTS:
            raise SchemaError(f"unknown intent {intent!r}")
        rewritten = _require(response, "rewritten", (str,))
        keywords = _require(response, "keywords", (list,))
        if not all(isinstance(kw, str) for kw in keywords):
            raise SchemaError("keywords must be strings")
        hints = response.get("pseudocode_hints")
        if hints is not None and not isinstance(hints, str):
            raise SchemaError("pseudocode_hints must be text when present")
        return {
            "intent": intent,
            "rewritten": rewritten,
            "keywords": list(keywords),
            "pseudocode_hints": hints,
        }
    if role == ROLE_INIT:
        return {"tool_calls": _validate_tool_calls(response.get("tool_calls", []))}
    if role == ROLE_REFINE:
        keep = _require(response, "keep", (list,))
        if not all(isinstance(k, str) for k in keep):
            raise SchemaError("keep entries must be unit ids")
        confidence = _require(response, "confidence", (int, float))
        terminate = response.get("terminate", False)
        if not isinstance(terminate, bool):
            raise SchemaError("terminate must be a boolean")
        return {
            "keep": list(keep),
            "new_tool_calls": _validate_tool_calls(response.get("new_tool_calls", [])),
            "confidence": float(confidence),
            "terminate": terminate,
        }
    raise SchemaError(f"unknown role {role!r}")


# ---------------------------------------------------------------------------
# token ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LedgerRecord:
    role: str
    model_id: str
    prompt_tokens: int
    completion_tokens: int


class TokenLedger:
    """Thread-safe tally of every reasoner attempt."""

    def __init__(self) -> None:
        self._records: list[LedgerRecord] = []
        self._lock = threading.Lock()

    def add(self, record: LedgerRecord) -> None:
        with self._lock:
            self._records.append(record)

    @property
    def records(self) -> tuple[LedgerRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def total_tokens(self) -> int:
        return sum(r.prompt_tokens + r.completion_tokens for r in self.records)


# Published per-1M-token prices for a few common hosted models, so ledger
# reports can attach a dollar figure out of the box.
DEFAULT_PRICE_TABLE: dict[str, tuple[float, float]] = {
    "gemini-3-flash": (0.40, 2.40),
    "gemini-2.5-pro": (0.87, 7.00),
    "claude-3.5-sonnet": (2.60, 13.00),
    "claude-3.7-sonnet": (2.60, 13.00),
    "qwen3-coder-30b": (0.07, 0.27),
}


def ledger_report(ledger: TokenLedger, price_table: Mapping[str, tuple[float, float]] | None = None) -> dict:
    """Per-role and total token counts, with cost when prices are known."""
    prices = DEFAULT_PRICE_TABLE if price_table is None else price_table
    per_role: dict[str, dict[str, int]] = {}
    total_prompt = 0
    total_completion = 0
    cost = 0.0
    unknown: set[str] = set()
    for record in ledger.records:
        bucket = per_role.setdefault(record.role, {"prompt_tokens": 0, "completion_tokens": 0, "calls": 0})
        bucket["prompt_tokens"] += record.prompt_tokens
        bucket["completion_tokens"] += record.completion_tokens
        bucket["calls"] += 1
        total_prompt += record.prompt_tokens
        total_completion += record.completion_tokens
        price = prices.get(record.model_id)
        if price is None:
            unknown.add(record.model_id)
        else:
            cost += record.prompt_tokens * price[0] / 1e6 + record.completion_tokens * price[1] / 1e6
    return {
        "per_role": per_role,
        "totals": {
            "prompt_tokens": total_prompt,
            "completion_tokens": total_completion,
            "tokens": total_prompt + total_completion,
        },
        "cost_usd": None if unknown else round(cost, 6),
        "unknown_models": sorted(unknown),
    }


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


class ReasonerBackend(Protocol):
    model_id: str

    def complete(self, request: ReasonerRequest) -> Any:
        """Return the raw (unvalidated) response for one attempt."""


@dataclass
class _RequestLogEntry:
    role: str
    payload_json: str


class ScriptedReasoner:
    """Replays canned responses per role in order.

    The script maps each role to a response list consumed one call at a
    time, which makes sessions referentially transparent: same script,
    same query, same trace.  With ``strict`` set, running past the end of
    a list raises; otherwise the backend reports itself unavailable and
    the caller's fallback path takes over.
    """

    model_id = "scripted"

    def __init__(self, script: Mapping[str, list[Any]], strict: bool = False):
        self._script = {role: list(items) for role, items in script.items()}
        self._cursor: dict[str, int] = {role: 0 for role in self._script}
        self.strict = strict
        self.request_log: list[_RequestLogEntry] = []

    @staticmethod
    def from_file(path: str) -> "ScriptedReasoner":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        strict = bool(data.get("strict", False))
        responses = data.get("responses", {})
        if not isinstance(responses, dict):
            raise SchemaError("scripted file must map roles to response lists")
        return ScriptedReasoner(responses, strict=strict)

    def complete(self, request: ReasonerRequest) -> Any:
        self.request_log.append(
            _RequestLogEntry(role=request.role, payload_json=canonical_json(dict(request.payload)))
        )
        items = self._script.get(request.role, [])
        index = self._cursor.get(request.role, 0)
        if index >= len(items):
            if self.strict:
                raise ScriptExhausted(f"no scripted response left for role {request.role!r}")
            raise ReasonerUnavailable(f"script exhausted for role {request.role!r}")
        self._cursor[request.role] = index + 1
        return items[index]


class OfflineReasoner:
    """Backend used when no reasoner is configured; always unavailable."""

    model_id = "offline"

    def complete(self, request: ReasonerRequest) -> Any:
        raise ReasonerUnavailable("no reasoner configured")


class HttpReasoner:
    """Chat-style JSON backend configured through environment variables."""

    ENV_URL = "REASONER_URL"
    ENV_MODEL = "REASONER_MODEL"
    ENV_API_KEY = "REASONER_API_KEY"

    def __init__(
        self,
        url: str | None = None,
        model_id: str | None = None,
        api_key: str | None = None,
        timeout: float = 30.0,
    ):
        self.url = url or os.environ.get(self.ENV_URL, "")
        self.model_id = model_id or os.environ.get(self.ENV_MODEL, "unknown")
        self.api_key = api_key or os.environ.get(self.ENV_API_KEY)
        self.timeout = timeout
        if not self.url:
            raise ReasonerUnavailable(f"{self.ENV_URL} is not set")
        self.last_usage: tuple[int, int] | None = None

    def complete(self, request: ReasonerRequest) -> Any:
        body = json.dumps(
            {
                "model": self.model_id,
                "messages": [
                    {"role": "system", "content": f"role={request.role} schema_version={request.schema_version}"},
                    {"role": "user", "content": canonical_json(dict(request.payload))},
                ],
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for _ in range(2):
            try:
                req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    data = json.loads(resp.read().decode("utf-8"))
                content = data["choices"][0]["message"]["content"]
                usage = data.get("usage", {})
                self.last_usage = (
                    int(usage.get("prompt_tokens", 0)),
                    int(usage.get("completion_tokens", 0)),
                )
                if request.role == ROLE_ANSWER:
                    return content
                try:
                    return json.loads(content)
                except json.JSONDecodeError:
                    return content  # schema validation will reject non-JSON
            except (urllib.error.URLError, OSError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise ReasonerUnavailable(f"reasoner unreachable: {last_error}")


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def request(
    backend: ReasonerBackend,
    req: ReasonerRequest,
    ledger: TokenLedger | None = None,
) -> dict[str, Any]:
    """Send one validated request; retry once on a malformed response."""
    validate_request(req)
    last_error: SchemaError | None = None
    for _ in range(2):
        raw = backend.complete(req)
        if ledger is not None:
            usage = getattr(backend, "last_usage", None)
            if usage and usage != (0, 0):
                prompt_tokens, completion_tokens = usage
            else:
                prompt_tokens = synthetic_tokens(dict(req.payload))
                completion_tokens = synthetic_tokens(raw)
            ledger.add(
                LedgerRecord(
                    role=req.role,
                    model_id=backend.model_id,
                    prompt_tokens=prompt_tokens,
                    completion_tokens=completion_tokens,
                )
            )
        try:
            return validate_response(req.role, raw)
        except SchemaError as exc:
            logger.warning("malformed %s response, retrying once: %s", req.role, exc)
            last_error = exc
    raise MalformedAfterRetry(f"role {req.role}: {last_error}")
