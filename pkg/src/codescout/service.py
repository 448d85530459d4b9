"""Minimal HTTP front end over the engine.

Routes mirror the CLI verbs so both surfaces return the same payloads:

    POST /index    rebuild the index for the configured root
    POST /locate   ranked files and candidates, no bodies
    POST /context  full context pack payload
    POST /answer   context plus a reasoner answer
    GET  /stats    index and graph summary

Responses carry an ``X-Index-Format`` header with the on-disk format
version.  Querying before an index exists yields 409; a reasoner
failure during /answer yields 502.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import engine, persist
from .config import AppConfig
from .errors import (
    CodeScoutError,
    IndexCorrupt,
    IndexMissing,
    MalformedAfterRetry,
    ReasonerUnavailable,
    StaleIndex,
)
from .reasoner import ReasonerBackend

logger = logging.getLogger(__name__)


class AppState:
    """Shared service state: one workspace, rebuilt under a lock."""

    def __init__(
        self,
        root: str,
        config: AppConfig,
        backend: ReasonerBackend,
        index_dir: str | None = None,
        allow_stale: bool = False,
        workspace: engine.Workspace | None = None,
    ):
        self.root = root
        self.config = config
        self.backend = backend
        self.index_dir = index_dir
        self.allow_stale = allow_stale
        self.workspace = workspace
        self.lock = threading.Lock()

    def reindex(self) -> dict:
        with self.lock:
            manifest = engine.build_index(self.root, self.config, index_dir=self.index_dir)
            self.workspace = engine.load_workspace(
                self.root, self.config, index_dir=self.index_dir, allow_stale=self.allow_stale
            )
            return manifest

    def require_workspace(self) -> engine.Workspace:
        workspace = self.workspace
        if workspace is None:
            raise IndexMissing("no index loaded; POST /index first")
        return workspace


class _Handler(BaseHTTPRequestHandler):
    server_version = "codescout"

    @property
    def state(self) -> AppState:
        return self.server.app_state  # type: ignore[attr-defined]

    def log_message(self, format: str, *args) -> None:
        logger.debug("%s " + format, self.address_string(), *args)

    # -- plumbing -------------------------------------------------------------

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("X-Index-Format", str(persist.FORMAT_VERSION))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send(status, {"error": message})

    def _read_json(self) -> dict | None:
        length = int(self.headers.get("Content-Length", "0") or "0")
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._error(400, "request body must be JSON")
            return None
        if not isinstance(payload, dict):
            self._error(400, "request body must be a JSON object")
            return None
        return payload

    def _require_query(self, payload: dict) -> str | None:
        query = payload.get("query")
        if not isinstance(query, str) or not query.strip():
            self._error(400, "a non-empty 'query' string is required")
            return None
        return query

    # -- routes ---------------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802 (stdlib handler naming)
        try:
            if self.path.rstrip("/") in ("", "/stats"):
                workspace = self.state.require_workspace()
                self._send(200, engine.workspace_stats(workspace))
            else:
                self._error(404, f"unknown path {self.path}")
        except IndexMissing as exc:
            self._error(409, str(exc))
        except CodeScoutError as exc:
            self._error(500, f"{type(exc).__name__}: {exc}")

    def do_POST(self) -> None:  # noqa: N802 (stdlib handler naming)
        payload = self._read_json()
        if payload is None:
            return
        try:
            if self.path == "/index":
                manifest = self.state.reindex()
                self._send(200, {"manifest": manifest})
            elif self.path == "/locate":
                self._handle_locate(payload, include_pack=False)
            elif self.path == "/context":
                self._handle_locate(payload, include_pack=True)
            elif self.path == "/answer":
                self._handle_answer(payload)
            else:
                self._error(404, f"unknown path {self.path}")
        except (IndexMissing, StaleIndex) as exc:
            self._error(409, f"{type(exc).__name__}: {exc}")
        except IndexCorrupt as exc:
            self._error(500, f"IndexCorrupt: {exc}")
        except (ReasonerUnavailable, MalformedAfterRetry) as exc:
            self._error(502, f"{type(exc).__name__}: {exc}")
        except CodeScoutError as exc:
            self._error(500, f"{type(exc).__name__}: {exc}")

    def _handle_locate(self, payload: dict, include_pack: bool) -> None:
        query = self._require_query(payload)
        if query is None:
            return
        top_k = payload.get("top_k")
        if top_k is not None and not isinstance(top_k, int):
            self._error(400, "'top_k' must be an integer when present")
            return
        state = self.state
        workspace = state.require_workspace()
        result = engine.locate(workspace, query, state.backend, state.config, top_k=top_k)
        if include_pack:
            result = {key: value for key, value in result.items() if key != "trace"}
        else:
            result = engine.locate_view(result)
        self._send(200, result)

    def _handle_answer(self, payload: dict) -> None:
        query = self._require_query(payload)
        if query is None:
            return
        state = self.state
        workspace = state.require_workspace()
        result = engine.answer(workspace, query, state.backend, state.config)
        self._send(200, result)


def make_server(state: AppState, host: str = "127.0.0.1", port: int = 8765) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.app_state = state  # type: ignore[attr-defined]
    return server


def serve(
    root: str,
    config: AppConfig,
    backend: ReasonerBackend,
    host: str = "127.0.0.1",
    port: int = 8765,
    index_dir: str | None = None,
    allow_stale: bool = False,
) -> None:
    """Load the index when present, then serve until interrupted."""
    workspace = None
    try:
        workspace = engine.load_workspace(root, config, index_dir=index_dir, allow_stale=allow_stale)
    except (IndexMissing, StaleIndex, IndexCorrupt) as exc:
        logger.warning("starting without an index (%s); POST /index to build one", exc)
    state = AppState(
        root=root,
        config=config,
        backend=backend,
        index_dir=index_dir,
        allow_stale=allow_stale,
        workspace=workspace,
    )
    server = make_server(state, host, port)
    print(f"serving {root} on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
