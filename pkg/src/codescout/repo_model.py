"""Repository scanning and the hierarchical unit model.

A snapshot records which files exist and what they hash to; a catalog
records the units parsed out of them (File, Class, Function and
Documentation nodes with spans, signatures and docstrings, never bodies).
Everything downstream consumes these two structures, so both are
immutable and deterministically ordered.
"""

from __future__ import annotations

import ast
import hashlib
import logging
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path, PurePosixPath

from .errors import RootNotFound

logger = logging.getLogger(__name__)

GRAMMAR_ID = "python-ast/1"

DOC_SUFFIXES = (".md", ".rst", ".txt")

DEFAULT_INCLUDE_GLOBS = ("**/*.py", "**/*.md", "**/*.rst", "**/*.txt")
DEFAULT_EXCLUDE_GLOBS = ()

# Version-control metadata is never worth indexing, independent of the
# user-supplied exclude list.
_VCS_DIRS = frozenset({".git", ".hg", ".svn"})

# Function units nested deeper than this many enclosing functions are
# recorded as stubs and not descended into.
_MAX_FUNCTION_DEPTH = 3

_BINARY_SNIFF_BYTES = 8192


class UnitKind(str, Enum):
    FILE = "File"
    CLASS = "Class"
    FUNCTION = "Function"
    DOCUMENTATION = "Documentation"


# ---------------------------------------------------------------------------
# snapshot types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceFile:
    path: str  # repo-relative, posix separators
    line_count: int
    content_digest: str
    module_path: str


@dataclass(frozen=True)
class RepoSnapshot:
    root_path: str
    files: tuple[SourceFile, ...]
    directories: tuple[str, ...]  # repo-relative; "" is the root itself
    corpus_grammar_id: str
    snapshot_hash: str
    include_globs: tuple[str, ...]
    exclude_globs: tuple[str, ...]
    diagnostics: tuple[dict, ...] = ()

    def file_map(self) -> dict[str, SourceFile]:
        return {f.path: f for f in self.files}


@dataclass(frozen=True)
class CodeUnit:
    """One node of the unit tree.

    Spans are 1-based and inclusive; an empty file carries the degenerate
    span (1, 0) with line_count 0.  ``signature_end_line`` and
    ``body_start_line`` bracket the metadata region: lines from
    ``body_start_line`` through ``span[1]`` are implementation interior
    and must never appear in scouting output.
    """

    unit_id: str
    kind: UnitKind
    qualified_name: str
    file_path: str
    span: tuple[int, int]
    signature: str
    docstring: str | None
    line_count: int
    parent_id: str | None
    base_names: tuple[str, ...] = ()
    signature_end_line: int = 0
    body_start_line: int = 0
    parse_degraded: bool = False


@dataclass(frozen=True)
class RepoStats:
    file_count: int
    mean_dir_depth: float
    total_lines: int
    unit_counts: dict[str, int]


# ---------------------------------------------------------------------------
# relation facts (consumed by relation_graph; extracted here so the graph
# builder never reopens files)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImportFact:
    line: int
    kind: str  # "module" | "from" | "star"
    module: str  # textual module reference ("" for bare relative imports)
    level: int  # leading dots on a relative import
    name: str | None  # imported symbol for from-imports
    alias: str  # local binding name ("" for star imports)


@dataclass(frozen=True)
class CallFact:
    scope_id: str  # unit id of the enclosing Function or File
    line: int
    callee: tuple[str, ...] | None  # dotted name parts; None when dynamic
    text: str  # textual form for unresolved reporting


@dataclass(frozen=True)
class AssignFact:
    scope_id: str
    line: int
    target: tuple[str, ...]  # ("self", "loader") or ("rule",)
    ctor: tuple[str, ...] | None  # dotted callee when RHS is a plain call


@dataclass(frozen=True)
class FileFacts:
    path: str
    imports: tuple[ImportFact, ...]
    calls: tuple[CallFact, ...]
    assigns: tuple[AssignFact, ...]


@dataclass(frozen=True)
class ParsedFile:
    units: tuple[CodeUnit, ...]
    facts: FileFacts


# ---------------------------------------------------------------------------
# glob matching (fnmatch has no "**", so patterns are compiled here)
# ---------------------------------------------------------------------------


def _glob_to_regex(pattern: str) -> re.Pattern[str]:
    out = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "*":
            if pattern[i : i + 3] == "**/":
                out.append("(?:.*/)?")
                i += 3
                continue
            if pattern[i : i + 2] == "**":
                out.append(".*")
                i += 2
                continue
            out.append("[^/]*")
        elif ch == "?":
            out.append("[^/]")
        else:
            out.append(re.escape(ch))
        i += 1
    return re.compile("".join(out) + r"\Z")


class _GlobSet:
    def __init__(self, patterns: tuple[str, ...]):
        self._regexes = [_glob_to_regex(p) for p in patterns]

    def matches(self, rel_path: str) -> bool:
        return any(r.match(rel_path) for r in self._regexes)


# ---------------------------------------------------------------------------
# scanning
# ---------------------------------------------------------------------------


def module_path_for(rel_path: str) -> str:
    """Dotted module path for a repo-relative file path."""
    p = PurePosixPath(rel_path)
    parts = list(p.parts)
    stem = p.name
    for suffix in (".py",) + DOC_SUFFIXES:
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    parts[-1] = stem
    if parts[-1] == "__init__":
        parts = parts[:-1]
    return ".".join(parts)


def _is_binary(raw: bytes) -> bool:
    return b"\x00" in raw[:_BINARY_SNIFF_BYTES]


def scan_repository(
    root: str | Path,
    include_globs: tuple[str, ...] | None = None,
    exclude_globs: tuple[str, ...] | None = None,
) -> RepoSnapshot:
    """Walk ``root`` and record every file matching the glob filters.

    Unreadable files are skipped with a diagnostic, binary files (NUL in
    the first 8 KiB) are skipped, and symlinks resolving outside the root
    are skipped.  The result is path-sorted and content-addressed.
    """
    root_dir = Path(root)
    if not root_dir.is_dir():
        raise RootNotFound(f"repository root not found: {root}")
    resolved_root = root_dir.resolve()

    includes = tuple(include_globs) if include_globs is not None else DEFAULT_INCLUDE_GLOBS
    excludes = tuple(exclude_globs) if exclude_globs is not None else DEFAULT_EXCLUDE_GLOBS
    include_set = _GlobSet(includes)
    exclude_set = _GlobSet(excludes)

    files: list[SourceFile] = []
    directories: set[str] = {""}
    diagnostics: list[dict] = []

    for dirpath, dirnames, filenames in os.walk(root_dir, followlinks=False):
        dirnames[:] = sorted(d for d in dirnames if d not in _VCS_DIRS)
        rel_dir = Path(dirpath).relative_to(root_dir).as_posix()
        if rel_dir == ".":
            rel_dir = ""
        else:
            directories.add(rel_dir)
        for name in sorted(filenames):
            rel = f"{rel_dir}/{name}" if rel_dir else name
            if not include_set.matches(rel) or exclude_set.matches(rel):
                continue
            full = Path(dirpath) / name
            if full.is_symlink():
                try:
                    target = full.resolve()
                except OSError:
                    diagnostics.append({"path": rel, "reason": "unresolvable symlink"})
                    continue
                if not target.is_relative_to(resolved_root):
                    diagnostics.append({"path": rel, "reason": "symlink outside root"})
                    continue
            try:
                raw = full.read_bytes()
            except OSError as exc:
                logger.warning("skipping unreadable file %s: %s", rel, exc)
                diagnostics.append({"path": rel, "reason": f"unreadable: {exc.__class__.__name__}"})
                continue
            if _is_binary(raw):
                diagnostics.append({"path": rel, "reason": "binary content"})
                continue
            text = raw.decode("utf-8", errors="replace")
            files.append(
                SourceFile(
                    path=rel,
                    line_count=len(text.splitlines()),
                    content_digest=hashlib.sha256(raw).hexdigest(),
                    module_path=module_path_for(rel),
                )
            )

    files.sort(key=lambda f: f.path)
    hasher = hashlib.sha256()
    hasher.update(GRAMMAR_ID.encode())
    hasher.update(repr((includes, excludes)).encode())
    for f in files:
        hasher.update(f.path.encode())
        hasher.update(f.content_digest.encode())

    return RepoSnapshot(
        root_path=str(root_dir),
        files=tuple(files),
        directories=tuple(sorted(directories)),
        corpus_grammar_id=GRAMMAR_ID,
        snapshot_hash=hasher.hexdigest(),
        include_globs=includes,
        exclude_globs=excludes,
        diagnostics=tuple(diagnostics),
    )


def read_file_text(snapshot: RepoSnapshot, path: str) -> str:
    full = Path(snapshot.root_path) / path
    return full.read_bytes().decode("utf-8", errors="replace")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _dotted_parts(expr: ast.expr) -> tuple[str, ...] | None:
    parts: list[str] = []
    node = expr
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return tuple(reversed(parts))
    return None


class _UnitIdAllocator:
    """Keeps unit ids unique when a local name is defined twice."""

    def __init__(self) -> None:
        self._seen: dict[str, int] = {}

    def allocate(self, base: str) -> str:
        n = self._seen.get(base, 0) + 1
        self._seen[base] = n
        return base if n == 1 else f"{base}#{n}"


class _PythonFileParser:
    def __init__(self, source_file: SourceFile, text: str):
        self.file = source_file
        self.text = text
        self.lines = text.splitlines()
        self.units: list[CodeUnit] = []
        self.imports: list[ImportFact] = []
        self.calls: list[CallFact] = []
        self.assigns: list[AssignFact] = []
        self._ids = _UnitIdAllocator()

    # -- unit helpers -----------------------------------------------------

    def _file_unit(self, docstring: str | None, degraded: bool = False) -> CodeUnit:
        lc = self.file.line_count
        span = (1, lc) if lc else (1, 0)
        return CodeUnit(
            unit_id=self.file.path,
            kind=UnitKind.FILE,
            qualified_name=self.file.module_path,
            file_path=self.file.path,
            span=span,
            signature="",
            docstring=docstring,
            line_count=lc,
            parent_id=None,
            signature_end_line=0,
            body_start_line=1,
            parse_degraded=degraded,
        )

    def _qualify(self, local_name: str) -> str:
        if self.file.module_path:
            return f"{self.file.module_path}.{local_name}"
        return local_name

    def _signature_for(self, node: ast.stmt, span_start: int, sig_end: int) -> str:
        body = getattr(node, "body", None)
        first = body[0] if body else None
        if first is not None and first.lineno == node.lineno:
            # one-liner: cut the header at the body's column
            line = self.lines[node.lineno - 1]
            return line[: first.col_offset].rstrip()
        return "\n".join(self.lines[span_start - 1 : sig_end]).rstrip()

    def _declaration_unit(
        self,
        node: ast.ClassDef | ast.FunctionDef | ast.AsyncFunctionDef,
        kind: UnitKind,
        parent_id: str,
        local_qualname: str,
    ) -> CodeUnit:
        decorators = getattr(node, "decorator_list", [])
        span_start = min([node.lineno] + [d.lineno for d in decorators])
        span_end = node.end_lineno or node.lineno
        first = node.body[0]
        sig_end = first.lineno - 1 if first.lineno > node.lineno else node.lineno
        docstring = ast.get_docstring(node, clean=True)
        body_start = sig_end + 1
        if docstring is not None:
            doc_node = node.body[0]
            body_start = (doc_node.end_lineno or doc_node.lineno) + 1
        bases: tuple[str, ...] = ()
        if isinstance(node, ast.ClassDef):
            bases = tuple(ast.unparse(b) for b in node.bases)
        unit_id = self._ids.allocate(f"{self.file.path}::{local_qualname}")
        return CodeUnit(
            unit_id=unit_id,
            kind=kind,
            qualified_name=self._qualify(local_qualname),
            file_path=self.file.path,
            span=(span_start, span_end),
            signature=self._signature_for(node, node.lineno, sig_end),
            docstring=docstring,
            line_count=span_end - span_start + 1,
            parent_id=parent_id,
            base_names=bases,
            signature_end_line=sig_end,
            body_start_line=body_start,
        )

    def _doc_unit(self, doc_node: ast.Expr, docstring: str, parent_id: str) -> CodeUnit:
        start = doc_node.lineno
        end = doc_node.end_lineno or start
        return CodeUnit(
            unit_id=self._ids.allocate(f"{self.file.path}::__doc__"),
            kind=UnitKind.DOCUMENTATION,
            qualified_name=self._qualify("__doc__"),
            file_path=self.file.path,
            span=(start, end),
            signature="",
            docstring=docstring,
            line_count=end - start + 1,
            parent_id=parent_id,
            signature_end_line=start - 1,
            body_start_line=end + 1,
        )

    # -- fact helpers ------------------------------------------------------

    def _record_import(self, node: ast.Import | ast.ImportFrom) -> None:
        if isinstance(node, ast.Import):
            for alias in node.names:
                self.imports.append(
                    ImportFact(
                        line=node.lineno,
                        kind="module",
                        module=alias.name,
                        level=0,
                        name=None,
                        alias=alias.asname or alias.name.split(".")[0],
                    )
                )
            return
        module = node.module or ""
        for alias in node.names:
            if alias.name == "*":
                self.imports.append(
                    ImportFact(line=node.lineno, kind="star", module=module, level=node.level, name=None, alias="")
                )
            else:
                self.imports.append(
                    ImportFact(
                        line=node.lineno,
                        kind="from",
                        module=module,
                        level=node.level,
                        name=alias.name,
                        alias=alias.asname or alias.name,
                    )
                )

    def _record_call(self, node: ast.Call, scope_id: str) -> None:
        callee = _dotted_parts(node.func)
        text = ast.unparse(node.func)
        if len(text) > 120:
            text = text[:120]
        self.calls.append(CallFact(scope_id=scope_id, line=node.lineno, callee=callee, text=text))

    def _record_assign(self, node: ast.stmt, scope_id: str) -> None:
        if isinstance(node, ast.Assign):
            targets = node.targets
            value: ast.expr | None = node.value
        elif isinstance(node, ast.AnnAssign):
            targets = [node.target]
            value = node.value
        elif isinstance(node, ast.AugAssign):
            targets = [node.target]
            value = None
        else:
            return
        ctor: tuple[str, ...] | None = None
        if isinstance(value, ast.Call):
            ctor = _dotted_parts(value.func)
        flat_targets: list[ast.expr] = []
        for t in targets:
            if isinstance(t, (ast.Tuple, ast.List)):
                flat_targets.extend(t.elts)
            else:
                flat_targets.append(t)
        for t in flat_targets:
            parts = _dotted_parts(t)
            if parts is None:
                continue
            # tuple unpacking never binds a constructor result to one name
            effective_ctor = ctor if len(flat_targets) == 1 else None
            self.assigns.append(
                AssignFact(scope_id=scope_id, line=node.lineno, target=parts, ctor=effective_ctor)
            )

    # -- traversal ---------------------------------------------------------

    def _walk_expressions(self, node: ast.AST, scope_id: str) -> None:
        """Collect call facts under ``node`` without crossing scope edges."""
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                continue
            if isinstance(child, ast.Call):
                self._record_call(child, scope_id)
            if isinstance(child, (ast.Assign, ast.AnnAssign, ast.AugAssign)):
                self._record_assign(child, scope_id)
            self._walk_expressions(child, scope_id)

    def _walk_block(
        self,
        stmts: list[ast.stmt],
        parent_unit: CodeUnit,
        scope_id: str,
        qual_prefix: str,
        function_depth: int,
    ) -> None:
        for stmt in stmts:
            if isinstance(stmt, (ast.Import, ast.ImportFrom)):
                self._record_import(stmt)
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                local = f"{qual_prefix}{stmt.name}"
                unit = self._declaration_unit(stmt, UnitKind.FUNCTION, parent_unit.unit_id, local)
                self.units.append(unit)
                if function_depth + 1 <= _MAX_FUNCTION_DEPTH:
                    self._walk_block(stmt.body, unit, unit.unit_id, f"{local}.", function_depth + 1)
                continue
            if isinstance(stmt, ast.ClassDef):
                local = f"{qual_prefix}{stmt.name}"
                unit = self._declaration_unit(stmt, UnitKind.CLASS, parent_unit.unit_id, local)
                self.units.append(unit)
                self._walk_block(stmt.body, unit, scope_id, f"{local}.", function_depth)
                continue
            if isinstance(stmt, (ast.Assign, ast.AnnAssign, ast.AugAssign)):
                self._record_assign(stmt, scope_id)
            self._walk_expressions(stmt, scope_id)

    def parse(self) -> ParsedFile:
        try:
            tree = ast.parse(self.text)
        except (SyntaxError, ValueError):
            logger.warning("parse degraded for %s", self.file.path)
            file_unit = self._file_unit(docstring=None, degraded=True)
            return ParsedFile(
                units=(file_unit,),
                facts=FileFacts(path=self.file.path, imports=(), calls=(), assigns=()),
            )

        docstring = ast.get_docstring(tree, clean=True)
        file_unit = self._file_unit(docstring)
        self.units.append(file_unit)
        if docstring is not None and tree.body:
            first = tree.body[0]
            if isinstance(first, ast.Expr):
                self.units.append(self._doc_unit(first, docstring, file_unit.unit_id))

        # class bodies execute at import time, so class-level call sites are
        # attributed to the file scope alongside module-level statements
        self._walk_block(tree.body, file_unit, file_unit.unit_id, "", 0)
        return ParsedFile(
            units=tuple(self.units),
            facts=FileFacts(
                path=self.file.path,
                imports=tuple(self.imports),
                calls=tuple(self.calls),
                assigns=tuple(self.assigns),
            ),
        )


def _parse_doc_file(source_file: SourceFile, text: str) -> ParsedFile:
    lines = text.splitlines()
    lc = len(lines)
    span = (1, lc) if lc else (1, 0)
    first_line = lines[0].strip() if lines else ""
    file_unit = CodeUnit(
        unit_id=source_file.path,
        kind=UnitKind.FILE,
        qualified_name=source_file.module_path,
        file_path=source_file.path,
        span=span,
        signature="",
        docstring=first_line or None,
        line_count=lc,
        parent_id=None,
        signature_end_line=0,
        body_start_line=1,
    )
    units = [file_unit]
    if lc:
        units.append(
            CodeUnit(
                unit_id=f"{source_file.path}::__doc__",
                kind=UnitKind.DOCUMENTATION,
                qualified_name=f"{source_file.module_path}.__doc__",
                file_path=source_file.path,
                span=span,
                signature="",
                docstring=first_line or None,
                line_count=lc,
                parent_id=file_unit.unit_id,
                signature_end_line=0,
                body_start_line=2,
            )
        )
    return ParsedFile(
        units=tuple(units),
        facts=FileFacts(path=source_file.path, imports=(), calls=(), assigns=()),
    )


def parse_file(source_file: SourceFile, text: str) -> ParsedFile:
    """Parse one file into units plus the relation facts found in it."""
    if source_file.path.endswith(DOC_SUFFIXES):
        return _parse_doc_file(source_file, text)
    return _PythonFileParser(source_file, text).parse()


def parse_units(source_file: SourceFile, text: str) -> list[CodeUnit]:
    return list(parse_file(source_file, text).units)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitCatalog:
    """Lookup structure over every unit in a snapshot."""

    units: tuple[CodeUnit, ...]
    by_id: dict[str, CodeUnit] = field(repr=False, default_factory=dict)
    by_file: dict[str, tuple[str, ...]] = field(repr=False, default_factory=dict)
    children: dict[str, tuple[str, ...]] = field(repr=False, default_factory=dict)

    @staticmethod
    def build(parsed: dict[str, ParsedFile]) -> "UnitCatalog":
        ordered: list[CodeUnit] = []
        for path in sorted(parsed):
            ordered.extend(parsed[path].units)
        by_id = {u.unit_id: u for u in ordered}
        by_file: dict[str, list[str]] = {}
        children: dict[str, list[str]] = {}
        for u in ordered:
            by_file.setdefault(u.file_path, []).append(u.unit_id)
            if u.parent_id is not None:
                children.setdefault(u.parent_id, []).append(u.unit_id)
        return UnitCatalog(
            units=tuple(ordered),
            by_id=by_id,
            by_file={k: tuple(v) for k, v in by_file.items()},
            children={k: tuple(v) for k, v in children.items()},
        )

    def get(self, unit_id: str) -> CodeUnit | None:
        return self.by_id.get(unit_id)

    def child_count(self, unit_id: str) -> int:
        return len(self.children.get(unit_id, ()))

    def ancestors(self, unit_id: str) -> list[str]:
        out: list[str] = []
        unit = self.by_id.get(unit_id)
        while unit is not None and unit.parent_id is not None:
            out.append(unit.parent_id)
            unit = self.by_id.get(unit.parent_id)
        return out


def build_catalog(snapshot: RepoSnapshot) -> tuple[UnitCatalog, dict[str, FileFacts]]:
    """Parse every file in the snapshot once, returning catalog and facts."""
    parsed: dict[str, ParsedFile] = {}
    for f in snapshot.files:
        text = read_file_text(snapshot, f.path)
        parsed[f.path] = parse_file(f, text)
    catalog = UnitCatalog.build(parsed)
    facts = {path: pf.facts for path, pf in parsed.items()}
    return catalog, facts


# ---------------------------------------------------------------------------
# rendering and stats
# ---------------------------------------------------------------------------


def _collapse(text: str) -> str:
    return " ".join(part.strip() for part in text.splitlines() if part.strip())


def doc_first_line(unit: CodeUnit) -> str:
    if not unit.docstring:
        return "(none)"
    stripped = unit.docstring.strip()
    return stripped.splitlines()[0] if stripped else "(none)"


def render_skeleton(unit: CodeUnit, child_count: int | None = None) -> str:
    """Five-line metadata profile for a unit; never includes body lines."""
    if unit.kind is UnitKind.FILE:
        kind_text = f"File ({child_count} children)" if child_count is not None else "File"
        header = unit.unit_id
        middle = f"children: {child_count if child_count is not None else 0}"
        kind_line = kind_text
    else:
        header = unit.qualified_name
        kind_line = unit.kind.value
        middle = f"signature: {_collapse(unit.signature) or '(none)'}"
    lines = [
        f"name: {header}",
        f"kind: {kind_line}",
        middle,
        f"span: {unit.span[0]}-{unit.span[1]} ({unit.line_count} lines)",
        f"doc: {doc_first_line(unit)}",
    ]
    return "\n".join(lines)


def compute_repo_stats(snapshot: RepoSnapshot, catalog: UnitCatalog) -> RepoStats:
    file_count = len(snapshot.files)
    depths = [len(PurePosixPath(f.path).parts) - 1 for f in snapshot.files]
    mean_depth = sum(depths) / file_count if file_count else 0.0
    counts: dict[str, int] = {}
    for u in catalog.units:
        counts[u.kind.value] = counts.get(u.kind.value, 0) + 1
    return RepoStats(
        file_count=file_count,
        mean_dir_depth=mean_depth,
        total_lines=sum(f.line_count for f in snapshot.files),
        unit_counts=counts,
    )


def read_unit_body(snapshot: RepoSnapshot, unit: CodeUnit) -> str:
    """Full source text of a unit's span; the only body accessor."""
    if unit.line_count == 0:
        return ""
    text = read_file_text(snapshot, unit.file_path)
    lines = text.splitlines()
    return "\n".join(lines[unit.span[0] - 1 : unit.span[1]])
