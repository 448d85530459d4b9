"""Read-only scouting tools.

Both tools answer questions about the repository without exposing file
content: the traversal reports names, sizes and unit summaries straight
from the parsed model, and the search reports match counts and positions
but never the matched text itself.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import PurePosixPath

from .errors import InvalidPattern, PathNotFound, PathOutsideSnapshot
from .repo_model import CodeUnit, RepoSnapshot, UnitCatalog, UnitKind, read_file_text

DEFAULT_LISTING_CAP = 500
DEFAULT_SEARCH_CAP = 10_000


@dataclass(frozen=True)
class DirEntry:
    name: str  # path relative to the listing root
    kind: str  # "file" | "dir"
    line_count: int | None
    unit_counts: dict[str, int] | None


@dataclass(frozen=True)
class DirListing:
    path: str
    entries: tuple[DirEntry, ...]
    truncated: bool


@dataclass(frozen=True)
class FileMatches:
    path: str
    match_count: int
    unit_counts: dict[str, int]  # unit id -> matches attributed to it


@dataclass(frozen=True)
class SearchMatchReport:
    pattern: str
    per_file: tuple[FileMatches, ...]
    total_matches: int
    truncated: bool  # capped; reported instead of raised


def _normalize_rel_path(path: str) -> str:
    cleaned = path.strip()
    if cleaned in ("", "."):
        return ""
    pure = PurePosixPath(cleaned)
    if pure.is_absolute() or ".." in pure.parts:
        raise PathOutsideSnapshot(path)
    return pure.as_posix()


def _unit_summary(catalog: UnitCatalog, file_path: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for unit_id in catalog.by_file.get(file_path, ()):
        unit = catalog.by_id[unit_id]
        if unit.kind is UnitKind.FILE:
            continue
        counts[unit.kind.value] = counts.get(unit.kind.value, 0) + 1
    return counts


def directory_traverse(
    snapshot: RepoSnapshot,
    catalog: UnitCatalog,
    path: str = "",
    max_depth: int = 1,
    entry_cap: int = DEFAULT_LISTING_CAP,
) -> DirListing:
    """List directories and files below ``path`` up to ``max_depth``.

    Entries come from the snapshot, not the filesystem, so the listing is
    stable for the lifetime of the snapshot.  Entries are name-sorted and
    cut at ``entry_cap`` with the truncation flag set.
    """
    rel = _normalize_rel_path(path)
    dirs = set(snapshot.directories)
    if rel not in dirs:
        raise PathNotFound(path)

    prefix = f"{rel}/" if rel else ""
    entries: list[DirEntry] = []
    for d in snapshot.directories:
        if not d or d == rel:
            continue
        if prefix and not d.startswith(prefix):
            continue
        below = d[len(prefix):] if prefix else d
        if below.count("/") + 1 <= max_depth:
            entries.append(DirEntry(name=below, kind="dir", line_count=None, unit_counts=None))
    for f in snapshot.files:
        if prefix and not f.path.startswith(prefix):
            continue
        below = f.path[len(prefix):]
        if below.count("/") + 1 <= max_depth:
            entries.append(
                DirEntry(
                    name=below,
                    kind="file",
                    line_count=f.line_count,
                    unit_counts=_unit_summary(catalog, f.path),
                )
            )
    entries.sort(key=lambda e: e.name)
    truncated = len(entries) > entry_cap
    return DirListing(path=rel, entries=tuple(entries[:entry_cap]), truncated=truncated)


def _innermost_unit(units: list[CodeUnit], line: int) -> CodeUnit | None:
    best: CodeUnit | None = None
    for unit in units:
        start, end = unit.span
        if unit.line_count == 0 or not (start <= line <= end):
            continue
        if best is None or unit.line_count < best.line_count:
            best = unit
    return best


def _match_scope(snapshot: RepoSnapshot, scope_globs: tuple[str, ...] | None) -> list[str]:
    if not scope_globs:
        return [f.path for f in snapshot.files]
    from .repo_model import _GlobSet  # shared compiled-glob helper

    globs = _GlobSet(tuple(scope_globs))
    return [f.path for f in snapshot.files if globs.matches(f.path)]


def codebase_search(
    snapshot: RepoSnapshot,
    catalog: UnitCatalog,
    pattern: str,
    scope_globs: tuple[str, ...] | None = None,
    max_total: int = DEFAULT_SEARCH_CAP,
) -> SearchMatchReport:
    """Count regex matches per file and attribute them to enclosing units.

    The scan is line-oriented and the report carries counts only; matched
    text never leaves this function.  Patterns are case-sensitive unless
    they opt in with an inline ``(?i)`` flag.  Reaching ``max_total``
    stops the scan and marks the report truncated.
    """
    try:
        compiled = re.compile(pattern)
    except re.error as exc:
        raise InvalidPattern(f"{pattern!r}: {exc}") from exc

    per_file: list[FileMatches] = []
    total = 0
    truncated = False
    for path in _match_scope(snapshot, scope_globs):
        if truncated:
            break
        units = [catalog.by_id[uid] for uid in catalog.by_file.get(path, ())]
        file_unit = next((u for u in units if u.kind is UnitKind.FILE), None)
        inner_units = [u for u in units if u.kind is not UnitKind.FILE]
        text = read_file_text(snapshot, path)
        count = 0
        unit_counts: dict[str, int] = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            hits = sum(1 for _ in compiled.finditer(line))
            if not hits:
                continue
            unit = _innermost_unit(inner_units, line_no) or file_unit
            if unit is not None:
                unit_counts[unit.unit_id] = unit_counts.get(unit.unit_id, 0) + hits
            count += hits
            if total + count >= max_total:
                overflow = total + count - max_total
                count -= overflow
                if unit is not None and overflow:
                    unit_counts[unit.unit_id] -= overflow
                    if unit_counts[unit.unit_id] <= 0:
                        del unit_counts[unit.unit_id]
                truncated = True
                break
        if count:
            per_file.append(FileMatches(path=path, match_count=count, unit_counts=unit_counts))
            total += count
    return SearchMatchReport(
        pattern=pattern,
        per_file=tuple(per_file),
        total_matches=total,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# candidate profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateProfile:
    unit_id: str
    provenance: dict[str, object]
    signature: str
    base_names: tuple[str, ...]
    doc_first_line: str
    relation_notes: tuple[str, ...]
    cost_metric: int
    text: str


def _format_provenance(provenance: dict[str, object]) -> str:
    parts = []
    for key in sorted(provenance):
        value = provenance[key]
        if isinstance(value, float):
            parts.append(f"{key}={value:.4f}")
        else:
            parts.append(f"{key}={value}")
    return ", ".join(parts) if parts else "(none)"


def render_candidate_profile(
    unit: CodeUnit,
    provenance: dict[str, object],
    relations: tuple[str, ...] = (),
) -> CandidateProfile:
    """Metadata card shown to the reasoner: identity, provenance, cost."""
    from .repo_model import doc_first_line

    signature = " ".join(part.strip() for part in unit.signature.splitlines() if part.strip())
    doc = doc_first_line(unit)
    lines = [
        f"unit: {unit.unit_id}",
        f"kind: {unit.kind.value}",
        f"provenance: {_format_provenance(provenance)}",
        f"signature: {signature or '(none)'}",
    ]
    if unit.kind is UnitKind.CLASS:
        lines.append(f"bases: {', '.join(unit.base_names) or '(none)'}")
    lines.append(f"doc: {doc}")
    if relations:
        lines.append(f"relations: {'; '.join(relations)}")
    lines.append(f"lines: {unit.line_count}")
    return CandidateProfile(
        unit_id=unit.unit_id,
        provenance=dict(provenance),
        signature=signature,
        base_names=unit.base_names,
        doc_first_line=doc,
        relation_notes=tuple(relations),
        cost_metric=unit.line_count,
        text="\n".join(lines),
    )
