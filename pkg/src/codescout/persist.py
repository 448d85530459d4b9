"""On-disk index format: manifest plus four content-addressed sections.

An index directory holds ``manifest.json``, ``units.json``, ``graph.bin``,
``sparse.bin``, and ``dense.json``.  The manifest records a format
version, the snapshot hash, and a sha256 digest per section; loading
verifies all of them before deserializing anything.  Writing the same
snapshot twice produces byte-identical files, so re-indexing an
unchanged tree is a no-op at the content level.

The binary sections use length-prefixed records in sorted order.  All
integers are little-endian unsigned 32-bit; strings are UTF-8 with a
u32 length prefix.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

from .errors import IndexCorrupt, IndexMissing, StaleIndex
from .hybrid_index import DenseIndex, RepoIndices, SparseIndex
from .relation_graph import LAYERS, RelationEdge, RelationGraph, UnresolvedRef
from .repo_model import (
    CodeUnit,
    RepoSnapshot,
    SourceFile,
    UnitCatalog,
    UnitKind,
)

FORMAT_VERSION = 1
INDEX_DIR_NAME = ".codescout"

MANIFEST_NAME = "manifest.json"
UNITS_NAME = "units.json"
GRAPH_NAME = "graph.bin"
SPARSE_NAME = "sparse.bin"
DENSE_NAME = "dense.json"

_GRAPH_MAGIC = b"CSGR"
_SPARSE_MAGIC = b"CSSP"


def _canonical(value) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# binary primitives
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self, magic: bytes):
        self.parts: list[bytes] = [magic, struct.pack("<I", FORMAT_VERSION)]

    def u32(self, value: int) -> None:
        self.parts.append(struct.pack("<I", value))

    def f64(self, value: float) -> None:
        self.parts.append(struct.pack("<d", value))

    def text(self, value: str) -> None:
        raw = value.encode("utf-8")
        self.parts.append(struct.pack("<I", len(raw)))
        self.parts.append(raw)

    def blob(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, magic: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name
        if data[:4] != magic:
            raise IndexCorrupt(f"{name}: bad magic")
        self.pos = 4
        version = self.u32()
        if version != FORMAT_VERSION:
            raise IndexCorrupt(f"{name}: format version {version} unsupported")

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexCorrupt(f"{self.name}: truncated record")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def text(self) -> str:
        return self._take(self.u32()).decode("utf-8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise IndexCorrupt(f"{self.name}: trailing bytes")


# ---------------------------------------------------------------------------
# section encoders
# ---------------------------------------------------------------------------


def _encode_units(snapshot: RepoSnapshot, catalog: UnitCatalog) -> bytes:
    payload = {
        "root_path": snapshot.root_path,
        "grammar_id": snapshot.corpus_grammar_id,
        "snapshot_hash": snapshot.snapshot_hash,
        "include_globs": list(snapshot.include_globs),
        "exclude_globs": list(snapshot.exclude_globs),
        "diagnostics": list(snapshot.diagnostics),
        "directories": sorted(snapshot.directories),
        "files": [
            {
                "path": f.path,
                "line_count": f.line_count,
                "digest": f.content_digest,
                "module": f.module_path,
            }
            for f in snapshot.files
        ],
        "units": [
            {
                "id": u.unit_id,
                "kind": u.kind.value,
                "qualname": u.qualified_name,
                "file": u.file_path,
                "span": [u.span[0], u.span[1]],
                "signature": u.signature,
                "docstring": u.docstring,
                "line_count": u.line_count,
                "parent": u.parent_id,
                "bases": list(u.base_names),
                "sig_end": u.signature_end_line,
                "body_start": u.body_start_line,
                "degraded": u.parse_degraded,
            }
            for u in catalog.units
        ],
    }
    return _canonical(payload)


def _decode_units(data: bytes) -> tuple[RepoSnapshot, UnitCatalog]:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexCorrupt(f"units section unreadable: {exc}") from None
    snapshot = RepoSnapshot(
        root_path=payload["root_path"],
        files=tuple(
            SourceFile(
                path=f["path"],
                line_count=f["line_count"],
                content_digest=f["digest"],
                module_path=f["module"],
            )
            for f in payload["files"]
        ),
        directories=tuple(payload["directories"]),
        corpus_grammar_id=payload["grammar_id"],
        snapshot_hash=payload["snapshot_hash"],
        include_globs=tuple(payload["include_globs"]),
        exclude_globs=tuple(payload["exclude_globs"]),
        diagnostics=tuple(payload["diagnostics"]),
    )
    units = tuple(
        CodeUnit(
            unit_id=u["id"],
            kind=UnitKind(u["kind"]),
            qualified_name=u["qualname"],
            file_path=u["file"],
            span=(u["span"][0], u["span"][1]),
            signature=u["signature"],
            docstring=u["docstring"],
            line_count=u["line_count"],
            parent_id=u["parent"],
            base_names=tuple(u["bases"]),
            signature_end_line=u["sig_end"],
            body_start_line=u["body_start"],
            parse_degraded=u["degraded"],
        )
        for u in payload["units"]
    )
    by_id = {u.unit_id: u for u in units}
    by_file: dict[str, list[str]] = {}
    children: dict[str, list[str]] = {}
    for u in units:
        by_file.setdefault(u.file_path, []).append(u.unit_id)
        if u.parent_id is not None:
            children.setdefault(u.parent_id, []).append(u.unit_id)
    catalog = UnitCatalog(
        units=units,
        by_id=by_id,
        by_file={k: tuple(v) for k, v in by_file.items()},
        children={k: tuple(v) for k, v in children.items()},
    )
    return snapshot, catalog


def _encode_graph(graph: RelationGraph) -> bytes:
    w = _Writer(_GRAPH_MAGIC)
    w.u32(len(LAYERS))
    for layer in LAYERS:
        edges = graph.edges.get(layer, ())
        w.text(layer)
        w.u32(len(edges))
        for e in edges:
            w.text(e.src)
            w.text(e.dst)
            w.text(e.site[0])
            w.u32(e.site[1])
    w.u32(len(graph.unresolved))
    for ref in graph.unresolved:
        w.text(ref.site[0])
        w.u32(ref.site[1])
        w.text(ref.layer)
        w.text(ref.target)
    bases = sorted(graph.resolved_bases.items())
    w.u32(len(bases))
    for class_id, base_ids in bases:
        w.text(class_id)
        w.u32(len(base_ids))
        for base_id in base_ids:
            w.text(base_id)
    return w.blob()


def _decode_graph(data: bytes, unit_ids: frozenset[str]) -> RelationGraph:
    r = _Reader(data, _GRAPH_MAGIC, GRAPH_NAME)
    edges: dict[str, tuple[RelationEdge, ...]] = {}
    for _ in range(r.u32()):
        layer = r.text()
        layer_edges = []
        for _ in range(r.u32()):
            src = r.text()
            dst = r.text()
            site_path = r.text()
            site_line = r.u32()
            layer_edges.append(RelationEdge(src=src, dst=dst, layer=layer, site=(site_path, site_line)))
        edges[layer] = tuple(layer_edges)
    unresolved = []
    for _ in range(r.u32()):
        site_path = r.text()
        site_line = r.u32()
        layer = r.text()
        target = r.text()
        unresolved.append(UnresolvedRef(site=(site_path, site_line), layer=layer, target=target))
    resolved_bases: dict[str, tuple[str, ...]] = {}
    for _ in range(r.u32()):
        class_id = r.text()
        resolved_bases[class_id] = tuple(r.text() for _ in range(r.u32()))
    r.done()
    return RelationGraph(
        edges=edges,
        unresolved=tuple(unresolved),
        unit_ids=unit_ids,
        resolved_bases=resolved_bases,
    )


def _encode_sparse(sparse: dict[str, SparseIndex]) -> bytes:
    w = _Writer(_SPARSE_MAGIC)
    w.u32(len(sparse))
    for kind in sorted(sparse):
        index = sparse[kind]
        w.text(kind)
        w.u32(index.doc_count)
        w.f64(index.avg_doc_length)
        lengths = sorted(index.doc_lengths.items())
        w.u32(len(lengths))
        for unit_id, length in lengths:
            w.text(unit_id)
            w.u32(length)
        terms = sorted(index.postings.items())
        w.u32(len(terms))
        for term, postings in terms:
            w.text(term)
            w.u32(len(postings))
            for unit_id, tf in postings:
                w.text(unit_id)
                w.u32(tf)
    return w.blob()


def _decode_sparse(data: bytes) -> dict[str, SparseIndex]:
    r = _Reader(data, _SPARSE_MAGIC, SPARSE_NAME)
    out: dict[str, SparseIndex] = {}
    for _ in range(r.u32()):
        kind = r.text()
        doc_count = r.u32()
        avg_doc_length = r.f64()
        doc_lengths: dict[str, int] = {}
        for _ in range(r.u32()):
            unit_id = r.text()
            doc_lengths[unit_id] = r.u32()
        postings: dict[str, tuple[tuple[str, int], ...]] = {}
        for _ in range(r.u32()):
            term = r.text()
            entries = tuple((r.text(), r.u32()) for _ in range(r.u32()))
            postings[term] = entries
        out[kind] = SparseIndex(
            postings=postings,
            doc_lengths=doc_lengths,
            avg_doc_length=avg_doc_length,
            doc_count=doc_count,
            granularity=(kind,),
        )
    r.done()
    return out


def _encode_dense(indices: RepoIndices) -> bytes:
    dense = indices.dense
    payload = {
        "degraded": indices.degraded,
        "provider_id": dense.provider_id if dense else None,
        "dim": dense.dim if dense else 0,
        "ids": sorted(dense.vectors) if dense else [],
        "vectors": [list(dense.vectors[uid]) for uid in sorted(dense.vectors)] if dense else [],
    }
    return _canonical(payload)


def _decode_dense(data: bytes) -> tuple[DenseIndex | None, bool]:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexCorrupt(f"dense section unreadable: {exc}") from None
    degraded = bool(payload["degraded"])
    if payload["provider_id"] is None:
        return None, degraded
    vectors = {
        uid: tuple(vec) for uid, vec in zip(payload["ids"], payload["vectors"])
    }
    return DenseIndex(vectors=vectors, dim=payload["dim"], provider_id=payload["provider_id"]), degraded


# ---------------------------------------------------------------------------
# manifest and top-level API
# ---------------------------------------------------------------------------


def write_index(
    index_dir: str | Path,
    snapshot: RepoSnapshot,
    catalog: UnitCatalog,
    graph: RelationGraph,
    indices: RepoIndices,
) -> dict:
    """Serialize everything into ``index_dir`` and return the manifest."""
    directory = Path(index_dir)
    directory.mkdir(parents=True, exist_ok=True)
    sections = {
        UNITS_NAME: _encode_units(snapshot, catalog),
        GRAPH_NAME: _encode_graph(graph),
        SPARSE_NAME: _encode_sparse(indices.sparse),
        DENSE_NAME: _encode_dense(indices),
    }
    manifest = {
        "format_version": FORMAT_VERSION,
        "snapshot_hash": snapshot.snapshot_hash,
        "grammar_id": snapshot.corpus_grammar_id,
        "root_path": snapshot.root_path,
        "file_count": len(snapshot.files),
        "unit_count": len(catalog.units),
        "degraded": indices.degraded,
        "sections": {name: _digest(blob) for name, blob in sections.items()},
    }
    for name, blob in sections.items():
        (directory / name).write_bytes(blob)
    (directory / MANIFEST_NAME).write_bytes(_canonical(manifest))
    return manifest


def read_manifest(index_dir: str | Path) -> dict:
    path = Path(index_dir) / MANIFEST_NAME
    if not path.is_file():
        raise IndexMissing(str(index_dir))
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexCorrupt(f"manifest unreadable: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IndexCorrupt(
            f"manifest format version {manifest.get('format_version')!r} unsupported"
        )
    return manifest


def load_index(
    index_dir: str | Path,
) -> tuple[RepoSnapshot, UnitCatalog, RelationGraph, RepoIndices, dict]:
    """Load and verify an index directory.

    Every section digest must match the manifest; a mismatch raises
    IndexCorrupt rather than returning partially trusted data.
    """
    directory = Path(index_dir)
    manifest = read_manifest(directory)
    blobs: dict[str, bytes] = {}
    for name, expected in manifest["sections"].items():
        path = directory / name
        if not path.is_file():
            raise IndexCorrupt(f"missing section {name}")
        blob = path.read_bytes()
        if _digest(blob) != expected:
            raise IndexCorrupt(f"section {name} digest mismatch")
        blobs[name] = blob
    snapshot, catalog = _decode_units(blobs[UNITS_NAME])
    graph = _decode_graph(blobs[GRAPH_NAME], frozenset(catalog.by_id))
    sparse = _decode_sparse(blobs[SPARSE_NAME])
    dense, degraded = _decode_dense(blobs[DENSE_NAME])
    indices = RepoIndices(sparse=sparse, dense=dense, degraded=degraded)
    return snapshot, catalog, graph, indices, manifest


def check_freshness(manifest: dict, current_snapshot_hash: str, allow_stale: bool) -> bool:
    """True when the index matches the tree; StaleIndex when it must not be used."""
    fresh = manifest["snapshot_hash"] == current_snapshot_hash
    if not fresh and not allow_stale:
        raise StaleIndex(
            f"index built from snapshot {manifest['snapshot_hash'][:12]} "
            f"but tree is {current_snapshot_hash[:12]}"
        )
    return fresh
