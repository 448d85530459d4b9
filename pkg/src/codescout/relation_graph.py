"""Static relation graph over a parsed snapshot.

Three layers are built from the facts extracted at parse time, so no file
is reopened here:

* dependency: file -> file, one edge per resolved import statement
* inheritance: class -> class, textual bases resolved through imports
* call: function -> function (or file -> function for module-level sites)

Resolution is two-stage.  A module map fixes the dotted-module namespace
first; after that each layer resolves names through a per-file symbol
table (aliases, from-imports) plus a deliberately narrow type inference:
constructor results bound to ``self.X`` or to a local variable.  Anything
outside those rules lands in the unresolved list instead of guessing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import UnknownUnit
from .repo_model import (
    AssignFact,
    CallFact,
    FileFacts,
    RepoSnapshot,
    UnitCatalog,
    UnitKind,
)

DEPENDENCY = "dependency"
INHERITANCE = "inheritance"
CALL = "call"
LAYERS = (DEPENDENCY, INHERITANCE, CALL)


@dataclass(frozen=True)
class RelationEdge:
    src: str
    dst: str
    layer: str
    site: tuple[str, int]  # (file path, line)


@dataclass(frozen=True)
class UnresolvedRef:
    site: tuple[str, int]
    layer: str
    target: str


@dataclass(frozen=True)
class ModuleMap:
    entries: dict[str, str]  # dotted module path -> file path (file unit id)
    package_markers: frozenset[str]


@dataclass
class RelationGraph:
    edges: dict[str, tuple[RelationEdge, ...]]
    unresolved: tuple[UnresolvedRef, ...]
    unit_ids: frozenset[str]
    resolved_bases: dict[str, tuple[str, ...]]
    _out: dict[str, dict[str, tuple[str, ...]]] = field(default_factory=dict, repr=False)
    _in: dict[str, dict[str, tuple[str, ...]]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for layer in LAYERS:
            fwd: dict[str, set[str]] = {}
            rev: dict[str, set[str]] = {}
            for e in self.edges.get(layer, ()):
                fwd.setdefault(e.src, set()).add(e.dst)
                rev.setdefault(e.dst, set()).add(e.src)
            self._out[layer] = {k: tuple(sorted(v)) for k, v in fwd.items()}
            self._in[layer] = {k: tuple(sorted(v)) for k, v in rev.items()}

    def out_neighbors(self, layer: str, unit_id: str) -> tuple[str, ...]:
        return self._out.get(layer, {}).get(unit_id, ())

    def in_neighbors(self, layer: str, unit_id: str) -> tuple[str, ...]:
        return self._in.get(layer, {}).get(unit_id, ())


# ---------------------------------------------------------------------------
# module map
# ---------------------------------------------------------------------------


def build_module_map(snapshot: RepoSnapshot) -> ModuleMap:
    entries: dict[str, str] = {}
    markers: set[str] = set()
    for f in snapshot.files:
        if not f.path.endswith(".py"):
            continue
        if f.path.endswith("__init__.py"):
            parent = f.path[: -len("/__init__.py")] if "/" in f.path else ""
            markers.add(parent)
            entries[f.module_path] = f.path
        else:
            # a package initializer wins over a same-named plain module
            entries.setdefault(f.module_path, f.path)
    for f in snapshot.files:
        if f.path.endswith("__init__.py"):
            entries[f.module_path] = f.path
    return ModuleMap(entries=entries, package_markers=frozenset(markers))


# ---------------------------------------------------------------------------
# per-file symbol tables
# ---------------------------------------------------------------------------


@dataclass
class _FileScope:
    alias_to_module: dict[str, str] = field(default_factory=dict)
    plain_dotted: set[str] = field(default_factory=set)
    symbol_imports: dict[str, tuple[str, str]] = field(default_factory=dict)  # local -> (module, symbol)


def _relative_base(module_path: str, is_package_init: bool, level: int) -> str | None:
    """Absolute package a relative import is anchored at, or None."""
    parts = module_path.split(".") if module_path else []
    if not is_package_init and parts:
        parts = parts[:-1]
    drop = level - 1
    if drop > len(parts):
        return None
    if drop:
        parts = parts[: len(parts) - drop]
    return ".".join(parts)


def _absolute_module(fact_module: str, level: int, src_module: str, is_init: bool) -> str | None:
    if level == 0:
        return fact_module or None
    base = _relative_base(src_module, is_init, level)
    if base is None:
        return None
    if fact_module:
        return f"{base}.{fact_module}" if base else fact_module
    return base or None


def build_file_scopes(
    snapshot: RepoSnapshot, module_map: ModuleMap, facts: dict[str, FileFacts]
) -> dict[str, _FileScope]:
    scopes: dict[str, _FileScope] = {}
    file_modules = {f.path: f.module_path for f in snapshot.files}
    for path, ff in facts.items():
        scope = _FileScope()
        src_module = file_modules.get(path, "")
        is_init = path.endswith("__init__.py")
        for imp in ff.imports:
            if imp.kind == "module":
                if imp.module in module_map.entries:
                    scope.plain_dotted.add(imp.module)
                    if "." in imp.module and imp.alias == imp.module.split(".")[0]:
                        # plain dotted import binds the root package name
                        scope.alias_to_module.setdefault(imp.alias, imp.alias)
                    else:
                        scope.alias_to_module[imp.alias] = imp.module
                continue
            absolute = _absolute_module(imp.module, imp.level, src_module, is_init)
            if absolute is None or imp.kind == "star":
                continue
            full = f"{absolute}.{imp.name}" if absolute else (imp.name or "")
            if full in module_map.entries:
                scope.alias_to_module[imp.alias] = full
            elif absolute in module_map.entries and imp.name:
                scope.symbol_imports[imp.alias] = (absolute, imp.name)
        scopes[path] = scope
    return scopes


# ---------------------------------------------------------------------------
# name resolution
# ---------------------------------------------------------------------------


class _Resolver:
    def __init__(
        self,
        catalog: UnitCatalog,
        module_map: ModuleMap,
        scopes: dict[str, _FileScope],
    ):
        self.catalog = catalog
        self.module_map = module_map
        self.scopes = scopes
        # local-name index per scope unit; a later definition shadows an
        # earlier one, matching runtime behaviour
        self._names: dict[str, dict[str, str]] = {}
        for unit in catalog.units:
            if unit.kind not in (UnitKind.CLASS, UnitKind.FUNCTION):
                continue
            if unit.parent_id is None:
                continue
            local = unit.qualified_name.rsplit(".", 1)[-1]
            self._names.setdefault(unit.parent_id, {})[local] = unit.unit_id
        self.resolved_bases: dict[str, tuple[str, ...]] = {}

    # -- scope helpers -----------------------------------------------------

    def _local_name_in(self, scope_id: str, name: str) -> str | None:
        return self._names.get(scope_id, {}).get(name)

    def scope_chain_lookup(self, scope_id: str, name: str) -> str | None:
        """Resolve a bare name through enclosing function/file scopes.

        Class scopes are skipped, mirroring how the language resolves
        names inside method bodies.
        """
        unit = self.catalog.get(scope_id)
        while unit is not None:
            if unit.kind in (UnitKind.FUNCTION, UnitKind.FILE):
                hit = self._local_name_in(unit.unit_id, name)
                if hit is not None:
                    return hit
            unit = self.catalog.get(unit.parent_id) if unit.parent_id else None
        return None

    def import_symbol_lookup(self, file_path: str, name: str) -> str | None:
        scope = self.scopes.get(file_path)
        if scope is None:
            return None
        bound = scope.symbol_imports.get(name)
        if bound is None:
            return None
        module, symbol = bound
        target_file = self.module_map.entries.get(module)
        if target_file is None:
            return None
        return self._local_name_in(target_file, symbol)

    def module_prefix_lookup(self, file_path: str, parts: tuple[str, ...]) -> tuple[str, tuple[str, ...]] | None:
        """Longest module prefix of a dotted name, leaving symbol parts.

        Returns (file path of the module, remaining symbol parts).
        """
        scope = self.scopes.get(file_path)
        if scope is None:
            return None
        for j in range(len(parts) - 1, 0, -1):
            prefix = parts[:j]
            joined = ".".join(prefix)
            candidates = []
            if joined in scope.plain_dotted:
                candidates.append(joined)
            if prefix[0] in scope.alias_to_module:
                expanded = scope.alias_to_module[prefix[0]]
                if j > 1:
                    expanded = f"{expanded}." + ".".join(prefix[1:])
                candidates.append(expanded)
            for cand in candidates:
                target = self.module_map.entries.get(cand)
                if target is not None:
                    return target, parts[j:]
        return None

    # -- class-oriented helpers ---------------------------------------------

    def enclosing_class(self, scope_id: str) -> str | None:
        unit = self.catalog.get(scope_id)
        while unit is not None:
            if unit.kind is UnitKind.CLASS:
                return unit.unit_id
            unit = self.catalog.get(unit.parent_id) if unit.parent_id else None
        return None

    def resolve_class(self, parts: tuple[str, ...], scope_id: str, file_path: str) -> str | None:
        """Resolve a dotted name to a Class unit id, if it names one."""
        unit_id: str | None = None
        if len(parts) == 1:
            unit_id = self.scope_chain_lookup(scope_id, parts[0])
            if unit_id is None:
                unit_id = self.import_symbol_lookup(file_path, parts[0])
        else:
            head = self.scope_chain_lookup(scope_id, parts[0]) or self.import_symbol_lookup(file_path, parts[0])
            head_unit = self.catalog.get(head) if head else None
            if head_unit is not None and head_unit.kind is UnitKind.CLASS and len(parts) == 2:
                unit_id = self._local_name_in(head_unit.unit_id, parts[1])
            if unit_id is None:
                hit = self.module_prefix_lookup(file_path, parts)
                if hit is not None:
                    target_file, rest = hit
                    if len(rest) == 1:
                        unit_id = self._local_name_in(target_file, rest[0])
                    elif len(rest) == 2:
                        outer = self._local_name_in(target_file, rest[0])
                        if outer is not None:
                            unit_id = self._local_name_in(outer, rest[1])
        unit = self.catalog.get(unit_id) if unit_id else None
        if unit is not None and unit.kind is UnitKind.CLASS:
            return unit.unit_id
        return None

    def find_method(self, class_id: str, name: str, _seen: frozenset[str] = frozenset()) -> str | None:
        """Method lookup on a class, walking resolved bases depth-first."""
        if class_id in _seen:
            return None
        direct = self._local_name_in(class_id, name)
        if direct is not None:
            unit = self.catalog.get(direct)
            if unit is not None and unit.kind is UnitKind.FUNCTION:
                return direct
        seen = _seen | {class_id}
        for base in self.resolved_bases.get(class_id, ()):
            hit = self.find_method(base, name, seen)
            if hit is not None:
                return hit
        return None


# ---------------------------------------------------------------------------
# layer builders
# ---------------------------------------------------------------------------


def build_dependency_layer(
    snapshot: RepoSnapshot,
    module_map: ModuleMap,
    facts: dict[str, FileFacts],
) -> tuple[tuple[RelationEdge, ...], tuple[UnresolvedRef, ...]]:
    edges: set[RelationEdge] = set()
    unresolved: list[UnresolvedRef] = []
    file_modules = {f.path: f.module_path for f in snapshot.files}
    for path in sorted(facts):
        ff = facts[path]
        src_module = file_modules.get(path, "")
        is_init = path.endswith("__init__.py")
        for imp in ff.imports:
            site = (path, imp.line)
            if imp.kind == "module":
                target = module_map.entries.get(imp.module)
                if target is None:
                    unresolved.append(UnresolvedRef(site=site, layer=DEPENDENCY, target=imp.module))
                elif target != path:
                    edges.add(RelationEdge(src=path, dst=target, layer=DEPENDENCY, site=site))
                continue
            absolute = _absolute_module(imp.module, imp.level, src_module, is_init)
            if absolute is None:
                label = "." * imp.level + imp.module
                unresolved.append(UnresolvedRef(site=site, layer=DEPENDENCY, target=label))
                continue
            if imp.kind == "star":
                target = module_map.entries.get(absolute)
                if target is None:
                    unresolved.append(UnresolvedRef(site=site, layer=DEPENDENCY, target=absolute))
                elif target != path:
                    edges.add(RelationEdge(src=path, dst=target, layer=DEPENDENCY, site=site))
                continue
            full = f"{absolute}.{imp.name}" if absolute else (imp.name or "")
            target = module_map.entries.get(full) or module_map.entries.get(absolute)
            if target is None:
                unresolved.append(UnresolvedRef(site=site, layer=DEPENDENCY, target=full))
            elif target != path:
                edges.add(RelationEdge(src=path, dst=target, layer=DEPENDENCY, site=site))
    ordered = tuple(sorted(edges, key=lambda e: (e.src, e.dst, e.site)))
    return ordered, tuple(unresolved)


def build_inheritance_layer(
    catalog: UnitCatalog,
    resolver: _Resolver,
) -> tuple[tuple[RelationEdge, ...], tuple[UnresolvedRef, ...]]:
    edges: set[RelationEdge] = set()
    unresolved: list[UnresolvedRef] = []
    for unit in catalog.units:
        if unit.kind is not UnitKind.CLASS or not unit.base_names:
            continue
        scope_id = unit.parent_id or unit.file_path
        site = (unit.file_path, unit.span[0])
        resolved: list[str] = []
        for base_text in unit.base_names:
            name = base_text.split("[", 1)[0].strip()
            parts = tuple(p for p in name.split(".") if p)
            target = resolver.resolve_class(parts, scope_id, unit.file_path) if parts else None
            if target is None or target == unit.unit_id:
                unresolved.append(UnresolvedRef(site=site, layer=INHERITANCE, target=name))
                continue
            resolved.append(target)
            edges.add(RelationEdge(src=unit.unit_id, dst=target, layer=INHERITANCE, site=site))
        if resolved:
            resolver.resolved_bases[unit.unit_id] = tuple(resolved)
    ordered = tuple(sorted(edges, key=lambda e: (e.src, e.dst, e.site)))
    return ordered, tuple(unresolved)


class _BindingIndex:
    """Constructor-result bindings, the only type inference performed."""

    def __init__(self, catalog: UnitCatalog, resolver: _Resolver, facts: dict[str, FileFacts]):
        self.catalog = catalog
        self.resolver = resolver
        # (class id, attr) -> bound class id
        self.attr_bindings: dict[tuple[str, str], str] = {}
        # scope id -> [(line, var, class id | None)] in line order
        self.local_assigns: dict[str, list[tuple[int, str, str | None]]] = {}
        self._build(facts)

    def _build(self, facts: dict[str, FileFacts]) -> None:
        attr_assigns: dict[tuple[str, str], list[tuple[str, str | None]]] = {}
        for path in sorted(facts):
            for assign in facts[path].assigns:
                if len(assign.target) == 2 and assign.target[0] == "self":
                    cls = self.resolver.enclosing_class(assign.scope_id)
                    if cls is None:
                        continue
                    bound = self._ctor_class(assign, path)
                    attr_assigns.setdefault((cls, assign.target[1]), []).append((assign.scope_id, bound))
                elif len(assign.target) == 1:
                    bound = self._ctor_class(assign, path)
                    self.local_assigns.setdefault(assign.scope_id, []).append(
                        (assign.line, assign.target[0], bound)
                    )
        for (cls, attr), entries in attr_assigns.items():
            if len(entries) != 1:
                continue  # re-assignment anywhere in the class invalidates
            scope_id, bound = entries[0]
            scope = self.catalog.get(scope_id)
            if scope is None or not scope.qualified_name.endswith(".__init__"):
                continue
            if scope.parent_id != cls:
                continue
            if bound is not None:
                self.attr_bindings[(cls, attr)] = bound
        for entries in self.local_assigns.values():
            entries.sort(key=lambda item: item[0])

    def _ctor_class(self, assign: AssignFact, path: str) -> str | None:
        if assign.ctor is None:
            return None
        return self.resolver.resolve_class(assign.ctor, assign.scope_id, path)

    def attr_class(self, class_id: str, attr: str) -> str | None:
        return self.attr_bindings.get((class_id, attr))

    def local_class(self, scope_id: str, var: str, line: int) -> str | None:
        latest: str | None = None
        bound_seen = False
        for assign_line, name, cls in self.local_assigns.get(scope_id, ()):
            if name != var or assign_line > line:
                continue
            latest = cls
            bound_seen = True
        return latest if bound_seen else None


def build_call_layer(
    catalog: UnitCatalog,
    resolver: _Resolver,
    facts: dict[str, FileFacts],
) -> tuple[tuple[RelationEdge, ...], tuple[UnresolvedRef, ...]]:
    bindings = _BindingIndex(catalog, resolver, facts)
    edges: set[RelationEdge] = set()
    unresolved: list[UnresolvedRef] = []

    def ctor_target(class_id: str) -> str | None:
        return resolver.find_method(class_id, "__init__")

    def resolve(fact: CallFact, path: str) -> str | None:
        parts = fact.callee
        if parts is None:
            return None
        if parts[0] == "self":
            cls = resolver.enclosing_class(fact.scope_id)
            if cls is None:
                return None
            if len(parts) == 2:
                return resolver.find_method(cls, parts[1])
            if len(parts) == 3:
                bound = bindings.attr_class(cls, parts[1])
                if bound is not None:
                    return resolver.find_method(bound, parts[2])
            return None
        if len(parts) == 1:
            unit_id = resolver.scope_chain_lookup(fact.scope_id, parts[0])
            if unit_id is None:
                unit_id = resolver.import_symbol_lookup(path, parts[0])
            unit = catalog.get(unit_id) if unit_id else None
            if unit is None:
                return None
            if unit.kind is UnitKind.FUNCTION:
                return unit.unit_id
            if unit.kind is UnitKind.CLASS:
                return ctor_target(unit.unit_id)
            return None
        if len(parts) == 2:
            bound = bindings.local_class(fact.scope_id, parts[0], fact.line)
            if bound is not None:
                return resolver.find_method(bound, parts[1])
        head = resolver.scope_chain_lookup(fact.scope_id, parts[0]) or resolver.import_symbol_lookup(
            path, parts[0]
        )
        head_unit = catalog.get(head) if head else None
        if head_unit is not None and head_unit.kind is UnitKind.CLASS and len(parts) == 2:
            return resolver.find_method(head_unit.unit_id, parts[1])
        hit = resolver.module_prefix_lookup(path, parts)
        if hit is not None:
            target_file, rest = hit
            if len(rest) == 1:
                unit_id = resolver._local_name_in(target_file, rest[0])
                unit = catalog.get(unit_id) if unit_id else None
                if unit is None:
                    return None
                if unit.kind is UnitKind.FUNCTION:
                    return unit.unit_id
                if unit.kind is UnitKind.CLASS:
                    return ctor_target(unit.unit_id)
                return None
            if len(rest) == 2:
                outer = resolver._local_name_in(target_file, rest[0])
                outer_unit = catalog.get(outer) if outer else None
                if outer_unit is not None and outer_unit.kind is UnitKind.CLASS:
                    return resolver.find_method(outer_unit.unit_id, rest[1])
        return None

    for path in sorted(facts):
        for fact in facts[path].calls:
            target = resolve(fact, path)
            site = (path, fact.line)
            if target is None:
                unresolved.append(UnresolvedRef(site=site, layer=CALL, target=fact.text))
            else:
                edges.add(RelationEdge(src=fact.scope_id, dst=target, layer=CALL, site=site))
    ordered = tuple(sorted(edges, key=lambda e: (e.src, e.dst, e.site)))
    return ordered, tuple(unresolved)


def build_relation_graph(
    snapshot: RepoSnapshot,
    catalog: UnitCatalog,
    facts: dict[str, FileFacts],
) -> RelationGraph:
    module_map = build_module_map(snapshot)
    scopes = build_file_scopes(snapshot, module_map, facts)
    resolver = _Resolver(catalog, module_map, scopes)
    dep_edges, dep_unresolved = build_dependency_layer(snapshot, module_map, facts)
    inh_edges, inh_unresolved = build_inheritance_layer(catalog, resolver)
    call_edges, call_unresolved = build_call_layer(catalog, resolver, facts)
    unresolved = tuple(
        sorted(
            list(dep_unresolved) + list(inh_unresolved) + list(call_unresolved),
            key=lambda r: (r.site, r.layer, r.target),
        )
    )
    return RelationGraph(
        edges={DEPENDENCY: dep_edges, INHERITANCE: inh_edges, CALL: call_edges},
        unresolved=unresolved,
        unit_ids=frozenset(u.unit_id for u in catalog.units),
        resolved_bases=dict(resolver.resolved_bases),
    )


# ---------------------------------------------------------------------------
# traversal and export
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathStep:
    src: str
    layer: str
    dst: str
    forward: bool


@dataclass(frozen=True)
class NeighborHit:
    unit_id: str
    hop: int
    path: tuple[PathStep, ...]


def render_path(path: tuple[PathStep, ...]) -> str:
    if not path:
        return ""
    out = [path[0].src]
    for step in path:
        arrow = f"-{step.layer}->" if step.forward else f"<-{step.layer}-"
        out.append(f"{arrow} {step.dst}")
    return " ".join(out)


def neighbors(
    graph: RelationGraph,
    seed_units: list[str] | tuple[str, ...],
    layers: tuple[str, ...] | None = None,
    hops: int = 1,
    direction: str = "both",
) -> list[NeighborHit]:
    """Breadth-first neighborhood of the seeds, shortest path per unit."""
    for seed in seed_units:
        if seed not in graph.unit_ids:
            raise UnknownUnit(seed)
    chosen = tuple(layers) if layers is not None else LAYERS
    seeds = set(seed_units)
    seen: set[str] = set(seeds)
    results: list[NeighborHit] = []
    queue: deque[tuple[str, int, tuple[PathStep, ...]]] = deque(
        (seed, 0, ()) for seed in sorted(seeds)
    )
    while queue:
        node, hop, path = queue.popleft()
        if hop >= hops:
            continue
        for layer in chosen:
            steps: list[tuple[str, bool]] = []
            if direction in ("out", "both"):
                steps.extend((n, True) for n in graph.out_neighbors(layer, node))
            if direction in ("in", "both"):
                steps.extend((n, False) for n in graph.in_neighbors(layer, node))
            for neighbor, forward in steps:
                if neighbor in seen:
                    continue
                seen.add(neighbor)
                new_path = path + (PathStep(src=node, layer=layer, dst=neighbor, forward=forward),)
                results.append(NeighborHit(unit_id=neighbor, hop=hop + 1, path=new_path))
                queue.append((neighbor, hop + 1, new_path))
    results.sort(key=lambda h: (h.hop, h.unit_id))
    return results


def export_edges(graph: RelationGraph) -> str:
    """Flat edge list: ``src<TAB>dst<TAB>layer<TAB>file:line`` sorted."""
    lines = []
    for layer in LAYERS:
        for e in graph.edges.get(layer, ()):
            lines.append(f"{e.src}\t{e.dst}\t{e.layer}\t{e.site[0]}:{e.site[1]}")
    return "\n".join(sorted(lines))
