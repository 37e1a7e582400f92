"""Two-phase repository indexing.

Phase 1 scans every Python file once, emitting all nodes and the edges
resolvable within a single file. Phase 2 completes the cross-file picture:
relative imports become absolute, re-export chains resolve to cross-file
CONTAINS edges, base classes resolve to INHERITS edges, and inherited
methods/fields propagate along a first-wins, left-to-right DFS.
"""

from __future__ import annotations

import fnmatch
import os
import time
from dataclasses import dataclass, field

from .graph_schema import (
    CodeGraph,
    EdgeRecord,
    EdgeType,
    NodeLabel,
    NodeRecord,
    edge_identity,
    node_identity,
)
from .source_parser import (
    ExternalRef,
    FileFacts,
    ImportEscapesRoot,
    InvalidPath,
    ParseError,
    SourceUnit,
    normalize_import,
    extract_facts,
)

_KIND_TO_LABEL = {
    "class": NodeLabel.CLASS,
    "function": NodeLabel.FUNCTION,
    "method": NodeLabel.METHOD,
    "field": NodeLabel.FIELD,
    "global_variable": NodeLabel.GLOBAL_VARIABLE,
}

_TEST_EXCLUDE_GLOBS = ("test*", "*_test.py")


class IndexingError(Exception):
    """Fatal indexing failure."""


class IoError(IndexingError):
    """Repository root missing or unreadable."""


class MemoryCapExceeded(IndexingError):
    """Total source bytes exceeded the configured budget."""


class FileCapExceeded(IndexingError):
    """Repository holds more Python files than the configured cap."""


class NodeIdCollision(IndexingError):
    """Two distinct symbols digested to the same node id."""


@dataclass
class IndexConfig:
    include_globs: tuple[str, ...] = ("*.py",)
    exclude_globs: tuple[str, ...] = ()
    exclude_tests: bool = False
    follow_symlinks: bool = False
    max_files: int = 50_000
    max_total_source_bytes: int = 256 * 1024 * 1024

    def __post_init__(self) -> None:
        if self.max_files <= 0 or self.max_total_source_bytes <= 0:
            raise ValueError("caps must be positive")

    def effective_excludes(self) -> tuple[str, ...]:
        if self.exclude_tests:
            return self.exclude_globs + _TEST_EXCLUDE_GLOBS
        return self.exclude_globs


@dataclass
class InheritanceCycle:
    """Classes forming an INHERITS cycle; they keep edges, skip propagation."""

    classes: list[str]  # qualified names, sorted


@dataclass
class IndexReport:
    files_scanned: int = 0
    files_failed: int = 0
    node_counts: dict[str, int] = field(default_factory=dict)
    edge_counts: dict[str, int] = field(default_factory=dict)
    unresolved_imports: int = 0
    unresolved_bases: int = 0
    inheritance_cycles: list[InheritanceCycle] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    wall_time_seconds: float = 0.0

    def summary(self) -> str:
        total_nodes = sum(self.node_counts.values())
        total_edges = sum(self.edge_counts.values())
        lines = [
            f"files scanned: {self.files_scanned} (failed: {self.files_failed})",
            f"{total_nodes} nodes: "
            + ", ".join(f"{k} {v}" for k, v in sorted(self.node_counts.items()) if v),
            f"{total_edges} edges: "
            + ", ".join(f"{k} {v}" for k, v in sorted(self.edge_counts.items()) if v),
            f"unresolved imports: {self.unresolved_imports}, "
            f"unresolved bases: {self.unresolved_bases}",
            f"wall time: {self.wall_time_seconds:.2f}s",
        ]
        for cycle in self.inheritance_cycles:
            lines.append("inheritance cycle: " + " -> ".join(cycle.classes))
        lines.extend(self.warnings)
        return "\n".join(lines)


@dataclass
class PartialGraph:
    """Phase-1 output: every node, intra-file edges, and the raw facts."""

    repo_root: str
    nodes: dict[str, NodeRecord] = field(default_factory=dict)
    edges: dict[str, EdgeRecord] = field(default_factory=dict)
    module_table: dict[str, FileFacts] = field(default_factory=dict)
    file_hashes: dict[str, str] = field(default_factory=dict)
    report: IndexReport = field(default_factory=IndexReport)

    def add_node(self, node: NodeRecord) -> None:
        existing = self.nodes.get(node.id)
        if existing is not None and existing != node:
            raise NodeIdCollision(f"node id collision between {existing} and {node}")
        self.nodes[node.id] = node

    def add_edge(
        self,
        edge_type: EdgeType,
        source: str,
        target: str,
        source_assoc: str | None = None,
        target_assoc: str | None = None,
    ) -> None:
        edge_id = edge_identity(edge_type, source, target)
        self.edges[edge_id] = EdgeRecord(
            id=edge_id,
            type=edge_type,
            source=source,
            target=target,
            source_association_type=source_assoc,
            target_association_type=target_assoc,
        )


def discover_files(repo_root: str, config: IndexConfig) -> list[str]:
    """Repo-relative forward-slash paths of indexable Python files, sorted."""
    if not os.path.isdir(repo_root):
        raise IoError(f"repository root not found: {repo_root}")
    excludes = config.effective_excludes()
    found: list[str] = []
    for dirpath, dirnames, filenames in os.walk(
        repo_root, followlinks=config.follow_symlinks
    ):
        dirnames.sort()
        for filename in sorted(filenames):
            if not filename.endswith(".py"):
                continue
            rel = os.path.relpath(os.path.join(dirpath, filename), repo_root)
            rel = rel.replace(os.sep, "/")
            if not _matches_any(rel, filename, config.include_globs):
                continue
            if excludes and _matches_any(rel, filename, excludes):
                continue
            found.append(rel)
    found.sort()
    if len(found) > config.max_files:
        raise FileCapExceeded(
            f"{len(found)} Python files exceed the max_files cap of {config.max_files}"
        )
    return found


def _matches_any(rel_path: str, basename: str, globs: tuple[str, ...]) -> bool:
    return any(
        fnmatch.fnmatch(rel_path, g) or fnmatch.fnmatch(basename, g) for g in globs
    )


def index_phase1(repo_root: str, config: IndexConfig | None = None) -> PartialGraph:
    """Single-pass shallow scan: all nodes, intra-file edges, raw facts."""
    config = config or IndexConfig()
    partial = PartialGraph(repo_root=str(repo_root))
    total_bytes = 0
    for rel_path in discover_files(str(repo_root), config):
        raw = _read_file(os.path.join(str(repo_root), rel_path), partial)
        if raw is None:
            continue
        total_bytes += len(raw)
        if total_bytes > config.max_total_source_bytes:
            raise MemoryCapExceeded(
                f"source volume exceeds {config.max_total_source_bytes} bytes; "
                "raise max_total_source_bytes or narrow the include globs"
            )
        try:
            content = raw.decode("utf-8")
        except UnicodeDecodeError:
            partial.report.warnings.append(f"skipped non-UTF-8 file: {rel_path}")
            continue
        partial.report.files_scanned += 1
        unit = SourceUnit.from_content(rel_path, content)
        partial.file_hashes[rel_path] = unit.content_hash
        try:
            facts = extract_facts(unit)
        except InvalidPath as exc:
            # e.g. a bare __init__.py at the repository root has no dotted name
            partial.report.warnings.append(f"unnamable module skipped: {exc}")
            del partial.file_hashes[rel_path]
            partial.report.files_scanned -= 1
            continue
        except ParseError as exc:
            partial.report.files_failed += 1
            partial.report.warnings.append(f"parse failed: {exc}")
            facts = FileFacts(
                file_path=rel_path,
                module_name=_module_name_or_none(rel_path),
                parse_failed=True,
            )
            if facts.module_name is None:
                continue
        if facts.module_name in partial.module_table:
            partial.report.warnings.append(
                f"duplicate module name {facts.module_name} at {rel_path}; keeping first"
            )
            continue
        partial.module_table[facts.module_name] = facts
        _emit_file(partial, facts)
    return partial


def _read_file(path: str, partial: PartialGraph) -> bytes | None:
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as exc:
        partial.report.warnings.append(f"unreadable file skipped: {exc}")
        return None


def _module_name_or_none(rel_path: str) -> str | None:
    from .source_parser import InvalidPath, resolve_module_name

    try:
        return resolve_module_name(rel_path)
    except InvalidPath:
        return None


def _emit_file(partial: PartialGraph, facts: FileFacts) -> None:
    module_id = node_identity(NodeLabel.MODULE, facts.file_path, facts.module_name)
    partial.add_node(
        NodeRecord(
            id=module_id,
            label=NodeLabel.MODULE,
            name=facts.module_name,
            file_path=facts.file_path,
        )
    )
    # a name may exist under several kinds (property method + same-named
    # field, class rebinding a function, ...), so ids key on (kind, qname)
    def_ids: dict[tuple[str, str], str] = {}
    for def_fact in facts.definitions:
        label = _KIND_TO_LABEL[def_fact.kind]
        node_id = node_identity(label, facts.file_path, def_fact.qualified_name)
        def_ids[(def_fact.kind, def_fact.qualified_name)] = node_id
        partial.add_node(
            NodeRecord(
                id=node_id,
                label=label,
                name=def_fact.name,
                file_path=facts.file_path,
                class_name=def_fact.class_name,
                signature=def_fact.signature,
                code_span=def_fact.span,
            )
        )
        class_key = ("class", f"{facts.module_name}.{def_fact.class_name}")
        if label in (NodeLabel.CLASS, NodeLabel.FUNCTION, NodeLabel.GLOBAL_VARIABLE):
            partial.add_edge(EdgeType.CONTAINS, module_id, node_id)
        elif label is NodeLabel.METHOD and class_key in def_ids:
            partial.add_edge(EdgeType.HAS_METHOD, def_ids[class_key], node_id)
        elif label is NodeLabel.FIELD and class_key in def_ids:
            partial.add_edge(EdgeType.HAS_FIELD, def_ids[class_key], node_id)

    globals_by_name = {
        d.name: def_ids[("global_variable", d.qualified_name)]
        for d in facts.definitions
        if d.kind == "global_variable"
    }
    fields_by_class: dict[str, dict[str, str]] = {}
    for def_fact in facts.definitions:
        if def_fact.kind == "field":
            fields_by_class.setdefault(def_fact.class_name or "", {})[
                def_fact.name
            ] = def_ids[("field", def_fact.qualified_name)]

    for use in facts.uses:
        reader_id = def_ids.get((use.reader_kind, use.reader))
        if reader_id is None:
            continue
        reader_label = (
            NodeLabel.METHOD if use.reader_kind == "method" else NodeLabel.FUNCTION
        )
        if use.form == "bare-name":
            target_id = globals_by_name.get(use.name)
            target_label = NodeLabel.GLOBAL_VARIABLE
        else:
            class_name = use.reader.rsplit(".", 2)[-2] if "." in use.reader else ""
            target_id = fields_by_class.get(class_name, {}).get(use.name)
            target_label = NodeLabel.FIELD
        if target_id is None:
            continue
        partial.add_edge(
            EdgeType.USES,
            reader_id,
            target_id,
            source_assoc=reader_label.value,
            target_assoc=target_label.value,
        )


# --- phase 2 ------------------------------------------------------------------


class _Resolver:
    """Cross-file symbol resolution over the phase-1 module table."""

    def __init__(self, partial: PartialGraph):
        self.partial = partial
        self.modules = partial.module_table
        self.repo_module_names = frozenset(self.modules)
        # per module: local binding name -> absolute dotted target
        self.bindings: dict[str, dict[str, str]] = {}
        # per module: binding names introduced by from-imports (re-export candidates)
        self.from_bindings: dict[str, set[str]] = {}
        # per module: star-imported module targets, in source order
        self.stars: dict[str, list[str]] = {}
        self.unresolved_imports = 0
        # per module: top-level symbol name -> node id (last definition wins,
        # matching Python rebinding)
        self._locals: dict[str, dict[str, str]] = {}
        for module_name, facts in self.modules.items():
            table: dict[str, str] = {}
            for def_fact in facts.definitions:
                if def_fact.kind in ("class", "function", "global_variable"):
                    table[def_fact.name] = node_identity(
                        _KIND_TO_LABEL[def_fact.kind],
                        facts.file_path,
                        def_fact.qualified_name,
                    )
            self._locals[module_name] = table
        self._build_bindings()

    def _build_bindings(self) -> None:
        for module_name in sorted(self.modules):
            facts = self.modules[module_name]
            bindings: dict[str, str] = {}
            from_names: set[str] = set()
            stars: list[str] = []
            is_init = facts.file_path.endswith("__init__.py")
            for fact in facts.imports:
                try:
                    targets = normalize_import(
                        fact, module_name, is_init, self.repo_module_names
                    )
                except ImportEscapesRoot as exc:
                    self.partial.report.warnings.append(f"{facts.file_path}: {exc}")
                    self.unresolved_imports += 1
                    continue
                alias_map = dict(fact.aliases)
                if fact.star:
                    target = targets[0]
                    if isinstance(target, ExternalRef):
                        self.unresolved_imports += 1
                    else:
                        stars.append(target)
                elif fact.is_module_import or not fact.names:
                    target = targets[0]
                    if isinstance(target, ExternalRef):
                        self.unresolved_imports += 1
                        continue
                    alias = alias_map.get(fact.raw)
                    if alias:
                        bindings[alias] = target
                    else:
                        # `import a.b` binds the top-level package name
                        top = target.split(".", 1)[0]
                        bindings[top] = top
                        from_names.discard(top)
                else:
                    for name, target in zip(fact.names, targets):
                        if isinstance(target, ExternalRef):
                            self.unresolved_imports += 1
                            continue
                        local = alias_map.get(name, name)
                        bindings[local] = target
                        from_names.add(local)
            self.bindings[module_name] = bindings
            self.from_bindings[module_name] = from_names
            self.stars[module_name] = stars

    # -- symbol resolution --

    def local_symbol(self, module_name: str, name: str) -> str | None:
        return self._locals.get(module_name, {}).get(name)

    def resolve_symbol(
        self, module_name: str, name: str, visited: set[tuple[str, str]] | None = None
    ) -> str | None:
        """Node id of `name` as visible in `module_name`, following re-exports.

        Depth-first over import bindings and star imports with a visited-set
        cycle guard; the first resolution found wins.
        """
        visited = visited if visited is not None else set()
        key = (module_name, name)
        if key in visited:
            return None
        visited.add(key)
        node_id = self.local_symbol(module_name, name)
        if node_id is not None:
            return node_id
        binding = self.bindings.get(module_name, {}).get(name)
        if binding is not None:
            return self.resolve_dotted(binding, visited)
        for star_module in self.stars.get(module_name, []):
            if star_module not in self.modules:
                continue
            if not self._star_exports(star_module, name):
                continue
            found = self.resolve_symbol(star_module, name, visited)
            if found is not None:
                return found
        return None

    def _star_exports(self, module_name: str, name: str) -> bool:
        facts = self.modules[module_name]
        if facts.all_exports is not None:
            return name in facts.all_exports
        return not name.startswith("_")

    def resolve_dotted(
        self, dotted: str, visited: set[tuple[str, str]]
    ) -> str | None:
        """Resolve an absolute dotted target to a symbol node, if it is one."""
        if dotted in self.modules:
            return None  # a module, not a symbol
        if "." not in dotted:
            return None
        prefix, leaf = dotted.rsplit(".", 1)
        if prefix in self.modules:
            return self.resolve_symbol(prefix, leaf, visited)
        return None

    def resolve_module_target(self, dotted: str) -> str | None:
        """Longest repository-module prefix of a dotted path, if any."""
        parts = dotted.split(".")
        for length in range(len(parts), 0, -1):
            candidate = ".".join(parts[:length])
            if candidate in self.modules:
                return candidate
        return None

    def resolve_base_expr(self, module_name: str, expr: str) -> str | None:
        """CLASS node id for a base-class expression, or None.

        Handles bare names, dotted attribute paths through imported modules,
        and subscripted generics (``Base[int]`` resolves ``Base``).
        """
        expr = expr.split("[", 1)[0].strip()
        if not expr or not all(part.isidentifier() for part in expr.split(".")):
            return None
        parts = expr.split(".")
        if len(parts) == 1:
            node_id = self.resolve_symbol(module_name, parts[0])
        else:
            binding = self.bindings.get(module_name, {}).get(parts[0])
            dotted = ".".join([binding] + parts[1:]) if binding else expr
            module_prefix = self.resolve_module_target(".".join(dotted.split(".")[:-1]))
            if module_prefix is None:
                return None
            remainder = dotted[len(module_prefix) + 1 :]
            if "." in remainder:
                return None  # attribute chains below a symbol are dynamic
            node_id = self.resolve_symbol(module_prefix, remainder)
        if node_id is None:
            return None
        node = self.partial.nodes[node_id]
        return node_id if node.label is NodeLabel.CLASS else None


def _qualified_name(node: NodeRecord) -> str:
    # reconstructs the identity component used when the node was created
    module = _module_of(node.file_path)
    if node.label is NodeLabel.MODULE:
        return node.name
    if node.class_name:
        return f"{module}.{node.class_name}.{node.name}"
    return f"{module}.{node.name}"


def _module_of(file_path: str) -> str:
    from .source_parser import resolve_module_name

    return resolve_module_name(file_path)


def index_phase2(partial: PartialGraph) -> CodeGraph:
    """Complete cross-file edges and inherited members over a phase-1 graph."""
    resolver = _Resolver(partial)
    report = partial.report
    report.unresolved_imports += resolver.unresolved_imports

    # (b) re-export chains -> cross-file CONTAINS
    for module_name in sorted(partial.module_table):
        facts = partial.module_table[module_name]
        module_id = node_identity(NodeLabel.MODULE, facts.file_path, module_name)
        for local_name in sorted(resolver.from_bindings.get(module_name, set())):
            target = resolver.bindings[module_name][local_name]
            node_id = resolver.resolve_dotted(target, {(module_name, local_name)})
            if node_id is None:
                if target not in partial.module_table:
                    report.unresolved_imports += 1
                continue
            node = partial.nodes[node_id]
            if node.file_path == facts.file_path:
                continue
            partial.add_edge(EdgeType.CONTAINS, module_id, node_id)
        for star_module in resolver.stars.get(module_name, []):
            if star_module not in partial.module_table:
                report.unresolved_imports += 1
                continue
            for name in _star_names(resolver, star_module, set()):
                node_id = resolver.resolve_symbol(star_module, name)
                if node_id is None:
                    continue
                node = partial.nodes[node_id]
                if node.file_path == facts.file_path:
                    continue
                partial.add_edge(EdgeType.CONTAINS, module_id, node_id)

    # (c) INHERITS edges
    class_bases: dict[str, list[str]] = {}  # class node id -> base node ids, source order
    for module_name in sorted(partial.module_table):
        facts = partial.module_table[module_name]
        for class_name in facts.bases:
            class_id = resolver.local_symbol(module_name, class_name)
            if class_id is None:
                continue
            resolved: list[str] = []
            for base_expr in facts.bases[class_name]:
                base_id = resolver.resolve_base_expr(module_name, base_expr)
                if base_id is None:
                    report.unresolved_bases += 1
                    continue
                if base_id == class_id:
                    continue
                partial.add_edge(EdgeType.INHERITS, class_id, base_id)
                if base_id not in resolved:
                    resolved.append(base_id)
            class_bases[class_id] = resolved

    # (d) inherited-member propagation, first-wins left-to-right DFS
    members = _local_members(partial)
    cyclic = _cycle_classes(class_bases)
    for group in _cycle_groups(cyclic, class_bases):
        names = sorted(_qualified_name(partial.nodes[c]) for c in group)
        report.inheritance_cycles.append(InheritanceCycle(classes=names))
    report.inheritance_cycles.sort(key=lambda cycle: cycle.classes)
    for class_id in sorted(class_bases):
        if class_id in cyclic:
            continue
        taken = {name for name, _, _ in members.get(class_id, [])}
        visited = {class_id}
        order: list[str] = []

        def dfs(current: str) -> None:
            for base_id in class_bases.get(current, []):
                if base_id in visited:
                    continue
                visited.add(base_id)
                order.append(base_id)
                dfs(base_id)

        dfs(class_id)
        for base_id in order:
            for name, member_id, edge_type in members.get(base_id, []):
                if name in taken:
                    continue
                taken.add(name)
                partial.add_edge(edge_type, class_id, member_id)

    graph = CodeGraph(
        repo_root=partial.repo_root,
        nodes=list(partial.nodes.values()),
        edges=list(partial.edges.values()),
        file_hashes=dict(partial.file_hashes),
    )
    graph.sort_canonical()
    return graph


def _star_names(resolver: _Resolver, module_name: str, visited: set[str]) -> list[str]:
    """Names a star import of `module_name` would expose, in deterministic order."""
    if module_name in visited or module_name not in resolver.modules:
        return []
    visited.add(module_name)
    facts = resolver.modules[module_name]
    if facts.all_exports is not None:
        return list(facts.all_exports)
    names: list[str] = []
    for def_fact in facts.definitions:
        if def_fact.kind in ("class", "function", "global_variable"):
            names.append(def_fact.name)
    names.extend(resolver.bindings.get(module_name, {}))
    for star in resolver.stars.get(module_name, []):
        names.extend(_star_names(resolver, star, visited))
    return sorted({n for n in names if not n.startswith("_")})


def _local_members(
    partial: PartialGraph,
) -> dict[str, list[tuple[str, str, EdgeType]]]:
    """Per class node id: (member name, member node id, edge type), methods first."""
    class_ids: dict[tuple[str, str], str] = {}
    for node in partial.nodes.values():
        if node.label is NodeLabel.CLASS:
            class_ids[(node.file_path, node.name)] = node.id
    members: dict[str, list[tuple[str, str, EdgeType]]] = {}
    for node in sorted(partial.nodes.values(), key=lambda n: (n.label.value, n.id)):
        if node.label is NodeLabel.METHOD:
            edge_type = EdgeType.HAS_METHOD
        elif node.label is NodeLabel.FIELD:
            edge_type = EdgeType.HAS_FIELD
        else:
            continue
        class_id = class_ids.get((node.file_path, node.class_name or ""))
        if class_id is None:
            continue
        members.setdefault(class_id, []).append((node.name, node.id, edge_type))
    for entries in members.values():
        # methods shadow fields of the same name within one class
        entries.sort(key=lambda item: (item[2] is not EdgeType.HAS_METHOD, item[0]))
    return members


def _cycle_classes(class_bases: dict[str, list[str]]) -> set[str]:
    """Classes that can reach themselves through INHERITS edges."""
    cyclic: set[str] = set()
    for start in class_bases:
        stack = list(class_bases.get(start, []))
        seen: set[str] = set()
        while stack:
            current = stack.pop()
            if current == start:
                cyclic.add(start)
                break
            if current in seen:
                continue
            seen.add(current)
            stack.extend(class_bases.get(current, []))
    return cyclic


def _cycle_groups(cyclic: set[str], class_bases: dict[str, list[str]]) -> list[set[str]]:
    """Partition cyclic classes into their mutually reachable cycles."""
    reach: dict[str, set[str]] = {}
    for start in cyclic:
        seen: set[str] = set()
        stack = list(class_bases.get(start, []))
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            seen.add(current)
            stack.extend(class_bases.get(current, []))
        reach[start] = seen
    groups: list[set[str]] = []
    remaining = set(cyclic)
    while remaining:
        seed = remaining.pop()
        group = {seed} | {c for c in remaining if seed in reach[c] and c in reach[seed]}
        remaining -= group
        groups.append(group)
    return groups


def index_repository(
    repo_root: str, config: IndexConfig | None = None
) -> tuple[CodeGraph, IndexReport]:
    """Both phases; node/edge sets independent of enumeration order."""
    started = time.monotonic()
    partial = index_phase1(repo_root, config)
    graph = index_phase2(partial)
    report = partial.report
    report.node_counts = graph.node_counts()
    report.edge_counts = graph.edge_counts()
    report.wall_time_seconds = time.monotonic() - started
    return graph, report
