"""Syntax-level fact extraction from Python source files.

Parses one file at a time into symbol definitions, imports, base-class
lists, and name uses. Knows nothing about the graph; the indexer turns
these facts into nodes and edges. Stateless and safe to call concurrently.
"""

from __future__ import annotations

import ast
import functools
import hashlib
import symtable
from dataclasses import dataclass, field


class InvalidPath(Exception):
    """Raised when a file path is not a repo-relative Python path."""


class ImportEscapesRoot(Exception):
    """Raised when a relative import climbs above the repository root."""


class ParseError(Exception):
    """Syntax error in a source file, with its position."""

    def __init__(self, file_path: str, line: int, column: int, message: str):
        super().__init__(f"{file_path}:{line}:{column}: {message}")
        self.file_path = file_path
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SourceUnit:
    """One source file: repo-relative path, text, and content digest."""

    file_path: str
    content: str
    content_hash: str

    @classmethod
    def from_content(cls, file_path: str, content: str) -> "SourceUnit":
        return cls(file_path=file_path, content=content, content_hash=hash_content(content))


@dataclass(frozen=True)
class CodeSpan:
    """Byte range of a definition within its file (lines are informational)."""

    file_path: str
    start_byte: int
    end_byte: int
    start_line: int
    end_line: int


@dataclass(frozen=True)
class DefFact:
    """One extracted definition (class, function, method, field, global variable)."""

    kind: str  # class | function | method | field | global_variable
    name: str
    qualified_name: str  # module.Name or module.Class.name
    class_name: str | None = None  # methods and fields only
    signature: str | None = None  # class/function/method only
    span: CodeSpan | None = None  # fields never carry one


@dataclass(frozen=True)
class ImportFact:
    """One import binding as written in the source.

    ``import a.b`` yields raw="a.b", names=(). ``from .x import y as z``
    yields raw="x", level=1, names=("y",), aliases={"y": "z"}.
    """

    raw: str
    level: int
    names: tuple[str, ...] = ()
    aliases: tuple[tuple[str, str], ...] = ()
    star: bool = False
    is_module_import: bool = False
    line: int = 0


@dataclass(frozen=True)
class UseFact:
    """A name read attributed to the enclosing function or method."""

    reader: str  # qualified name of the reading def
    reader_kind: str  # function | method
    name: str
    form: str  # bare-name | self-attribute


@dataclass
class FileFacts:
    """Everything extract_facts learned about one file."""

    file_path: str
    module_name: str
    definitions: list[DefFact] = field(default_factory=list)
    imports: list[ImportFact] = field(default_factory=list)
    bases: dict[str, list[str]] = field(default_factory=dict)  # class name -> base exprs
    uses: list[UseFact] = field(default_factory=list)
    all_exports: list[str] | None = None  # literal __all__ when present
    parse_failed: bool = False


def hash_content(content: str) -> str:
    """SHA-256 hex digest of the UTF-8 bytes."""
    return hashlib.sha256(content.encode("utf-8")).hexdigest()


def resolve_module_name(file_path: str) -> str:
    """Dotted module name for a repo-relative ``.py`` path.

    ``a/b/c.py`` -> ``a.b.c``; ``a/b/__init__.py`` -> ``a.b``;
    ``main.py`` -> ``main``.
    """
    path = file_path.replace("\\", "/")
    if path.startswith("/") or path.startswith("~") or (len(path) > 1 and path[1] == ":"):
        raise InvalidPath(f"not repo-relative: {file_path}")
    parts = [p for p in path.split("/") if p not in ("", ".")]
    if any(p == ".." for p in parts):
        raise InvalidPath(f"path escapes repository root: {file_path}")
    if not parts or not parts[-1].endswith(".py"):
        raise InvalidPath(f"not a Python file: {file_path}")
    last = parts[-1][: -len(".py")]
    if last == "__init__":
        parts = parts[:-1]
        if not parts:
            raise InvalidPath(f"bare __init__.py has no module name: {file_path}")
    else:
        parts[-1] = last
    return ".".join(parts)


@dataclass(frozen=True)
class ExternalRef:
    """An import target whose top-level name is not a repository module."""

    target: str


@functools.lru_cache(maxsize=8)
def repo_top_levels(repo_modules: frozenset) -> frozenset:
    return frozenset(m.split(".", 1)[0] for m in repo_modules)


def normalize_import(
    fact: ImportFact,
    current_module: str,
    is_package_init: bool,
    repo_modules: "set[str] | frozenset[str]",
) -> list["str | ExternalRef"]:
    """Absolute dotted targets for one import, classifying external ones.

    Relative level k strips k components from the importing package path
    (the module's own last component counts as one unless the importer is
    a package ``__init__``), then joins the raw target and each imported
    name. A star import resolves to the module itself; the caller expands
    it. Targets whose first component is not a repository module come back
    as ExternalRef.
    """
    if fact.level > 0:
        parts = current_module.split(".")
        strip = fact.level - 1 if is_package_init else fact.level
        if strip >= len(parts):
            raise ImportEscapesRoot(
                f"relative import level {fact.level} escapes root from {current_module}"
            )
        base = parts[: len(parts) - strip]
        module_parts = base + (fact.raw.split(".") if fact.raw else [])
    else:
        module_parts = fact.raw.split(".") if fact.raw else []
    if not module_parts:
        raise ImportEscapesRoot(f"empty import target in {current_module}")
    module_target = ".".join(module_parts)

    top_levels = repo_top_levels(
        repo_modules if isinstance(repo_modules, frozenset) else frozenset(repo_modules)
    )

    def classify(target: str) -> "str | ExternalRef":
        return target if target.split(".", 1)[0] in top_levels else ExternalRef(target)

    if fact.is_module_import or fact.star or not fact.names:
        return [classify(module_target)]
    return [classify(f"{module_target}.{name}") for name in fact.names]


def extract_facts(unit: SourceUnit) -> FileFacts:
    """Extract all definition/import/base/use facts from one parsed file.

    Pure function of (file_path, content). Nested functions and nested
    classes are not emitted; ``if __name__ == "__main__"`` blocks are
    skipped; other conditional module-level branches are walked.

    Raises ParseError on syntax errors (the caller records the file as a
    module-only fact set).
    """
    module_name = resolve_module_name(unit.file_path)
    try:
        tree = ast.parse(unit.content)
    except SyntaxError as exc:
        raise ParseError(
            unit.file_path, exc.lineno or 0, exc.offset or 0, exc.msg or "syntax error"
        ) from exc

    extractor = _Extractor(unit, module_name)
    extractor.walk_module(tree)
    facts = FileFacts(
        file_path=unit.file_path,
        module_name=module_name,
        definitions=extractor.definitions,
        imports=extractor.imports,
        bases=extractor.bases,
        all_exports=extractor.all_exports,
    )
    facts.uses = _collect_uses(unit, tree, extractor)
    return facts


# --- extraction internals ---------------------------------------------------


_SCOPE_NODE_NAMES = {
    ast.Lambda: "lambda",
    ast.ListComp: "listcomp",
    ast.SetComp: "setcomp",
    ast.DictComp: "dictcomp",
    ast.GeneratorExp: "genexpr",
}


def _line_starts(data: bytes) -> list[int]:
    """Byte offset of each line start, honoring \\n, \\r\\n, and \\r."""
    if b"\r" not in data:  # fast path: split at C speed
        starts = [0]
        offset = 0
        for line in data.split(b"\n")[:-1]:
            offset += len(line) + 1
            starts.append(offset)
        return starts
    starts = [0]
    i, n = 0, len(data)
    while i < n:
        b = data[i]
        if b == 0x0A:
            starts.append(i + 1)
        elif b == 0x0D:
            if i + 1 < n and data[i + 1] == 0x0A:
                i += 1
            starts.append(i + 1)
        i += 1
    return starts


class _Extractor:
    def __init__(self, unit: SourceUnit, module_name: str):
        self.unit = unit
        self.module_name = module_name
        self.data = unit.content.encode("utf-8")
        self.line_starts = _line_starts(self.data)
        self.definitions: list[DefFact] = []
        self.imports: list[ImportFact] = []
        self.bases: dict[str, list[str]] = {}
        self.functions: list[ast.AST] = []  # indexed top-level function nodes
        self.methods: list[tuple[str, ast.AST]] = []  # (class name, method node)
        self.class_nodes: dict[str, ast.ClassDef] = {}
        self.all_exports: list[str] | None = None
        self._seen_qnames: set[str] = set()
        self._seen_fields: set[tuple[str, str]] = set()

    def byte_at(self, lineno: int, col: int) -> int:
        return self.line_starts[lineno - 1] + col

    # -- module walk --

    def walk_module(self, tree: ast.Module) -> None:
        self._walk_body(tree.body)

    def _walk_body(self, body: list[ast.stmt]) -> None:
        for stmt in body:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                self._add_function(stmt)
            elif isinstance(stmt, ast.ClassDef):
                self._add_class(stmt)
            elif isinstance(stmt, ast.Assign):
                for target in stmt.targets:
                    if isinstance(target, ast.Name):
                        if target.id == "__all__":
                            self._record_all(stmt.value)
                        self._add_global(target.id, stmt)
            elif isinstance(stmt, ast.AnnAssign):
                if isinstance(stmt.target, ast.Name):
                    if stmt.target.id == "__all__" and stmt.value is not None:
                        self._record_all(stmt.value)
                    self._add_global(stmt.target.id, stmt)
            elif isinstance(stmt, (ast.Import, ast.ImportFrom)):
                self._add_import(stmt)
            elif isinstance(stmt, ast.If):
                if _is_main_guard(stmt.test):
                    continue
                self._walk_body(stmt.body)
                self._walk_body(stmt.orelse)
            elif isinstance(stmt, ast.Try):
                self._walk_body(stmt.body)
                for handler in stmt.handlers:
                    self._walk_body(handler.body)
                self._walk_body(stmt.orelse)
                self._walk_body(stmt.finalbody)
            elif isinstance(stmt, (ast.With, ast.AsyncWith)):
                self._walk_body(stmt.body)

    # -- definitions --

    def _add_function(self, node: ast.AST) -> None:
        qname = f"{self.module_name}.{node.name}"
        if qname in self._seen_qnames:
            return
        self._seen_qnames.add(qname)
        self.definitions.append(
            DefFact(
                kind="function",
                name=node.name,
                qualified_name=qname,
                signature=self._signature(node),
                span=self._def_span(node),
            )
        )
        self.functions.append(node)

    def _add_class(self, node: ast.ClassDef) -> None:
        qname = f"{self.module_name}.{node.name}"
        if qname in self._seen_qnames:
            return
        self._seen_qnames.add(qname)
        self.definitions.append(
            DefFact(
                kind="class",
                name=node.name,
                qualified_name=qname,
                signature=self._signature(node),
                span=self._def_span(node),
            )
        )
        self.bases[node.name] = [ast.unparse(b) for b in node.bases]
        self.class_nodes[node.name] = node
        self._walk_class_body(node.name, node.body)

    def _walk_class_body(self, class_name: str, body: list[ast.stmt]) -> None:
        for stmt in body:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                self._add_method(class_name, stmt)
            elif isinstance(stmt, ast.Assign):
                for target in stmt.targets:
                    if isinstance(target, ast.Name):
                        self._add_field(class_name, target.id)
            elif isinstance(stmt, ast.AnnAssign):
                if isinstance(stmt.target, ast.Name):
                    self._add_field(class_name, stmt.target.id)
            elif isinstance(stmt, ast.If):
                if _is_main_guard(stmt.test):
                    continue
                self._walk_class_body(class_name, stmt.body)
                self._walk_class_body(class_name, stmt.orelse)
            # nested classes are not indexed

    def _add_method(self, class_name: str, node: ast.AST) -> None:
        qname = f"{self.module_name}.{class_name}.{node.name}"
        if qname in self._seen_qnames:
            return
        self._seen_qnames.add(qname)
        self.definitions.append(
            DefFact(
                kind="method",
                name=node.name,
                qualified_name=qname,
                class_name=class_name,
                signature=self._signature(node),
                span=self._def_span(node),
            )
        )
        self.methods.append((class_name, node))
        # self.<name> = ... targets anywhere in the method body define fields
        for sub in ast.walk(node):
            targets: list[ast.expr] = []
            if isinstance(sub, ast.Assign):
                targets = list(sub.targets)
            elif isinstance(sub, ast.AnnAssign):
                targets = [sub.target]
            for target in targets:
                for attr in _self_attr_targets(target):
                    self._add_field(class_name, attr)

    def _add_field(self, class_name: str, name: str) -> None:
        if (class_name, name) in self._seen_fields:
            return
        self._seen_fields.add((class_name, name))
        self.definitions.append(
            DefFact(
                kind="field",
                name=name,
                qualified_name=f"{self.module_name}.{class_name}.{name}",
                class_name=class_name,
            )
        )

    def _record_all(self, value: ast.expr) -> None:
        if isinstance(value, (ast.List, ast.Tuple)) and all(
            isinstance(e, ast.Constant) and isinstance(e.value, str) for e in value.elts
        ):
            self.all_exports = [e.value for e in value.elts]

    def _add_global(self, name: str, stmt: ast.stmt) -> None:
        qname = f"{self.module_name}.{name}"
        if qname in self._seen_qnames:
            return
        self._seen_qnames.add(qname)
        self.definitions.append(
            DefFact(
                kind="global_variable",
                name=name,
                qualified_name=qname,
                span=self._stmt_span(stmt),
            )
        )

    def _add_import(self, stmt: "ast.Import | ast.ImportFrom") -> None:
        if isinstance(stmt, ast.Import):
            for alias in stmt.names:
                aliases = ((alias.name, alias.asname),) if alias.asname else ()
                self.imports.append(
                    ImportFact(
                        raw=alias.name,
                        level=0,
                        aliases=aliases,
                        is_module_import=True,
                        line=stmt.lineno,
                    )
                )
            return
        names = tuple(a.name for a in stmt.names if a.name != "*")
        aliases = tuple((a.name, a.asname) for a in stmt.names if a.asname)
        self.imports.append(
            ImportFact(
                raw=stmt.module or "",
                level=stmt.level,
                names=names,
                aliases=aliases,
                star=any(a.name == "*" for a in stmt.names),
                line=stmt.lineno,
            )
        )

    # -- spans and signatures --

    def _def_span(self, node: ast.AST) -> CodeSpan:
        start_line, start_col = node.lineno, node.col_offset
        for dec in getattr(node, "decorator_list", []):
            if (dec.lineno, dec.col_offset) < (start_line, start_col):
                start_line, start_col = dec.lineno, dec.col_offset
        start = self.byte_at(start_line, start_col)
        start = self._include_decorator_at(start)
        end = self.byte_at(node.end_lineno, node.end_col_offset)
        return CodeSpan(self.unit.file_path, start, end, start_line, node.end_lineno)

    def _include_decorator_at(self, start: int) -> int:
        # ast points at the decorator expression; step back to the '@' token
        i = start - 1
        while i >= 0 and self.data[i] in (0x20, 0x09):
            i -= 1
        if i >= 0 and self.data[i] == 0x40:  # '@'
            return i
        return start

    def _stmt_span(self, stmt: ast.stmt) -> CodeSpan:
        start = self.byte_at(stmt.lineno, stmt.col_offset)
        end = self.byte_at(stmt.end_lineno, stmt.end_col_offset)
        return CodeSpan(self.unit.file_path, start, end, stmt.lineno, stmt.end_lineno)

    def _signature(self, node: ast.AST) -> str:
        """Header text from the def/class keyword through the closing colon."""
        start = self.byte_at(node.lineno, node.col_offset)
        end = self.byte_at(node.end_lineno, node.end_col_offset)
        text = self.data[start:end].decode("utf-8")
        header = text[: _header_colon_end(text)]
        return " ".join(header.split())


def _is_main_guard(test: ast.expr) -> bool:
    if not (isinstance(test, ast.Compare) and len(test.ops) == 1):
        return False
    if not isinstance(test.ops[0], ast.Eq):
        return False
    sides = [test.left, test.comparators[0]]
    has_name = any(isinstance(s, ast.Name) and s.id == "__name__" for s in sides)
    has_main = any(
        isinstance(s, ast.Constant) and s.value == "__main__" for s in sides
    )
    return has_name and has_main


def _self_attr_targets(target: ast.expr) -> list[str]:
    """Names of `self.<name>` targets inside an assignment target."""
    if isinstance(target, ast.Attribute):
        if isinstance(target.value, ast.Name) and target.value.id == "self":
            return [target.attr]
        return []
    if isinstance(target, (ast.Tuple, ast.List)):
        out: list[str] = []
        for element in target.elts:
            out.extend(_self_attr_targets(element))
        return out
    return []


_OPENERS = {"(": ")", "[": "]", "{": "}"}


def _header_colon_end(text: str) -> int:
    """Index one past the colon that closes a def/class header.

    Scans forward tracking bracket depth, string literals, and comments so
    colons in annotations, defaults, and dict literals are skipped.
    """
    depth = 0
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "\"'":
            i = _skip_string(text, i)
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in _OPENERS:
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == ":" and depth == 0:
            return i + 1
        i += 1
    return n


def _skip_string(text: str, i: int) -> int:
    quote = text[i]
    if text[i : i + 3] in (quote * 3,):
        closer = quote * 3
        j = text.find(closer, i + 3)
        return len(text) if j < 0 else j + 3
    j = i + 1
    n = len(text)
    while j < n:
        if text[j] == "\\":
            j += 2
            continue
        if text[j] == quote or text[j] == "\n":
            return j + 1
        j += 1
    return n


# --- use collection ----------------------------------------------------------


class _Scopes:
    """Pairs AST scope nodes with symtable tables, consuming each once."""

    def __init__(self, unit: SourceUnit):
        self._unclaimed: dict[int, list[symtable.SymbolTable]] = {}
        self._globals: dict[int, frozenset[str]] = {}
        self.module = symtable.symtable(unit.content, unit.file_path, "exec")

    def claim(
        self, parent: symtable.SymbolTable, name: str, lineno: int
    ) -> "symtable.SymbolTable | None":
        pool = self._unclaimed.setdefault(id(parent), list(parent.get_children()))
        for i, child in enumerate(pool):
            if child.get_name() == name and child.get_lineno() == lineno:
                return pool.pop(i)
        return None

    def global_names(self, scope: symtable.SymbolTable) -> frozenset[str]:
        cached = self._globals.get(id(scope))
        if cached is None:
            cached = frozenset(
                sym.get_name() for sym in scope.get_symbols() if sym.is_global()
            )
            self._globals[id(scope)] = cached
        return cached


def _collect_uses(unit: SourceUnit, tree: ast.Module, extractor: _Extractor) -> list[UseFact]:
    """Name reads inside indexed function/method bodies.

    Bare-name reads are recorded only when the interpreter would resolve
    them at module/global scope (symtable classification), so locals and
    closure variables never surface. `self.<attr>` loads are recorded in
    method bodies. Reads in nested defs attribute to the enclosing indexed
    definition.
    """
    scopes = _Scopes(unit)
    uses: list[UseFact] = []
    seen: set[tuple[str, str, str]] = set()

    def record(reader: str, reader_kind: str, name: str, form: str) -> None:
        key = (reader, name, form)
        if key not in seen:
            seen.add(key)
            uses.append(UseFact(reader=reader, reader_kind=reader_kind, name=name, form=form))

    def visit(node: ast.AST, scope: symtable.SymbolTable, reader: str, kind: str) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            # decorators, defaults, and annotations evaluate in this scope
            for expr in node.decorator_list:
                visit(expr, scope, reader, kind)
            for expr in _arg_exprs(node.args):
                visit(expr, scope, reader, kind)
            if node.returns is not None:
                visit(node.returns, scope, reader, kind)
            sub = scopes.claim(scope, node.name, node.lineno) or scope
            for stmt in node.body:
                visit(stmt, sub, reader, kind)
            return
        if isinstance(node, ast.Lambda):
            for expr in _arg_exprs(node.args):
                visit(expr, scope, reader, kind)
            sub = scopes.claim(scope, "lambda", node.lineno) or scope
            visit(node.body, sub, reader, kind)
            return
        if isinstance(node, ast.ClassDef):
            for expr in node.decorator_list + node.bases + [k.value for k in node.keywords]:
                visit(expr, scope, reader, kind)
            sub = scopes.claim(scope, node.name, node.lineno) or scope
            for stmt in node.body:
                visit(stmt, sub, reader, kind)
            return
        if isinstance(node, (ast.ListComp, ast.SetComp, ast.DictComp, ast.GeneratorExp)):
            # the first iterable evaluates in the enclosing scope
            sub = scopes.claim(scope, _SCOPE_NODE_NAMES[type(node)], node.lineno) or scope
            for i, gen in enumerate(node.generators):
                visit(gen.iter, scope if i == 0 else sub, reader, kind)
                visit(gen.target, sub, reader, kind)
                for cond in gen.ifs:
                    visit(cond, sub, reader, kind)
            if isinstance(node, ast.DictComp):
                visit(node.key, sub, reader, kind)
                visit(node.value, sub, reader, kind)
            else:
                visit(node.elt, sub, reader, kind)
            return
        if isinstance(node, ast.Name):
            if isinstance(node.ctx, ast.Load) and node.id in scopes.global_names(scope):
                record(reader, kind, node.id, "bare-name")
            return
        if isinstance(node, ast.Attribute):
            if (
                kind == "method"
                and isinstance(node.ctx, ast.Load)
                and isinstance(node.value, ast.Name)
                and node.value.id == "self"
            ):
                record(reader, kind, node.attr, "self-attribute")
            visit(node.value, scope, reader, kind)
            return
        for child in ast.iter_child_nodes(node):
            visit(child, scope, reader, kind)

    for node in extractor.functions:
        scope = scopes.claim(scopes.module, node.name, node.lineno)
        if scope is None:
            continue
        reader = f"{extractor.module_name}.{node.name}"
        for stmt in node.body:
            visit(stmt, scope, reader, "function")

    class_scopes: dict[str, symtable.SymbolTable] = {}
    for class_name, node in extractor.methods:
        if class_name not in class_scopes:
            class_node = extractor.class_nodes.get(class_name)
            table = None
            if class_node is not None:
                table = scopes.claim(scopes.module, class_name, class_node.lineno)
            if table is None:
                continue
            class_scopes[class_name] = table
        scope = scopes.claim(class_scopes[class_name], node.name, node.lineno)
        if scope is None:
            continue
        reader = f"{extractor.module_name}.{class_name}.{node.name}"
        for stmt in node.body:
            visit(stmt, scope, reader, "method")

    return uses


def _arg_exprs(args: ast.arguments) -> list[ast.expr]:
    exprs: list[ast.expr] = list(args.defaults)
    exprs.extend(d for d in args.kw_defaults if d is not None)
    for arg in args.posonlyargs + args.args + args.kwonlyargs:
        if arg.annotation is not None:
            exprs.append(arg.annotation)
    for special in (args.vararg, args.kwarg):
        if special is not None and special.annotation is not None:
            exprs.append(special.annotation)
    return exprs
