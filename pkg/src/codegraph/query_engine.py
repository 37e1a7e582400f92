"""Cypher-subset parser and executor over a read-only graph handle.

Supported surface: MATCH / WHERE / RETURN / LIMIT with node labels, edge
types, inline property equalities, string comparisons (=, <>, CONTAINS,
STARTS WITH, ENDS WITH) under AND/OR/NOT, plain projections, and a lone
count(*). Execution is deterministic: distinct variable bindings, a
canonical row sort, LIMIT, then row/char caps.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph_schema import (
    PROPERTY_ALIASES,
    QUERYABLE_PROPERTIES,
    EdgeType,
    NodeLabel,
    NodeRecord,
)
from .graph_store import GraphHandle

MAX_HOPS = 4

DEFAULT_MAX_ROWS = 100
DEFAULT_MAX_CHARS = 4000


class QueryError(Exception):
    """Base for all query-text errors; carries a position when known."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.line = line
        self.column = column


class QuerySyntaxError(QueryError):
    pass


class UnknownLabel(QueryError):
    def __init__(self, name: str, line: int = 0, column: int = 0):
        super().__init__(f"unknown node label: {name}", line, column)
        self.name = name


class UnknownEdgeType(QueryError):
    def __init__(self, name: str, line: int = 0, column: int = 0):
        super().__init__(f"unknown edge type: {name}", line, column)
        self.name = name


class UnknownProperty(QueryError):
    def __init__(self, name: str, line: int = 0, column: int = 0):
        super().__init__(f"unknown property: {name}", line, column)
        self.name = name


# --- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class NodePattern:
    var: str  # synthesized for anonymous nodes
    label: NodeLabel | None
    props: tuple[tuple[str, str], ...]  # normalized key -> string value


@dataclass(frozen=True)
class RelPattern:
    direction: str  # out | in
    edge_type: EdgeType | None


@dataclass(frozen=True)
class PathPattern:
    nodes: tuple[NodePattern, ...]
    rels: tuple[RelPattern, ...]


@dataclass(frozen=True)
class Comparison:
    var: str
    key: str
    op: str  # = | <> | CONTAINS | STARTS WITH | ENDS WITH
    value: str


@dataclass(frozen=True)
class BoolOp:
    op: str  # AND | OR
    operands: tuple


@dataclass(frozen=True)
class NotOp:
    operand: object


@dataclass(frozen=True)
class ReturnItem:
    kind: str  # var | prop | count
    var: str = ""
    key: str = ""
    text: str = ""  # column header as written


@dataclass(frozen=True)
class QueryAst:
    patterns: tuple[PathPattern, ...]
    where: object | None
    return_items: tuple[ReturnItem, ...]
    limit: int | None


# --- tokenizer ------------------------------------------------------------------

_KEYWORDS = {
    "MATCH",
    "WHERE",
    "RETURN",
    "LIMIT",
    "AND",
    "OR",
    "NOT",
    "CONTAINS",
    "STARTS",
    "ENDS",
    "WITH",
}

_PUNCT = {
    "<-[": "REL_IN_OPEN",
    "]->": "REL_OUT_CLOSE",
    "-[": "REL_OUT_OPEN",
    "]-": "REL_IN_CLOSE",
    "<>": "NEQ",
    "(": "LPAREN",
    ")": "RPAREN",
    "{": "LBRACE",
    "}": "RBRACE",
    ":": "COLON",
    ",": "COMMA",
    ".": "DOT",
    "=": "EQ",
    "*": "STAR",
}


@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT | KEYWORD | STRING | INT | punct kind | EOF
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    line, line_start = 1, 0
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
            line_start = i
            continue
        if ch in " \t\r":
            i += 1
            continue
        col = i - line_start + 1
        matched = False
        for punct, kind in _PUNCT.items():
            if text.startswith(punct, i):
                tokens.append(_Token(kind, punct, line, col))
                i += len(punct)
                matched = True
                break
        if matched:
            continue
        if ch in "\"'":
            value, i = _scan_string(text, i, line, col)
            tokens.append(_Token("STRING", value, line, col))
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("INT", text[i:j], line, col))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "KEYWORD" if word.upper() in _KEYWORDS else "IDENT"
            tokens.append(_Token(kind, word, line, col))
            i = j
            continue
        raise QuerySyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("EOF", "", line, n - line_start + 1))
    return tokens


def _scan_string(text: str, i: int, line: int, col: int) -> tuple[str, int]:
    quote = text[i]
    out: list[str] = []
    j = i + 1
    n = len(text)
    while j < n:
        ch = text[j]
        if ch == "\\" and j + 1 < n:
            escaped = text[j + 1]
            out.append({"n": "\n", "t": "\t"}.get(escaped, escaped))
            j += 2
            continue
        if ch == quote:
            return "".join(out), j + 1
        if ch == "\n":
            break
        out.append(ch)
        j += 1
    raise QuerySyntaxError("unterminated string literal", line, col)


# --- parser ---------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.anon_count = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        if token.kind != "EOF":
            self.pos += 1
        return token

    def fail(self, message: str, token: _Token | None = None) -> None:
        token = token or self.peek()
        shown = token.text or "end of query"
        raise QuerySyntaxError(f"{message} (got {shown!r})", token.line, token.column)

    def expect(self, kind: str, what: str) -> _Token:
        token = self.peek()
        if token.kind != kind:
            self.fail(f"expected {what}", token)
        return self.advance()

    def keyword(self, word: str) -> bool:
        token = self.peek()
        return token.kind == "KEYWORD" and token.text.upper() == word

    def expect_keyword(self, word: str) -> _Token:
        if not self.keyword(word):
            self.fail(f"expected {word}")
        return self.advance()

    # query := MATCH pattern (, pattern)* (WHERE expr)? RETURN item (, item)* (LIMIT int)?
    def parse_query(self) -> QueryAst:
        self.expect_keyword("MATCH")
        patterns = [self.parse_pattern()]
        while self.peek().kind == "COMMA":
            self.advance()
            patterns.append(self.parse_pattern())
        where = None
        if self.keyword("WHERE"):
            self.advance()
            where = self.parse_expr()
        self.expect_keyword("RETURN")
        items = [self.parse_return_item()]
        while self.peek().kind == "COMMA":
            self.advance()
            items.append(self.parse_return_item())
        limit = None
        if self.keyword("LIMIT"):
            self.advance()
            token = self.expect("INT", "a positive integer after LIMIT")
            limit = int(token.text)
            if limit <= 0:
                self.fail("LIMIT must be positive", token)
        if self.peek().kind != "EOF":
            self.fail("unexpected trailing input")

        ast = QueryAst(
            patterns=tuple(patterns),
            where=where,
            return_items=tuple(items),
            limit=limit,
        )
        self._validate(ast)
        return ast

    def parse_pattern(self) -> PathPattern:
        nodes = [self.parse_node()]
        rels: list[RelPattern] = []
        while self.peek().kind in ("REL_OUT_OPEN", "REL_IN_OPEN"):
            rels.append(self.parse_rel())
            nodes.append(self.parse_node())
        return PathPattern(nodes=tuple(nodes), rels=tuple(rels))

    def parse_node(self) -> NodePattern:
        self.expect("LPAREN", "a node pattern '('")
        var = None
        if self.peek().kind == "IDENT":
            var = self.advance().text
        label = None
        if self.peek().kind == "COLON":
            self.advance()
            token = self.peek()
            if token.kind not in ("IDENT", "KEYWORD"):
                self.fail("expected a node label after ':'")
            name = self.advance().text
            try:
                label = NodeLabel(name.upper())
            except ValueError:
                raise UnknownLabel(name, token.line, token.column) from None
        props: list[tuple[str, str]] = []
        if self.peek().kind == "LBRACE":
            self.advance()
            props.append(self.parse_prop())
            while self.peek().kind == "COMMA":
                self.advance()
                props.append(self.parse_prop())
            self.expect("RBRACE", "'}' closing the property map")
        self.expect("RPAREN", "')' closing the node pattern")
        if var is None:
            var = f"_anon{self.anon_count}"
            self.anon_count += 1
        return NodePattern(var=var, label=label, props=tuple(props))

    def parse_prop(self) -> tuple[str, str]:
        token = self.peek()
        if token.kind not in ("IDENT", "KEYWORD"):
            self.fail("expected a property key")
        key = self._property_key(self.advance())
        self.expect("COLON", "':' between property key and value")
        value = self.expect("STRING", "a string property value")
        return key, value.text

    def parse_rel(self) -> RelPattern:
        opener = self.advance()
        direction = "out" if opener.kind == "REL_OUT_OPEN" else "in"
        edge_type = None
        if self.peek().kind == "COLON":
            self.advance()
            token = self.peek()
            if token.kind not in ("IDENT", "KEYWORD"):
                self.fail("expected an edge type after ':'")
            name = self.advance().text
            try:
                edge_type = EdgeType(name.upper())
            except ValueError:
                raise UnknownEdgeType(name, token.line, token.column) from None
        closer = self.peek()
        if direction == "out":
            if closer.kind != "REL_OUT_CLOSE":
                self.fail("expected ']->' closing the relationship")
        else:
            if closer.kind != "REL_IN_CLOSE":
                self.fail("expected ']-' closing the relationship")
        self.advance()
        return RelPattern(direction=direction, edge_type=edge_type)

    def parse_return_item(self) -> ReturnItem:
        token = self.peek()
        if token.kind == "IDENT" and token.text == "count":
            self.advance()
            self.expect("LPAREN", "'(' after count")
            self.expect("STAR", "'*' inside count()")
            self.expect("RPAREN", "')' after count(*)")
            return ReturnItem(kind="count", text="count(*)")
        if token.kind != "IDENT":
            self.fail("expected a variable or count(*) in RETURN")
        var = self.advance().text
        if self.peek().kind == "DOT":
            self.advance()
            key_token = self.peek()
            if key_token.kind not in ("IDENT", "KEYWORD"):
                self.fail("expected a property key after '.'")
            key = self._property_key(self.advance())
            return ReturnItem(kind="prop", var=var, key=key, text=f"{var}.{key_token.text}")
        return ReturnItem(kind="var", var=var, text=var)

    # expr with NOT > AND > OR precedence; parentheses nest
    def parse_expr(self):
        left = self.parse_and()
        while self.keyword("OR"):
            self.advance()
            right = self.parse_and()
            left = BoolOp(op="OR", operands=(left, right))
        return left

    def parse_and(self):
        left = self.parse_unary()
        while self.keyword("AND"):
            self.advance()
            right = self.parse_unary()
            left = BoolOp(op="AND", operands=(left, right))
        return left

    def parse_unary(self):
        if self.keyword("NOT"):
            self.advance()
            return NotOp(operand=self.parse_unary())
        if self.peek().kind == "LPAREN":
            self.advance()
            inner = self.parse_expr()
            self.expect("RPAREN", "')' closing the expression")
            return inner
        return self.parse_comparison()

    def parse_comparison(self) -> Comparison:
        token = self.peek()
        if token.kind != "IDENT":
            self.fail("expected a comparison like var.prop = \"value\"")
        var = self.advance().text
        self.expect("DOT", "'.' after the variable")
        key_token = self.peek()
        if key_token.kind not in ("IDENT", "KEYWORD"):
            self.fail("expected a property key after '.'")
        key = self._property_key(self.advance())
        op_token = self.peek()
        if op_token.kind == "EQ":
            self.advance()
            op = "="
        elif op_token.kind == "NEQ":
            self.advance()
            op = "<>"
        elif op_token.kind == "KEYWORD" and op_token.text.upper() == "CONTAINS":
            self.advance()
            op = "CONTAINS"
        elif op_token.kind == "KEYWORD" and op_token.text.upper() in ("STARTS", "ENDS"):
            first = self.advance().text.upper()
            self.expect_keyword("WITH")
            op = f"{first} WITH"
        else:
            self.fail("expected =, <>, CONTAINS, STARTS WITH, or ENDS WITH")
        value = self.expect("STRING", "a string literal")
        return Comparison(var=var, key=key, op=op, value=value.text)

    def _property_key(self, token: _Token) -> str:
        key = PROPERTY_ALIASES.get(token.text, token.text)
        if key not in QUERYABLE_PROPERTIES:
            raise UnknownProperty(token.text, token.line, token.column)
        return key

    def _validate(self, ast: QueryAst) -> None:
        hops = sum(len(p.rels) for p in ast.patterns)
        if hops > MAX_HOPS:
            raise QuerySyntaxError(
                f"query uses {hops} relationship hops; at most {MAX_HOPS} allowed"
            )
        bound = {n.var for p in ast.patterns for n in p.nodes}
        for item in ast.return_items:
            if item.kind != "count" and item.var not in bound:
                raise QuerySyntaxError(f"variable {item.var!r} is not bound in MATCH")
        kinds = {item.kind for item in ast.return_items}
        if "count" in kinds and len(ast.return_items) > 1:
            raise QuerySyntaxError("count(*) cannot be mixed with other return items")
        for comparison in _walk_comparisons(ast.where):
            if comparison.var not in bound:
                raise QuerySyntaxError(
                    f"variable {comparison.var!r} is not bound in MATCH"
                )


def _walk_comparisons(expr):
    if expr is None:
        return
    if isinstance(expr, Comparison):
        yield expr
    elif isinstance(expr, NotOp):
        yield from _walk_comparisons(expr.operand)
    elif isinstance(expr, BoolOp):
        for operand in expr.operands:
            yield from _walk_comparisons(operand)


def parse_query(text: str) -> QueryAst:
    """Parse query text to an AST; raises QuerySyntaxError / Unknown* errors."""
    return _Parser(_tokenize(text)).parse_query()


# --- execution -------------------------------------------------------------------


@dataclass(frozen=True)
class NodeCell:
    """A whole-node projection: summary text plus the id for navigation."""

    id: str
    label: str
    name: str
    file_path: str
    class_name: str | None = None

    def canonical(self) -> str:
        parts = [f'name: "{self.name}"']
        if self.class_name:
            parts.append(f'class_name: "{self.class_name}"')
        parts.append(f'file_path: "{self.file_path}"')
        return f"(:{self.label} {{{', '.join(parts)}}})"

    def to_json(self) -> dict:
        obj = {
            "kind": "node",
            "id": self.id,
            "label": self.label,
            "name": self.name,
            "file_path": self.file_path,
        }
        if self.class_name is not None:
            obj["class_name"] = self.class_name
        return obj


Cell = str | int | NodeCell | None  # cell types a ResultTable row may hold


def cell_text(cell) -> str:
    if cell is None:
        return ""
    if isinstance(cell, NodeCell):
        return cell.canonical()
    return str(cell)


def _cell_sort_key(cell) -> tuple:
    if isinstance(cell, NodeCell):
        return (cell.canonical(), cell.id)
    return (cell_text(cell), "")


@dataclass
class ExecutionCaps:
    max_rows: int = DEFAULT_MAX_ROWS
    max_chars: int = DEFAULT_MAX_CHARS


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list]
    truncated: bool
    total_before_limit: int

    def to_json(self) -> dict:
        return {
            "columns": self.columns,
            "rows": [
                [cell.to_json() if isinstance(cell, NodeCell) else cell for cell in row]
                for row in self.rows
            ],
            "truncated": self.truncated,
            "total_before_limit": self.total_before_limit,
        }


def execute(
    ast: QueryAst, handle: GraphHandle, caps: ExecutionCaps | None = None
) -> ResultTable:
    """Run a parsed query; deterministic rows under the canonical sort.

    Bindings map every node pattern variable (anonymous included) to a
    node; rows are distinct bindings filtered by WHERE, projected by
    RETURN, sorted canonically, then cut by LIMIT and the caps.
    """
    caps = caps or ExecutionCaps()
    bindings = _match_patterns(ast, handle)
    if ast.where is not None:
        bindings = [b for b in bindings if _eval_where(ast.where, b, handle)]

    if ast.return_items[0].kind == "count":
        rows: list[list] = [[len(bindings)]]
        total = 1
    else:
        rows = [_project(ast.return_items, binding, handle) for binding in bindings]
        rows.sort(key=lambda row: tuple(_cell_sort_key(cell) for cell in row))
        total = len(rows)

    truncated = False
    if ast.limit is not None and len(rows) > ast.limit:
        rows = rows[: ast.limit]
    if len(rows) > caps.max_rows:
        rows = rows[: caps.max_rows]
        truncated = True
    kept: list[list] = []
    budget = caps.max_chars
    for row in rows:
        cost = sum(len(cell_text(cell)) for cell in row) + 1
        if kept and budget - cost < 0:
            truncated = True
            break
        budget -= cost
        kept.append(row)
    columns = [item.text for item in ast.return_items]
    return ResultTable(
        columns=columns, rows=kept, truncated=truncated, total_before_limit=total
    )


def _match_patterns(ast: QueryAst, handle: GraphHandle) -> list[dict]:
    partials: list[dict] = [{}]
    for pattern in ast.patterns:
        partials = _extend_with_pattern(pattern, partials, handle)
        if not partials:
            break
    seen: set[tuple] = set()
    distinct: list[dict] = []
    for binding in partials:
        key = tuple(sorted(binding.items()))
        if key not in seen:
            seen.add(key)
            distinct.append(binding)
    return distinct


def _extend_with_pattern(
    pattern: PathPattern, partials: list[dict], handle: GraphHandle
) -> list[dict]:
    first = pattern.nodes[0]
    extended: list[dict] = []
    for binding in partials:
        for node in _candidates(first, binding, handle):
            new_binding = dict(binding)
            new_binding[first.var] = node.id
            extended.append(new_binding)
    for hop, rel in enumerate(pattern.rels):
        source_pattern = pattern.nodes[hop]
        target_pattern = pattern.nodes[hop + 1]
        next_round: list[dict] = []
        for binding in extended:
            anchor_id = binding[source_pattern.var]
            edge_lists = (
                handle.out_edges.get(anchor_id, [])
                if rel.direction == "out"
                else handle.in_edges.get(anchor_id, [])
            )
            for edge in edge_lists:
                if rel.edge_type is not None and edge.type is not rel.edge_type:
                    continue
                other_id = edge.target if rel.direction == "out" else edge.source
                other = handle.by_id[other_id]
                if not _node_matches(target_pattern, other):
                    continue
                if target_pattern.var in binding:
                    if binding[target_pattern.var] != other_id:
                        continue
                    next_round.append(binding)
                else:
                    new_binding = dict(binding)
                    new_binding[target_pattern.var] = other_id
                    next_round.append(new_binding)
        extended = next_round
        if not extended:
            break
    return extended


def _candidates(pattern: NodePattern, binding: dict, handle: GraphHandle):
    if pattern.var in binding:
        node = handle.by_id[binding[pattern.var]]
        return [node] if _node_matches(pattern, node) else []
    props = dict(pattern.props)
    if pattern.label is not None and "name" in props:
        indexed = handle.by_label_name.get((pattern.label, props["name"]), [])
        return [n for n in indexed if _node_matches(pattern, n)]
    return [n for n in handle.nodes if _node_matches(pattern, n)]


def _node_matches(pattern: NodePattern, node: NodeRecord) -> bool:
    if pattern.label is not None and node.label is not pattern.label:
        return False
    for key, value in pattern.props:
        if node.property_value(key) != value:
            return False
    return True


def _eval_where(expr, binding: dict, handle: GraphHandle) -> bool:
    if isinstance(expr, Comparison):
        node = handle.by_id[binding[expr.var]]
        actual = node.property_value(expr.key)
        if actual is None:
            return False
        if expr.op == "=":
            return actual == expr.value
        if expr.op == "<>":
            return actual != expr.value
        if expr.op == "CONTAINS":
            return expr.value in actual
        if expr.op == "STARTS WITH":
            return actual.startswith(expr.value)
        return actual.endswith(expr.value)
    if isinstance(expr, NotOp):
        return not _eval_where(expr.operand, binding, handle)
    if expr.op == "AND":
        return all(_eval_where(op, binding, handle) for op in expr.operands)
    return any(_eval_where(op, binding, handle) for op in expr.operands)


def _project(items: tuple[ReturnItem, ...], binding: dict, handle: GraphHandle) -> list:
    row: list = []
    for item in items:
        node = handle.by_id[binding[item.var]]
        if item.kind == "var":
            row.append(
                NodeCell(
                    id=node.id,
                    label=node.label.value,
                    name=node.name,
                    file_path=node.file_path,
                    class_name=node.class_name,
                )
            )
        else:
            row.append(node.property_value(item.key))
    return row


# --- rendering ---------------------------------------------------------------


def render_result(table: ResultTable, char_budget: int = DEFAULT_MAX_CHARS) -> str:
    """Fixed-width text table; drops rows from the end to fit the budget."""
    if char_budget <= 0:
        raise ValueError("char_budget must be positive")
    total_rows = len(table.rows)

    def build(rows: list[list], trailer: str | None) -> str:
        texts = [[cell_text(cell) for cell in row] for row in rows]
        widths = [len(col) for col in table.columns]
        for row in texts:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        lines = [
            "  ".join(col.ljust(widths[i]) for i, col in enumerate(table.columns)).rstrip(),
            "  ".join("-" * w for w in widths),
        ]
        for row in texts:
            lines.append(
                "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            )
        if not rows:
            lines.append("(0 rows)")
        if trailer:
            lines.append(trailer)
        if table.total_before_limit > total_rows:
            lines.append(
                f"({total_rows} of {table.total_before_limit} result rows shown; "
                "use LIMIT or a narrower match)"
            )
        return "\n".join(lines)

    text = build(table.rows, None)
    if len(text) <= char_budget:
        return text
    # table length grows monotonically with row count: binary-search the cut
    low, high = 0, len(table.rows) - 1
    best = build([], f"... truncated (showing 0 of {total_rows} rows)")
    while low <= high:
        mid = (low + high) // 2
        candidate = build(
            table.rows[:mid], f"... truncated (showing {mid} of {total_rows} rows)"
        )
        if len(candidate) <= char_budget:
            best = candidate
            low = mid + 1
        else:
            high = mid - 1
    return best
