"""Reference query evaluator and grammar-driven query generator.

The evaluator enumerates every |V|^k assignment of nodes to the query's
variables and filters, sharing no execution code with the engine. Rows are
encoded as comparable tuples so engine output and oracle output can be
compared as multisets.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter

from codegraph.graph_schema import EdgeType, NodeLabel
from codegraph.query_engine import BoolOp, Comparison, NodeCell, NotOp, QueryAst


def encode_engine_rows(table) -> Counter:
    counter: Counter = Counter()
    for row in table.rows:
        encoded = []
        for cell in row:
            if isinstance(cell, NodeCell):
                encoded.append(("node", cell.id))
            elif cell is None:
                encoded.append(("none",))
            elif isinstance(cell, int):
                encoded.append(("int", cell))
            else:
                encoded.append(("str", cell))
        counter[tuple(encoded)] += 1
    return counter


def brute_force_rows(ast: QueryAst, handle) -> Counter:
    """All result rows by exhaustive assignment, as an encoded multiset."""
    variables: list[str] = []
    for pattern in ast.patterns:
        for node in pattern.nodes:
            if node.var not in variables:
                variables.append(node.var)
    edge_set = {(e.type.value, e.source, e.target) for e in handle.edges}
    all_nodes = sorted(handle.nodes, key=lambda n: n.id)

    satisfying = []
    for combo in itertools.product(all_nodes, repeat=len(variables)):
        env = dict(zip(variables, combo))
        if not all(_pattern_holds(p, env, edge_set) for p in ast.patterns):
            continue
        if ast.where is not None and not _where_holds(ast.where, env):
            continue
        satisfying.append(env)

    counter: Counter = Counter()
    if ast.return_items[0].kind == "count":
        counter[(("int", len(satisfying)),)] += 1
        return counter
    for env in satisfying:
        row = []
        for item in ast.return_items:
            node = env[item.var]
            if item.kind == "var":
                row.append(("node", node.id))
            else:
                value = node.property_value(item.key)
                row.append(("none",) if value is None else ("str", value))
        counter[tuple(row)] += 1
    return counter


def _pattern_holds(pattern, env, edge_set) -> bool:
    for node_pattern in pattern.nodes:
        node = env[node_pattern.var]
        if node_pattern.label is not None and node.label is not node_pattern.label:
            return False
        for key, value in node_pattern.props:
            if node.property_value(key) != value:
                return False
    for i, rel in enumerate(pattern.rels):
        left = env[pattern.nodes[i].var]
        right = env[pattern.nodes[i + 1].var]
        src, tgt = (left, right) if rel.direction == "out" else (right, left)
        if rel.edge_type is not None:
            if (rel.edge_type.value, src.id, tgt.id) not in edge_set:
                return False
        else:
            if not any(
                (edge_type.value, src.id, tgt.id) in edge_set for edge_type in EdgeType
            ):
                return False
    return True


def _where_holds(expr, env) -> bool:
    if isinstance(expr, Comparison):
        value = env[expr.var].property_value(expr.key)
        if value is None:
            return False
        if expr.op == "=":
            return value == expr.value
        if expr.op == "<>":
            return value != expr.value
        if expr.op == "CONTAINS":
            return expr.value in value
        if expr.op == "STARTS WITH":
            return value.startswith(expr.value)
        if expr.op == "ENDS WITH":
            return value.endswith(expr.value)
        raise AssertionError(expr.op)
    if isinstance(expr, NotOp):
        return not _where_holds(expr.operand, env)
    if isinstance(expr, BoolOp):
        results = [_where_holds(op, env) for op in expr.operands]
        return all(results) if expr.op == "AND" else any(results)
    raise AssertionError(type(expr))


# --- generator -----------------------------------------------------------------


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


class QueryGenerator:
    """Grammar-driven random queries with values drawn from the graph."""

    def __init__(self, handle, seed: int, hop_weights: tuple[int, ...] = (30, 40, 20, 10)):
        self.rng = random.Random(seed)
        self.hop_weights = hop_weights
        names = sorted({n.name for n in handle.nodes})
        paths = sorted({n.file_path for n in handle.nodes})
        classes = sorted({n.class_name for n in handle.nodes if n.class_name})
        self.values = {
            "name": names + ["NoSuchName", ""],
            "file_path": paths + ["missing.py"],
            "class_name": classes + ["Ghost"] if classes else ["Ghost"],
            "signature": ["def ", "class ", "nothing like this"],
        }
        self.keys = ["name", "file_path", "class_name", "signature"]

    def systematic(self) -> list[str]:
        """One query per label and per edge-type/endpoint combination."""
        queries = [f"MATCH (x:{label.value}) RETURN x" for label in NodeLabel]
        for edge_type in EdgeType:
            queries.append(f"MATCH (a)-[:{edge_type.value}]->(b) RETURN a, b")
            queries.append(f"MATCH (a)<-[:{edge_type.value}]-(b) RETURN a.name, b.name")
            for src in NodeLabel:
                for tgt in NodeLabel:
                    queries.append(
                        f"MATCH (a:{src.value})-[:{edge_type.value}]->(b:{tgt.value}) "
                        "RETURN a.name, b.name"
                    )
        return queries

    def random_query(self) -> str:
        rng = self.rng
        hops = rng.choices([0, 1, 2, 3], weights=self.hop_weights)[0]
        var_names = ["a", "b", "c", "d"]
        bound = [var_names[0]]
        parts = [self._node(var_names[0])]
        for hop in range(hops):
            direction = rng.choice(["out", "in"])
            edge = rng.choice(list(EdgeType) + [None])
            rel = f"-[{':' + edge.value if edge else ''}]->"
            if direction == "in":
                rel = f"<-[{':' + edge.value if edge else ''}]-"
            # occasionally rebind an earlier variable to force a join
            if hop and rng.random() < 0.15:
                var = rng.choice(bound)
            else:
                var = var_names[hop + 1]
                bound.append(var)
            parts.append(rel)
            parts.append(self._node(var))
        match = "MATCH " + "".join(parts)

        where = ""
        if rng.random() < 0.55:
            where = " WHERE " + self._expr(bound, depth=0)
        items = []
        if rng.random() < 0.08:
            items = ["count(*)"]
        else:
            for _ in range(rng.randint(1, 3)):
                var = rng.choice(bound)
                if rng.random() < 0.4:
                    items.append(var)
                else:
                    key = rng.choice(self.keys + ["class"])
                    items.append(f"{var}.{key}")
        return f"{match}{where} RETURN {', '.join(items)}"

    def _node(self, var: str) -> str:
        rng = self.rng
        label = rng.choice(list(NodeLabel) + [None, None])
        inner = var
        if label is not None:
            inner += f":{label.value}"
        if rng.random() < 0.35:
            key = rng.choice(self.keys)
            value = rng.choice(self.values[key])
            inner += " {" + f"{key}: {_quote(value)}" + "}"
        return f"({inner})"

    def _expr(self, bound: list[str], depth: int) -> str:
        rng = self.rng
        roll = rng.random()
        if depth < 2 and roll < 0.18:
            return f"NOT {self._expr(bound, depth + 1)}"
        if depth < 2 and roll < 0.40:
            op = rng.choice(["AND", "OR"])
            return (
                f"({self._expr(bound, depth + 1)} {op} {self._expr(bound, depth + 1)})"
            )
        var = rng.choice(bound)
        key = rng.choice(self.keys)
        op = rng.choice(["=", "<>", "CONTAINS", "STARTS WITH", "ENDS WITH"])
        value = rng.choice(self.values[key])
        if op in ("CONTAINS", "STARTS WITH", "ENDS WITH") and value and rng.random() < 0.5:
            cut = self.rng.randint(0, len(value))
            value = value[:cut] if op != "ENDS WITH" else value[cut:]
        return f"{var}.{key} {op} {_quote(value)}"
