import pytest

from codegraph.query_engine import (
    ExecutionCaps,
    NodeCell,
    QuerySyntaxError,
    UnknownEdgeType,
    UnknownLabel,
    UnknownProperty,
    execute,
    parse_query,
    render_result,
)

from oracle_query import QueryGenerator, brute_force_rows, encode_engine_rows

BIG = ExecutionCaps(max_rows=10**9, max_chars=10**9)


class TestParser:
    def test_valid_single_hop(self):
        ast = parse_query(
            'MATCH (m:MODULE {name: "pkg.core"})-[:CONTAINS]->(c:CLASS) RETURN c.name'
        )
        assert len(ast.patterns) == 1
        assert len(ast.patterns[0].rels) == 1
        assert ast.patterns[0].nodes[0].props == (("name", "pkg.core"),)

    def test_unknown_label(self):
        with pytest.raises(UnknownLabel) as err:
            parse_query("MATCH (c:KLASS) RETURN c")
        assert err.value.name == "KLASS"
        assert err.value.column == 10

    def test_unknown_edge_type(self):
        with pytest.raises(UnknownEdgeType):
            parse_query("MATCH (a)-[:OWNS]->(b) RETURN a")

    def test_unknown_property(self):
        with pytest.raises(UnknownProperty):
            parse_query('MATCH (a) WHERE a.nombre = "x" RETURN a')

    def test_syntax_error_position(self):
        with pytest.raises(QuerySyntaxError) as err:
            parse_query("MATCH (c:CLASS RETURN c")
        assert err.value.line == 1
        assert err.value.column > 1

    def test_keywords_case_insensitive(self):
        ast = parse_query('match (c:CLASS) where c.name = "X" return c.name limit 3')
        assert ast.limit == 3

    def test_class_alias(self):
        ast = parse_query('MATCH (m:METHOD {class: "Engine"}) RETURN m.class')
        assert ast.patterns[0].nodes[0].props == (("class_name", "Engine"),)
        assert ast.return_items[0].key == "class_name"

    def test_unbound_variable_rejected(self):
        with pytest.raises(QuerySyntaxError, match="not bound"):
            parse_query("MATCH (a) RETURN b")
        with pytest.raises(QuerySyntaxError, match="not bound"):
            parse_query('MATCH (a) WHERE b.name = "x" RETURN a')

    def test_hop_cap_enforced(self):
        ok = "MATCH (a)-[]->(b)-[]->(c)-[]->(d)-[]->(e) RETURN a"
        parse_query(ok)  # exactly 4 hops
        too_many = "MATCH (a)-[]->(b)-[]->(c)-[]->(d)-[]->(e)-[]->(f) RETURN a"
        with pytest.raises(QuerySyntaxError, match="hops"):
            parse_query(too_many)

    def test_count_star_not_mixable(self):
        with pytest.raises(QuerySyntaxError, match="count"):
            parse_query("MATCH (a) RETURN count(*), a")

    def test_limit_positive(self):
        with pytest.raises(QuerySyntaxError):
            parse_query("MATCH (a) RETURN a LIMIT 0")

    def test_multi_pattern_join(self):
        ast = parse_query(
            "MATCH (m:MODULE)-[:CONTAINS]->(c:CLASS), (c)-[:HAS_METHOD]->(f) RETURN f"
        )
        assert len(ast.patterns) == 2


class TestExecute:
    def test_module_class_method_paths(self, alpha_handle):
        table = execute(
            parse_query(
                "MATCH (m:MODULE)-[:CONTAINS]->(c:CLASS)-[:HAS_METHOD]->"
                '(f:METHOD {name: "stop"}) RETURN m.name, c.name'
            ),
            alpha_handle,
        )
        # both pkg (re-export) and pkg.core contain Engine
        assert table.rows == [["pkg", "Engine"], ["pkg.core", "Engine"]]

    def test_engine_methods_with_inherited(self, alpha_handle):
        table = execute(
            parse_query('MATCH (c:CLASS {name: "Engine"})-[:HAS_METHOD]->(f:METHOD) RETURN f.name'),
            alpha_handle,
        )
        assert [row[0] for row in table.rows] == ["__init__", "run", "stop"]

    def test_empty_match(self, alpha_handle):
        table = execute(
            parse_query('MATCH (n:CLASS) WHERE n.name = "NoSuch" RETURN n'), alpha_handle
        )
        assert table.rows == [] and not table.truncated

    def test_limit_and_total(self, alpha_handle):
        table = execute(parse_query("MATCH (m:MODULE) RETURN m.name LIMIT 2"), alpha_handle)
        assert len(table.rows) == 2
        assert table.total_before_limit == 4
        assert not table.truncated

    def test_monotone_limit_prefix(self, alpha_handle):
        previous = []
        for limit in range(1, 6):
            table = execute(
                parse_query(f"MATCH (m:MODULE)-[:CONTAINS]->(x) RETURN x.name LIMIT {limit}"),
                alpha_handle,
            )
            assert table.rows[: len(previous)] == previous
            previous = table.rows

    def test_count_star(self, alpha_handle):
        table = execute(parse_query("MATCH (c:CLASS) RETURN count(*)"), alpha_handle)
        assert table.rows == [[2]]

    def test_node_cell_projection(self, alpha_handle):
        table = execute(parse_query('MATCH (c:CLASS {name: "Base"}) RETURN c'), alpha_handle)
        (cell,) = table.rows[0]
        assert isinstance(cell, NodeCell)
        assert cell.label == "CLASS" and cell.name == "Base"
        assert cell.id in {n.id for n in alpha_handle.nodes}

    def test_row_cap_marks_truncated(self, alpha_handle):
        table = execute(
            parse_query("MATCH (a) RETURN a.name"),
            alpha_handle,
            ExecutionCaps(max_rows=3, max_chars=10**6),
        )
        assert len(table.rows) == 3
        assert table.truncated
        assert table.total_before_limit == 15

    def test_char_cap_marks_truncated(self, alpha_handle):
        table = execute(
            parse_query("MATCH (a) RETURN a"),
            alpha_handle,
            ExecutionCaps(max_rows=10**6, max_chars=120),
        )
        assert table.truncated
        assert len(table.rows) >= 1

    def test_deterministic_repeat(self, alpha_handle):
        query = 'MATCH (m)-[]->(x) WHERE x.name CONTAINS "e" RETURN m.name, x.name'
        first = execute(parse_query(query), alpha_handle)
        second = execute(parse_query(query), alpha_handle)
        assert first.rows == second.rows
        assert first.to_json() == second.to_json()


class TestDifferential:
    def run_differential(self, handle, queries):
        mismatches = []
        for query in queries:
            ast = parse_query(query)
            engine = encode_engine_rows(execute(ast, handle, BIG))
            oracle = brute_force_rows(ast, handle)
            if engine != oracle:
                mismatches.append((query, engine, oracle))
        assert not mismatches, mismatches[:3]

    def test_systematic_corpus(self, alpha_handle, beta_handle):
        for handle in (alpha_handle, beta_handle):
            generator = QueryGenerator(handle, seed=7)
            self.run_differential(handle, generator.systematic())

    def test_random_corpus_alpha(self, alpha_handle):
        generator = QueryGenerator(alpha_handle, seed=1234)
        queries = [generator.random_query() for _ in range(260)]
        self.run_differential(alpha_handle, queries)

    def test_random_corpus_beta(self, beta_handle):
        # beta has 33 nodes; 3-hop brute force would be 33^4 tuples per query
        generator = QueryGenerator(beta_handle, seed=99, hop_weights=(35, 40, 25, 0))
        queries = [generator.random_query() for _ in range(150)]
        self.run_differential(beta_handle, queries)


class TestRender:
    def test_full_table_within_budget(self, alpha_handle):
        table = execute(parse_query("MATCH (m:MODULE) RETURN m.name"), alpha_handle)
        text = render_result(table, 4000)
        assert "pkg.core" in text and "truncated" not in text

    def test_truncation_trailer(self, alpha_handle):
        table = execute(parse_query("MATCH (a)-[]->(b) RETURN a, b"), alpha_handle, BIG)
        text = render_result(table, 300)
        assert "... truncated (showing" in text
        assert f"of {len(table.rows)} rows)" in text
        assert len(text) <= 300

    def test_empty_table(self, alpha_handle):
        table = execute(
            parse_query('MATCH (c:CLASS {name: "Nope"}) RETURN c.name'), alpha_handle
        )
        assert "(0 rows)" in render_result(table, 1000)
