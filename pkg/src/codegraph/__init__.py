"""Code graph engine: index Python repositories into a typed graph,
persist snapshots, answer Cypher-subset queries, and drive an iterative
two-agent retrieval loop over the result.
"""

from .graph_schema import (
    SCHEMA_VERSION,
    CodeGraph,
    EdgeRecord,
    EdgeType,
    NodeLabel,
    NodeRecord,
    node_identity,
    schema_text,
    validate,
)
from .graph_store import (
    GraphHandle,
    load_snapshot,
    neighbors,
    resolve_code,
    save_snapshot,
)
from .indexer import IndexConfig, IndexReport, index_repository
from .query_engine import ExecutionCaps, ResultTable, execute, parse_query, render_result
from .source_parser import SourceUnit, extract_facts, normalize_import, resolve_module_name

__all__ = [
    "SCHEMA_VERSION",
    "CodeGraph",
    "EdgeRecord",
    "EdgeType",
    "ExecutionCaps",
    "GraphHandle",
    "IndexConfig",
    "IndexReport",
    "NodeLabel",
    "NodeRecord",
    "ResultTable",
    "SourceUnit",
    "execute",
    "extract_facts",
    "index_repository",
    "load_snapshot",
    "neighbors",
    "node_identity",
    "normalize_import",
    "parse_query",
    "render_result",
    "resolve_code",
    "resolve_module_name",
    "save_snapshot",
    "schema_text",
    "validate",
]
