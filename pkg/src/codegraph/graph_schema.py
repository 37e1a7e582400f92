"""Node/edge type system, node identity, and schema validation.

Six node labels and five edge types form a closed schema. Nodes carry
meta-information only; source text stays on disk behind a code span.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .source_parser import CodeSpan

SCHEMA_VERSION = "1.0"


class NodeLabel(str, Enum):
    MODULE = "MODULE"
    CLASS = "CLASS"
    FUNCTION = "FUNCTION"
    METHOD = "METHOD"
    FIELD = "FIELD"
    GLOBAL_VARIABLE = "GLOBAL_VARIABLE"


class EdgeType(str, Enum):
    CONTAINS = "CONTAINS"
    HAS_METHOD = "HAS_METHOD"
    HAS_FIELD = "HAS_FIELD"
    INHERITS = "INHERITS"
    USES = "USES"


# Allowed (source label, target label) pairs per edge type.
EDGE_ENDPOINTS: dict[EdgeType, tuple[frozenset[NodeLabel], frozenset[NodeLabel]]] = {
    EdgeType.CONTAINS: (
        frozenset({NodeLabel.MODULE}),
        frozenset({NodeLabel.CLASS, NodeLabel.FUNCTION, NodeLabel.GLOBAL_VARIABLE}),
    ),
    EdgeType.HAS_METHOD: (frozenset({NodeLabel.CLASS}), frozenset({NodeLabel.METHOD})),
    EdgeType.HAS_FIELD: (frozenset({NodeLabel.CLASS}), frozenset({NodeLabel.FIELD})),
    EdgeType.INHERITS: (frozenset({NodeLabel.CLASS}), frozenset({NodeLabel.CLASS})),
    EdgeType.USES: (
        frozenset({NodeLabel.FUNCTION, NodeLabel.METHOD}),
        frozenset({NodeLabel.GLOBAL_VARIABLE, NodeLabel.FIELD}),
    ),
}

# Which attributes each label carries beyond (name, file_path).
LABELS_WITH_CLASS_NAME = frozenset({NodeLabel.METHOD, NodeLabel.FIELD})
LABELS_WITH_SIGNATURE = frozenset({NodeLabel.CLASS, NodeLabel.FUNCTION, NodeLabel.METHOD})
LABELS_WITH_SPAN = frozenset(
    {NodeLabel.CLASS, NodeLabel.FUNCTION, NodeLabel.METHOD, NodeLabel.GLOBAL_VARIABLE}
)

# Property keys the query language may reference; `class` aliases class_name.
QUERYABLE_PROPERTIES = ("name", "file_path", "class_name", "signature")
PROPERTY_ALIASES = {"class": "class_name"}


@dataclass(frozen=True)
class NodeRecord:
    """One code symbol. Attribute presence is dictated by the label."""

    id: str
    label: NodeLabel
    name: str
    file_path: str
    class_name: str | None = None
    signature: str | None = None
    code_span: CodeSpan | None = None

    def property_value(self, key: str) -> str | None:
        key = PROPERTY_ALIASES.get(key, key)
        if key == "name":
            return self.name
        if key == "file_path":
            return self.file_path
        if key == "class_name":
            return self.class_name
        if key == "signature":
            return self.signature
        return None


@dataclass(frozen=True)
class EdgeRecord:
    """One typed relationship; USES carries both association attributes."""

    id: str
    type: EdgeType
    source: str
    target: str
    source_association_type: str | None = None
    target_association_type: str | None = None


def node_identity(label: NodeLabel, file_path: str, qualified_name: str) -> str:
    """Deterministic 128-bit node id, stable across runs and machines.

    Lowercase hex of blake2b-128 over ``label "\\x1f" file_path "\\x1f"
    qualified_name``.
    """
    if not label or not file_path or not qualified_name:
        raise ValueError("node identity inputs must be non-empty")
    payload = "\x1f".join((NodeLabel(label).value, file_path, qualified_name))
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


def edge_identity(edge_type: EdgeType, source: str, target: str) -> str:
    """Deterministic edge id over (type, source, target), same recipe as nodes."""
    payload = "\x1f".join((EdgeType(edge_type).value, source, target))
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


@dataclass
class CodeGraph:
    """The full indexed graph plus file-content hashes for staleness checks."""

    repo_root: str
    nodes: list[NodeRecord] = field(default_factory=list)
    edges: list[EdgeRecord] = field(default_factory=list)
    file_hashes: dict[str, str] = field(default_factory=dict)  # path -> sha256

    def sort_canonical(self) -> None:
        self.nodes.sort(key=lambda n: n.id)
        self.edges.sort(key=lambda e: (e.type.value, e.source, e.target))

    def node_counts(self) -> dict[str, int]:
        counts = {label.value: 0 for label in NodeLabel}
        for node in self.nodes:
            counts[node.label.value] += 1
        return counts

    def edge_counts(self) -> dict[str, int]:
        counts = {edge_type.value: 0 for edge_type in EdgeType}
        for edge in self.edges:
            counts[edge.type.value] += 1
        return counts


@dataclass(frozen=True)
class Violation:
    """One schema violation; validation reports data, never raises."""

    kind: str  # endpoint | attribute | dangling
    message: str
    node_id: str | None = None
    edge_id: str | None = None


def validate(graph: CodeGraph) -> list[Violation]:
    """Check every edge's endpoints and every node's attribute set.

    Empty result iff the graph conforms to the schema.
    """
    violations: list[Violation] = []
    by_id = {node.id: node for node in graph.nodes}

    for node in graph.nodes:
        want_class = node.label in LABELS_WITH_CLASS_NAME
        if want_class != (node.class_name is not None):
            violations.append(
                Violation(
                    kind="attribute",
                    message=f"{node.label.value} node {node.name!r} "
                    f"{'missing' if want_class else 'must not carry'} class_name",
                    node_id=node.id,
                )
            )
        want_sig = node.label in LABELS_WITH_SIGNATURE
        if want_sig != (node.signature is not None):
            violations.append(
                Violation(
                    kind="attribute",
                    message=f"{node.label.value} node {node.name!r} "
                    f"{'missing' if want_sig else 'must not carry'} signature",
                    node_id=node.id,
                )
            )
        want_span = node.label in LABELS_WITH_SPAN
        if want_span != (node.code_span is not None):
            violations.append(
                Violation(
                    kind="attribute",
                    message=f"{node.label.value} node {node.name!r} "
                    f"{'missing' if want_span else 'must not carry'} code_span",
                    node_id=node.id,
                )
            )

    for edge in graph.edges:
        source = by_id.get(edge.source)
        target = by_id.get(edge.target)
        if source is None or target is None:
            violations.append(
                Violation(
                    kind="dangling",
                    message=f"{edge.type.value} edge references a missing node",
                    edge_id=edge.id,
                )
            )
            continue
        allowed_src, allowed_tgt = EDGE_ENDPOINTS[edge.type]
        if source.label not in allowed_src or target.label not in allowed_tgt:
            violations.append(
                Violation(
                    kind="endpoint",
                    message=f"{edge.type.value} edge {source.label.value}->{target.label.value} "
                    "violates endpoint constraints",
                    edge_id=edge.id,
                )
            )
        if edge.type is EdgeType.USES:
            if (
                edge.source_association_type != source.label.value
                or edge.target_association_type != target.label.value
            ):
                violations.append(
                    Violation(
                        kind="attribute",
                        message="USES edge association attributes missing or wrong",
                        edge_id=edge.id,
                    )
                )
        elif edge.source_association_type or edge.target_association_type:
            violations.append(
                Violation(
                    kind="attribute",
                    message=f"{edge.type.value} edge must not carry association attributes",
                    edge_id=edge.id,
                )
            )

    return violations


SCHEMA_TEXT = """## Nodes

MODULE:
  Attributes:
    - name (String): Name of the module (dotted name)
    - file_path (String): File path of the module

CLASS:
  Attributes:
    - name (String): Name of the class
    - file_path (String): File path of the class
    - signature (String): The signature of the class
    - code (String): Full code of the class (stored as a span index; fetch on demand)

FUNCTION:
  Attributes:
    - name (String): Name of the function
    - file_path (String): File path of the function
    - code (String): Full code of the function (stored as a span index; fetch on demand)
    - signature (String): The signature of the function

FIELD:
  Attributes:
    - name (String): Name of the field
    - file_path (String): File path of the field
    - class (String): Name of the class the field belongs to

METHOD:
  Attributes:
    - name (String): Name of the method
    - file_path (String): File path of the method
    - class (String): Name of the class the method belongs to
    - code (String): Full code of the method (stored as a span index; fetch on demand)
    - signature (String): The signature of the method

GLOBAL_VARIABLE:
  Attributes:
    - name (String): Name of the global variable
    - file_path (String): File path of the global variable
    - code (String): The code segment in which the global variable is defined (span index)

## Edges

CONTAINS:
  Source: MODULE
  Target: CLASS or FUNCTION or GLOBAL_VARIABLE

HAS_METHOD:
  Source: CLASS
  Target: METHOD

HAS_FIELD:
  Source: CLASS
  Target: FIELD

INHERITS:
  Source: CLASS
  Target: CLASS (base class)

USES:
  Source: FUNCTION or METHOD
  Target: GLOBAL_VARIABLE or FIELD
  Attributes:
    - source_association_type (String): FUNCTION, METHOD
    - target_association_type (String): GLOBAL_VARIABLE, FIELD
"""


def schema_text() -> str:
    """The versioned schema resource injected into prompts and served over HTTP."""
    return SCHEMA_TEXT
