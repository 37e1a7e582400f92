"""Snapshot persistence and read-only access to an indexed graph.

A snapshot is three files in one directory: ``meta.json`` (versions, repo
root, per-file content hashes), ``nodes.jsonl``, and ``edges.jsonl``, all
canonically ordered so identical graphs serialize to identical bytes.
Source text never enters the snapshot; nodes carry byte spans that
``resolve_code`` reads from disk on demand, verifying content hashes.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .graph_schema import (
    SCHEMA_VERSION,
    CodeGraph,
    EdgeRecord,
    EdgeType,
    NodeLabel,
    NodeRecord,
)
from .source_parser import CodeSpan

FORMAT_VERSION = 1

_LOCK_NAME = ".lock"


class SnapshotError(Exception):
    """Missing, corrupt, or referentially broken snapshot data."""


class VersionError(SnapshotError):
    """Snapshot written by an unsupported format version."""


class IoError(OSError):
    """Filesystem failure while writing a snapshot."""


class NotFound(Exception):
    """Unknown node id."""


class NoCodeSpan(Exception):
    """The node's label carries no code span (MODULE, FIELD)."""


class StaleSource(Exception):
    """On-disk file no longer matches the indexed content hash."""

    def __init__(self, file_path: str):
        super().__init__(
            f"{file_path} changed since indexing; re-index before reading code"
        )
        self.file_path = file_path


def node_to_json(node: NodeRecord) -> dict:
    obj: dict = {
        "id": node.id,
        "label": node.label.value,
        "name": node.name,
        "file_path": node.file_path,
    }
    if node.class_name is not None:
        obj["class_name"] = node.class_name
    if node.signature is not None:
        obj["signature"] = node.signature
    if node.code_span is not None:
        span = node.code_span
        obj["span"] = {
            "start_byte": span.start_byte,
            "end_byte": span.end_byte,
            "start_line": span.start_line,
            "end_line": span.end_line,
        }
    return obj


def node_from_json(obj: dict) -> NodeRecord:
    span = None
    if "span" in obj:
        raw = obj["span"]
        span = CodeSpan(
            file_path=obj["file_path"],
            start_byte=raw["start_byte"],
            end_byte=raw["end_byte"],
            start_line=raw["start_line"],
            end_line=raw["end_line"],
        )
    return NodeRecord(
        id=obj["id"],
        label=NodeLabel(obj["label"]),
        name=obj["name"],
        file_path=obj["file_path"],
        class_name=obj.get("class_name"),
        signature=obj.get("signature"),
        code_span=span,
    )


def edge_to_json(edge: EdgeRecord) -> dict:
    obj: dict = {
        "id": edge.id,
        "type": edge.type.value,
        "source": edge.source,
        "target": edge.target,
    }
    if edge.source_association_type is not None:
        obj["source_association_type"] = edge.source_association_type
    if edge.target_association_type is not None:
        obj["target_association_type"] = edge.target_association_type
    return obj


def edge_from_json(obj: dict) -> EdgeRecord:
    return EdgeRecord(
        id=obj["id"],
        type=EdgeType(obj["type"]),
        source=obj["source"],
        target=obj["target"],
        source_association_type=obj.get("source_association_type"),
        target_association_type=obj.get("target_association_type"),
    )


def save_snapshot(graph: CodeGraph, directory: str, created_at: str | None = None) -> None:
    """Write meta.json, nodes.jsonl, and edges.jsonl canonically.

    `created_at` is recorded only when given; leaving it unset keeps
    snapshot bytes a pure function of the indexed content. Writing takes an
    exclusive lock file in the directory.
    """
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create snapshot directory: {exc}") from exc
    lock_path = os.path.join(directory, _LOCK_NAME)
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise IoError(f"snapshot directory is locked: {lock_path}") from exc
    except OSError as exc:
        raise IoError(f"cannot lock snapshot directory: {exc}") from exc
    try:
        nodes = sorted(graph.nodes, key=lambda n: n.id)
        edges = sorted(graph.edges, key=lambda e: (e.type.value, e.source, e.target))
        meta: dict = {
            "format_version": FORMAT_VERSION,
            "schema_version": SCHEMA_VERSION,
            "repo_root": graph.repo_root,
            "files": [
                {"path": path, "hash": graph.file_hashes[path]}
                for path in sorted(graph.file_hashes)
            ],
        }
        if created_at is not None:
            meta["created_at"] = created_at
        _write_text(
            os.path.join(directory, "meta.json"),
            json.dumps(meta, indent=2, sort_keys=True) + "\n",
        )
        _write_text(
            os.path.join(directory, "nodes.jsonl"),
            "".join(json.dumps(node_to_json(n), sort_keys=True) + "\n" for n in nodes),
        )
        _write_text(
            os.path.join(directory, "edges.jsonl"),
            "".join(json.dumps(edge_to_json(e), sort_keys=True) + "\n" for e in edges),
        )
    finally:
        os.close(lock_fd)
        os.unlink(lock_path)


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass
class GraphHandle:
    """Immutable read view over one loaded snapshot, fully indexed."""

    repo_root: str
    schema_version: str
    created_at: str | None
    nodes: list[NodeRecord]
    edges: list[EdgeRecord]
    file_hashes: dict[str, str]
    by_id: dict[str, NodeRecord] = field(default_factory=dict)
    by_label_name: dict[tuple[NodeLabel, str], list[NodeRecord]] = field(
        default_factory=dict
    )
    out_edges: dict[str, list[EdgeRecord]] = field(default_factory=dict)
    in_edges: dict[str, list[EdgeRecord]] = field(default_factory=dict)

    def node(self, node_id: str) -> NodeRecord:
        record = self.by_id.get(node_id)
        if record is None:
            raise NotFound(f"unknown node id: {node_id}")
        return record

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


def load_snapshot(directory: str) -> GraphHandle:
    """Load and index a snapshot; all reads afterwards are in-memory."""
    meta_path = os.path.join(directory, "meta.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as handle:
            meta = json.load(handle)
    except FileNotFoundError as exc:
        raise SnapshotError(f"missing meta.json in {directory}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"corrupt meta.json: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"snapshot format_version {version!r} unsupported (expected {FORMAT_VERSION})"
        )

    nodes = _load_records(os.path.join(directory, "nodes.jsonl"), node_from_json)
    edges = _load_records(os.path.join(directory, "edges.jsonl"), edge_from_json)

    handle = GraphHandle(
        repo_root=meta.get("repo_root", ""),
        schema_version=meta.get("schema_version", ""),
        created_at=meta.get("created_at"),
        nodes=nodes,
        edges=edges,
        file_hashes={entry["path"]: entry["hash"] for entry in meta.get("files", [])},
    )
    for node in nodes:
        if node.id in handle.by_id:
            raise SnapshotError(f"duplicate node id {node.id}")
        handle.by_id[node.id] = node
        handle.by_label_name.setdefault((node.label, node.name), []).append(node)
    for edge in edges:
        if edge.source not in handle.by_id or edge.target not in handle.by_id:
            raise SnapshotError(
                f"edge {edge.id} references a node missing from nodes.jsonl"
            )
        handle.out_edges.setdefault(edge.source, []).append(edge)
        handle.in_edges.setdefault(edge.target, []).append(edge)
    return handle


def _load_records(path: str, build):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except FileNotFoundError as exc:
        raise SnapshotError(f"missing snapshot file: {path}") from exc
    except OSError as exc:
        raise SnapshotError(f"unreadable snapshot file: {exc}") from exc
    records = []
    name = os.path.basename(path)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"{name} line {lineno}: invalid record ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise SnapshotError(f"{name} line {lineno}: not an object")
        try:
            records.append(build(obj))
        except (KeyError, ValueError, TypeError) as exc:
            raise SnapshotError(f"{name} line {lineno}: bad record ({exc})") from exc
    return records


def snapshot_to_graph(handle: GraphHandle) -> CodeGraph:
    """Rebuild a CodeGraph value from a loaded handle (round-trip aid)."""
    graph = CodeGraph(
        repo_root=handle.repo_root,
        nodes=list(handle.nodes),
        edges=list(handle.edges),
        file_hashes=dict(handle.file_hashes),
    )
    graph.sort_canonical()
    return graph


def neighbors(
    handle: GraphHandle,
    node_id: str,
    direction: str = "both",
    type_filter: EdgeType | None = None,
) -> list[tuple[EdgeRecord, NodeRecord]]:
    """Adjacent (edge, neighbor) pairs, sorted by (edge type, neighbor id)."""
    handle.node(node_id)
    if direction not in ("out", "in", "both"):
        raise ValueError(f"direction must be out, in, or both: {direction!r}")
    results: list[tuple[EdgeRecord, NodeRecord]] = []
    if direction in ("out", "both"):
        for edge in handle.out_edges.get(node_id, []):
            if type_filter is None or edge.type is type_filter:
                results.append((edge, handle.by_id[edge.target]))
    if direction in ("in", "both"):
        for edge in handle.in_edges.get(node_id, []):
            if type_filter is None or edge.type is type_filter:
                results.append((edge, handle.by_id[edge.source]))
    results.sort(key=lambda pair: (pair[0].type.value, pair[1].id))
    return results


def resolve_code(handle: GraphHandle, node_id: str, repo_root: str) -> str:
    """Exact source text behind a node's span, after a freshness check.

    The file's current content hash must equal the hash recorded at index
    time; otherwise the snippet is withheld and the caller must re-index.
    """
    node = handle.node(node_id)
    if node.code_span is None:
        raise NoCodeSpan(f"{node.label.value} nodes carry no code span")
    file_path = os.path.join(repo_root, node.file_path)
    try:
        with open(file_path, "rb") as fh:
            data = fh.read()
    except OSError:
        raise StaleSource(node.file_path)
    recorded = handle.file_hashes.get(node.file_path)
    if recorded is None or hashlib.sha256(data).hexdigest() != recorded:
        raise StaleSource(node.file_path)
    span = node.code_span
    return data[span.start_byte : span.end_byte].decode("utf-8")
