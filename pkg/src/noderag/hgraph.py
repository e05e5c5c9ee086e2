"""Typed heterogeneous graph: seven node roles, weighted tagged edges, persistence.

Node identity is a content hash, so rebuilding from identical inputs yields
identical ids. Entities dedup by normalized title; content-bearing nodes carry
their provenance in the hash and therefore never collide across chunks.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import FrozenGraphError, GraphFormatError, ValidationError


class NodeType(str, Enum):
    ENTITY = "N"
    RELATIONSHIP = "R"
    SEMANTIC_UNIT = "S"
    ATTRIBUTE = "A"
    HIGH_LEVEL = "H"
    OVERVIEW = "O"
    TEXT = "T"


# Role classifications. Retrievable content may appear in answers; N and O act
# only as entry points. Only the embeddable subset ever gets vectors.
RETRIEVABLE_TYPES = frozenset({
    NodeType.TEXT, NodeType.SEMANTIC_UNIT, NodeType.ATTRIBUTE,
    NodeType.HIGH_LEVEL, NodeType.RELATIONSHIP,
})
ENTRY_EXACT_TYPES = frozenset({NodeType.ENTITY, NodeType.OVERVIEW})
ENTRY_VECTOR_TYPES = frozenset({
    NodeType.SEMANTIC_UNIT, NodeType.ATTRIBUTE, NodeType.HIGH_LEVEL,
})
EMBEDDABLE_TYPES = frozenset({
    NodeType.TEXT, NodeType.SEMANTIC_UNIT, NodeType.ATTRIBUTE, NodeType.HIGH_LEVEL,
})

# Node types whose payload lives in the title, not the content.
_TITLE_ONLY_TYPES = frozenset({NodeType.ENTITY, NodeType.OVERVIEW})


class EdgeKind(str, Enum):
    DECOMPOSITION = "e_d"   # semantic unit -- entity
    RELATION = "e_r"        # relationship -- source/target entity, relationship -- unit
    ATTRIBUTE = "e_a"       # attribute -- entity
    SEMANTIC_MATCH = "e_h"  # high-level element -- unit/attribute
    OVERVIEW = "e_o"        # high-level element -- overview title
    SOURCE = "e_s"          # text chunk -- semantic unit
    HNSW = "hnsw"           # semantic proximity from the ANN base layer


_N, _R, _S, _A, _H, _O, _T = (
    NodeType.ENTITY, NodeType.RELATIONSHIP, NodeType.SEMANTIC_UNIT,
    NodeType.ATTRIBUTE, NodeType.HIGH_LEVEL, NodeType.OVERVIEW, NodeType.TEXT,
)

# Legal unordered endpoint-type pairs per edge kind.
_LEGAL_ENDPOINTS: dict[EdgeKind, frozenset[frozenset[NodeType]]] = {
    EdgeKind.DECOMPOSITION: frozenset({frozenset({_S, _N})}),
    EdgeKind.RELATION: frozenset({frozenset({_R, _N}), frozenset({_R, _S})}),
    EdgeKind.ATTRIBUTE: frozenset({frozenset({_A, _N})}),
    EdgeKind.SEMANTIC_MATCH: frozenset({frozenset({_H, _S}), frozenset({_H, _A})}),
    EdgeKind.OVERVIEW: frozenset({frozenset({_H, _O})}),
    EdgeKind.SOURCE: frozenset({frozenset({_T, _S})}),
}


def legal_endpoints(kind: EdgeKind, tu: NodeType, tv: NodeType) -> bool:
    if kind is EdgeKind.HNSW:
        return tu in EMBEDDABLE_TYPES and tv in EMBEDDABLE_TYPES
    return frozenset({tu, tv}) in _LEGAL_ENDPOINTS[kind]


def normalize_title(title: str) -> str:
    """Canonical form used for entity identity: lowercase, collapsed whitespace."""
    return re.sub(r"\s+", " ", title.strip()).lower()


def make_node_id(type: NodeType, title: str, content: str, provenance: str = "") -> str:
    """Deterministic id over (type, normalized title, content, provenance)."""
    h = hashlib.sha256()
    for part in (type.value, normalize_title(title), content, provenance):
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()[:24]


@dataclass
class HeteroNode:
    id: str
    type: NodeType
    title: str = ""
    content: str = ""
    source_chunk: str | None = None
    community: int | None = None
    human_readable_id: int = -1

    def validate(self) -> None:
        if self.type in _TITLE_ONLY_TYPES:
            if not self.title.strip():
                raise ValidationError(f"{self.type.value} node requires a non-empty title")
            if self.content:
                raise ValidationError(f"{self.type.value} node must have empty content")
        else:
            if not self.content.strip():
                raise ValidationError(f"{self.type.value} node requires non-empty content")

    # Constructors encode the identity rules per role.
    @staticmethod
    def entity(title: str) -> "HeteroNode":
        return HeteroNode(make_node_id(NodeType.ENTITY, title, ""), NodeType.ENTITY, title=title)

    @staticmethod
    def semantic_unit(content: str, source_chunk: str) -> "HeteroNode":
        nid = make_node_id(NodeType.SEMANTIC_UNIT, "", content, source_chunk)
        return HeteroNode(nid, NodeType.SEMANTIC_UNIT, content=content, source_chunk=source_chunk)

    @staticmethod
    def relationship(content: str, source_chunk: str) -> "HeteroNode":
        nid = make_node_id(NodeType.RELATIONSHIP, "", content, source_chunk)
        return HeteroNode(nid, NodeType.RELATIONSHIP, content=content, source_chunk=source_chunk)

    @staticmethod
    def attribute(content: str, entity_id: str, title: str = "") -> "HeteroNode":
        nid = make_node_id(NodeType.ATTRIBUTE, title, content, entity_id)
        return HeteroNode(nid, NodeType.ATTRIBUTE, title=title, content=content)

    @staticmethod
    def high_level(content: str, community: int, ordinal: int) -> "HeteroNode":
        nid = make_node_id(NodeType.HIGH_LEVEL, "", content, f"{community}:{ordinal}")
        return HeteroNode(nid, NodeType.HIGH_LEVEL, content=content)

    @staticmethod
    def overview(title: str, high_level_id: str) -> "HeteroNode":
        # One overview per high-level element (never shared), so degree stays 1.
        nid = make_node_id(NodeType.OVERVIEW, title, "", high_level_id)
        return HeteroNode(nid, NodeType.OVERVIEW, title=title)

    @staticmethod
    def text(content: str, chunk_id: str) -> "HeteroNode":
        nid = make_node_id(NodeType.TEXT, "", content, chunk_id)
        return HeteroNode(nid, NodeType.TEXT, content=content, source_chunk=chunk_id)


@dataclass
class Edge:
    weight: int = 1
    kinds: set[EdgeKind] = field(default_factory=set)


def _pair(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u < v else (v, u)


class HeteroGraph:
    """Undirected weighted graph with per-node types and per-edge kind tags.

    No self-loops, no parallel edges; re-upserting a pair increments its
    weight (first insertion weight is 1). Mutable until freeze(), then
    read-only and safe to share across threads.
    """

    FORMAT_HEADER = "HGRAPH v1"

    def __init__(self) -> None:
        self.nodes: dict[str, HeteroNode] = {}
        self.edges: dict[tuple[str, str], Edge] = {}
        self.typed_index: dict[NodeType, set[str]] = {t: set() for t in NodeType}
        self._adj: dict[str, dict[str, Edge]] = {}
        self._next_hrid = 0
        self._frozen = False
        self.hnsw_merged = False

    # -- mutation ---------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenGraphError("graph is frozen")

    def add_node(self, node: HeteroNode) -> str:
        """Insert a node; re-adding an existing id is a no-op returning that id."""
        self._check_mutable()
        node.validate()
        if node.id in self.nodes:
            return node.id
        node.human_readable_id = self._next_hrid
        self._next_hrid += 1
        self.nodes[node.id] = node
        self.typed_index[node.type].add(node.id)
        self._adj[node.id] = {}
        return node.id

    def upsert_edge(self, u: str, v: str, kind: EdgeKind) -> int:
        """Create the edge at weight 1 or bump an existing one; returns new weight."""
        self._check_mutable()
        if u == v:
            raise ValidationError(f"self-loop rejected on node {u}")
        nu, nv = self.nodes.get(u), self.nodes.get(v)
        if nu is None or nv is None:
            raise ValidationError(f"unknown node id: {u if nu is None else v}")
        if not legal_endpoints(kind, nu.type, nv.type):
            raise ValidationError(
                f"edge kind {kind.value} illegal between {nu.type.value} and {nv.type.value}"
            )
        key = _pair(u, v)
        edge = self.edges.get(key)
        if edge is None:
            edge = Edge(weight=1, kinds={kind})
            self.edges[key] = edge
            self._adj[u][v] = edge
            self._adj[v][u] = edge
        else:
            edge.weight += 1
            edge.kinds.add(kind)
        return edge.weight

    def set_community(self, node_id: str, community: int) -> None:
        self._check_mutable()
        self.nodes[node_id].community = community

    def freeze(self) -> None:
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- queries ----------------------------------------------------------

    def nodes_of_types(self, types: set[NodeType] | frozenset[NodeType]) -> set[str]:
        out: set[str] = set()
        for t in types:
            out |= self.typed_index[t]
        return out

    def neighbors(self, node_id: str) -> dict[str, Edge]:
        return self._adj[node_id]

    def degree(self, node_id: str) -> int:
        return len(self._adj[node_id])

    def weighted_degree(self, node_id: str) -> int:
        return sum(e.weight for e in self._adj[node_id].values())

    def has_edge(self, u: str, v: str) -> bool:
        return _pair(u, v) in self.edges

    def get_edge(self, u: str, v: str) -> Edge | None:
        return self.edges.get(_pair(u, v))

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def type_counts(self) -> dict[str, int]:
        return {t.value: len(ids) for t, ids in self.typed_index.items()}

    def find_entity(self, title: str) -> str | None:
        """Entity id whose normalized title matches, if present."""
        nid = make_node_id(NodeType.ENTITY, title, "")
        return nid if nid in self.nodes else None

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        lines = [self.FORMAT_HEADER]
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            lines.append(json.dumps(
                {
                    "id": n.id, "type": n.type.value, "title": n.title,
                    "content": n.content, "source_chunk": n.source_chunk,
                    "community": n.community, "hrid": n.human_readable_id,
                },
                sort_keys=True, ensure_ascii=False, separators=(",", ":"),
            ))
        for (u, v) in sorted(self.edges):
            e = self.edges[(u, v)]
            lines.append(json.dumps(
                {"u": u, "v": v, "weight": e.weight,
                 "kinds": sorted(k.value for k in e.kinds)},
                sort_keys=True, ensure_ascii=False, separators=(",", ":"),
            ))
        body = ("\n".join(lines) + "\n").encode("utf-8")
        digest = hashlib.sha256(body).hexdigest()
        return body + f"CHECKSUM {digest}\n".encode("utf-8")

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "HeteroGraph":
        text = data.decode("utf-8")
        if not text.endswith("\n"):
            raise GraphFormatError("truncated graph file: missing final newline")
        lines = text.split("\n")[:-1]
        if not lines or not lines[-1].startswith("CHECKSUM "):
            raise GraphFormatError("truncated graph file: missing checksum record")
        stated = lines[-1][len("CHECKSUM "):]
        body = ("\n".join(lines[:-1]) + "\n").encode("utf-8")
        actual = hashlib.sha256(body).hexdigest()
        if stated != actual:
            raise GraphFormatError("graph file checksum mismatch")
        if lines[0] != cls.FORMAT_HEADER:
            raise GraphFormatError(f"unsupported graph format: {lines[0]!r}")

        g = cls()
        for line in lines[1:-1]:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphFormatError(f"malformed record: {exc}") from exc
            if "id" in rec:
                node = HeteroNode(
                    id=rec["id"], type=NodeType(rec["type"]), title=rec["title"],
                    content=rec["content"], source_chunk=rec["source_chunk"],
                    community=rec["community"], human_readable_id=rec["hrid"],
                )
                node.validate()
                if node.id in g.nodes:
                    raise GraphFormatError(f"duplicate node record: {node.id}")
                g.nodes[node.id] = node
                g.typed_index[node.type].add(node.id)
                g._adj[node.id] = {}
                g._next_hrid = max(g._next_hrid, node.human_readable_id + 1)
            else:
                u, v = rec["u"], rec["v"]
                if u not in g.nodes or v not in g.nodes:
                    raise GraphFormatError(f"edge references unknown node: {u}--{v}")
                kinds = {EdgeKind(k) for k in rec["kinds"]}
                tu, tv = g.nodes[u].type, g.nodes[v].type
                for kind in kinds:
                    if not legal_endpoints(kind, tu, tv):
                        raise GraphFormatError(
                            f"illegal {kind.value} edge between {tu.value} and {tv.value}"
                        )
                edge = Edge(weight=rec["weight"], kinds=kinds)
                g.edges[_pair(u, v)] = edge
                g._adj[u][v] = edge
                g._adj[v][u] = edge
        g.hnsw_merged = any(EdgeKind.HNSW in e.kinds for e in g.edges.values())
        return g

    @classmethod
    def load(cls, path: str | Path) -> "HeteroGraph":
        return cls.from_bytes(Path(path).read_bytes())
