"""Graph enrichment: raw-text node insertion, selective embedding of the
T/S/A/H subset, ANN index construction, and base-layer merge into the graph.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .decompose import ChunkRecord
from .embedding import EmbeddingStore
from .errors import IndexingError, ProviderError, ValidationError
from .hgraph import EMBEDDABLE_TYPES, EdgeKind, HeteroGraph, HeteroNode, NodeType
from .hnsw import HnswIndex

logger = logging.getLogger(__name__)


@dataclass
class TextInsertReport:
    inserted: int = 0
    isolated_chunks: list[str] = field(default_factory=list)


def insert_text_nodes(graph: HeteroGraph, chunks: list[ChunkRecord]) -> TextInsertReport:
    """One T node per chunk, linked by e_s to every semantic unit that chunk
    produced. Chunks whose extraction failed still get an (isolated) T node."""
    units_by_chunk: dict[str, list[str]] = {}
    for s_id in graph.typed_index[NodeType.SEMANTIC_UNIT]:
        chunk_id = graph.nodes[s_id].source_chunk
        if chunk_id is not None:
            units_by_chunk.setdefault(chunk_id, []).append(s_id)

    report = TextInsertReport()
    for chunk in sorted(chunks, key=lambda c: c.chunk_id):
        t_id = graph.add_node(HeteroNode.text(chunk.text, chunk.chunk_id))
        report.inserted += 1
        unit_ids = sorted(units_by_chunk.get(chunk.chunk_id, ()),
                          key=lambda v: graph.nodes[v].human_readable_id)
        if not unit_ids:
            report.isolated_chunks.append(chunk.chunk_id)
            logger.warning("chunk %s has no semantic units; text node is isolated",
                           chunk.chunk_id)
            continue
        for s_id in unit_ids:
            graph.upsert_edge(t_id, s_id, EdgeKind.SOURCE)
    return report


def embed_retrievables(graph: HeteroGraph, embedder,
                       store: EmbeddingStore | None = None,
                       batch_size: int = 64) -> EmbeddingStore:
    """Embed exactly the T/S/A/H nodes into the store (incremental: nodes
    already present are skipped). Embeddings are mandatory; a failed batch
    aborts indexing."""
    if store is None:
        store = EmbeddingStore(embedder.dim, embedder.model_tag)
    elif store.model_tag != embedder.model_tag:
        raise ValidationError(
            f"store model tag {store.model_tag!r} does not match embedder "
            f"{embedder.model_tag!r}"
        )
    pending = [
        v for v in sorted(graph.nodes_of_types(EMBEDDABLE_TYPES),
                          key=lambda v: graph.nodes[v].human_readable_id)
        if v not in store
    ]
    for start in range(0, len(pending), batch_size):
        ids = pending[start:start + batch_size]
        texts = [graph.nodes[v].content for v in ids]
        try:
            vectors = embedder.embed(texts)
        except ProviderError as exc:
            raise IndexingError(f"embedding batch failed: {exc}") from exc
        for v, vec in zip(ids, vectors):
            store.add(v, vec)
    return store


def build_hnsw(store: EmbeddingStore, m: int = 16, ef_construction: int = 200,
               ef_search: int = 64, seed: int = 13) -> HnswIndex:
    """Deterministic index build: sorted-id insertion order under a fixed seed."""
    if len(store) == 0:
        raise ValidationError("cannot build index over an empty store")
    index = HnswIndex(store.dim, m=m, ef_construction=ef_construction,
                      ef_search=ef_search, seed=seed)
    for node_id in sorted(store.keys()):
        index.insert(node_id, store.get(node_id))
    return index


@dataclass
class MergeReport:
    structural: int
    inserted: int
    overlap: int

    @property
    def total(self) -> int:
        return self.structural + self.inserted - self.overlap


def merge_base_layer(graph: HeteroGraph, index: HnswIndex) -> MergeReport:
    """Upsert every base-layer pair as an hnsw-kind edge. Existing edges gain
    +1 weight (reinforcement); the pipeline may merge only once per graph."""
    if graph.hnsw_merged:
        raise IndexingError("base layer already merged into this graph")
    pairs = index.base_layer_pairs()
    structural = graph.edge_count
    overlap = 0
    for u, v in pairs:
        if graph.has_edge(u, v):
            overlap += 1
        graph.upsert_edge(u, v, EdgeKind.HNSW)
    graph.hnsw_merged = True
    report = MergeReport(structural=structural, inserted=len(pairs), overlap=overlap)
    if graph.edge_count != report.total:
        raise IndexingError(
            f"merge accounting broken: {graph.edge_count} != {report.total}"
        )
    return report
