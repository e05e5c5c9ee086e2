"""End-to-end index construction and loading.

Stage order: decompose -> augment (importance, attributes, communities,
high-level, semantic match) -> enrich (text nodes, embeddings, ANN build,
base-layer merge) -> freeze and persist. A checkpoint of the initial graph is
written right after decomposition, the only stage whose LLM cost makes
re-running expensive; --resume picks up from it.
"""
from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import augment, decompose, enrich
from .config import PipelineConfig
from .embedding import EmbeddingStore
from .errors import EmptyCorpusError, MissingIndexError
from .hgraph import HeteroGraph
from .hnsw import HnswIndex
from .llmio import (DEFAULT_EMBED_BATCH, HttpConfig, MockChatClient,
                    MockEmbeddingClient, OpenAIChatClient, OpenAIEmbeddingClient,
                    RateLimiter)
from .retrieve import Retriever
from .tokenizer import get_tokenizer

logger = logging.getLogger(__name__)

GRAPH_CHECKPOINT = "checkpoint_g1.hg"
CHUNKS_FILE = "chunks.jsonl"
FAILED_FILE = "failed_chunks.jsonl"
CONFIG_FILE = "config.json"
STATS_FILE = "stats.json"


@dataclass
class Clients:
    chat: object
    embedder: object


def build_clients(config: PipelineConfig) -> Clients:
    if config.provider == "mock":
        return Clients(chat=MockChatClient(),
                       embedder=MockEmbeddingClient(max_batch=config.embed_batch))
    limiter = RateLimiter(
        max_concurrent=config.max_concurrent_requests,
        requests_per_minute=config.requests_per_minute or None,
    )
    http = HttpConfig(
        base_url=config.base_url,
        chat_model=config.chat_model,
        embed_model=config.embed_model,
        api_key_env=config.api_key_env,
        embed_dim=config.embed_dim,
        max_batch=config.embed_batch or DEFAULT_EMBED_BATCH,
    )
    return Clients(chat=OpenAIChatClient(http, limiter),
                   embedder=OpenAIEmbeddingClient(http, limiter))


@dataclass
class StatsReport:
    node_counts: dict[str, int]
    total_nodes: int
    structural_edges: int
    hnsw_inserted: int
    overlap: int
    total_edges: int
    community_count: int
    importance: dict
    tokenizer: str
    failed_chunks: int = 0

    def to_json(self) -> dict:
        return {
            "node_counts": self.node_counts,
            "total_nodes": self.total_nodes,
            "edges": {
                "structural": self.structural_edges,
                "hnsw_inserted": self.hnsw_inserted,
                "overlap": self.overlap,
                "total": self.total_edges,
            },
            "community_count": self.community_count,
            "importance": self.importance,
            "tokenizer": self.tokenizer,
            "failed_chunks": self.failed_chunks,
        }


@dataclass
class BuiltIndex:
    graph: HeteroGraph
    store: EmbeddingStore
    index: HnswIndex
    stats: StatsReport
    config: PipelineConfig
    out_dir: Path


def build_index(corpus_path: str | Path, out_dir: str | Path,
                config: PipelineConfig, clients: Clients | None = None,
                resume: bool = False) -> BuiltIndex:
    config.validate()
    clients = clients or build_clients(config)
    tokenizer = get_tokenizer(config.tokenizer)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    checkpoint = out / GRAPH_CHECKPOINT
    chunks_path = out / CHUNKS_FILE
    if resume and checkpoint.exists() and chunks_path.exists():
        logger.info("resuming from decomposition checkpoint")
        graph = HeteroGraph.load(checkpoint)
        chunks = _read_chunks(chunks_path)
        failed_count = sum(1 for _ in open(out / FAILED_FILE, encoding="utf-8")) \
            if (out / FAILED_FILE).exists() else 0
    else:
        chunks = decompose.load_corpus(corpus_path, tokenizer,
                                       config.chunk_tokens, config.chunk_overlap)
        if not chunks:
            raise EmptyCorpusError(f"corpus {corpus_path} produced no chunks")
        graph, report = decompose.build_initial_graph(
            chunks, clients.chat, parallelism=config.extraction_parallelism)
        _write_chunks(chunks_path, chunks)
        _write_failed(out / FAILED_FILE, report.failed)
        graph.save(checkpoint)
        failed_count = len(report.failed)

    # Augmentation: importance, attributes, communities, high-level, matching.
    importance = augment.select_important_entities(
        graph, pivots=config.betweenness_pivots, seed=config.betweenness_seed,
        log_base=config.core_log_base)
    augment.attach_attributes(graph, importance.important, clients.chat)
    partition = augment.detect_communities(graph, seed=config.leiden_seed,
                                           resolution=config.leiden_resolution)
    augment.extract_high_level(graph, partition, clients.chat, tokenizer,
                               context_budget=config.high_level_context_budget)
    store = enrich.embed_retrievables(graph, clients.embedder,
                                      batch_size=config.embed_batch)
    augment.semantic_match_edges(graph, partition,
                                 {v: store.get(v) for v in store.keys()},
                                 seed=config.kmeans_seed)

    # Enrichment: raw text nodes, remaining embeddings, ANN, base-layer merge.
    enrich.insert_text_nodes(graph, chunks)
    enrich.embed_retrievables(graph, clients.embedder, store=store,
                              batch_size=config.embed_batch)
    index = enrich.build_hnsw(store, m=config.hnsw_m,
                              ef_construction=config.hnsw_ef_construction,
                              ef_search=config.hnsw_ef_search,
                              seed=config.hnsw_seed)
    merge = enrich.merge_base_layer(graph, index)
    graph.freeze()

    stats = StatsReport(
        node_counts=graph.type_counts(),
        total_nodes=graph.node_count,
        structural_edges=merge.structural,
        hnsw_inserted=merge.inserted,
        overlap=merge.overlap,
        total_edges=merge.total,
        community_count=partition.community_count,
        importance=importance.to_json(),
        tokenizer=tokenizer.name,
        failed_chunks=failed_count,
    )
    graph.save(out / config.graph_file)
    store.save(out / config.vector_file)
    config.save_snapshot(out / CONFIG_FILE)
    (out / STATS_FILE).write_text(
        json.dumps(stats.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return BuiltIndex(graph=graph, store=store, index=index, stats=stats,
                      config=config, out_dir=out)


def _write_chunks(path: Path, chunks: list[decompose.ChunkRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in chunks:
            f.write(json.dumps(
                {"doc_id": c.doc_id, "chunk_id": c.chunk_id, "text": c.text,
                 "token_count": c.token_count},
                sort_keys=True, ensure_ascii=False) + "\n")


def _read_chunks(path: Path) -> list[decompose.ChunkRecord]:
    chunks = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            obj = json.loads(line)
            chunks.append(decompose.ChunkRecord(obj["doc_id"], obj["chunk_id"],
                                                obj["text"], obj["token_count"]))
    return chunks


def _write_failed(path: Path, failed: list[decompose.FailedChunk]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for item in failed:
            f.write(json.dumps({"chunk_id": item.chunk_id, "error": item.error},
                               sort_keys=True, ensure_ascii=False) + "\n")


@dataclass
class LoadedIndex:
    graph: HeteroGraph
    store: EmbeddingStore
    index: HnswIndex
    config: PipelineConfig
    stats: dict


def load_index(index_dir: str | Path, clients: Clients | None = None) -> LoadedIndex:
    """Load persisted graph and vectors, then rebuild the ANN index (same seed
    and insertion order, so it matches the one that was merged)."""
    root = Path(index_dir)
    config_path = root / CONFIG_FILE
    if not root.is_dir() or not config_path.exists():
        raise MissingIndexError(f"no index at {root}")
    config = PipelineConfig.load_snapshot(config_path)
    graph_path = root / config.graph_file
    vector_path = root / config.vector_file
    if not graph_path.exists() or not vector_path.exists():
        raise MissingIndexError(f"index at {root} is missing graph or vector files")
    clients = clients or build_clients(config)
    graph = HeteroGraph.load(graph_path)
    graph.freeze()
    store = EmbeddingStore.load(vector_path, expected_tag=clients.embedder.model_tag)
    index = enrich.build_hnsw(store, m=config.hnsw_m,
                              ef_construction=config.hnsw_ef_construction,
                              ef_search=config.hnsw_ef_search,
                              seed=config.hnsw_seed)
    stats_path = root / STATS_FILE
    stats = json.loads(stats_path.read_text(encoding="utf-8")) if stats_path.exists() else {}
    return LoadedIndex(graph=graph, store=store, index=index, config=config, stats=stats)


def make_retriever(loaded: LoadedIndex, clients: Clients | None = None) -> Retriever:
    clients = clients or build_clients(loaded.config)
    return Retriever(
        graph=loaded.graph,
        store=loaded.store,
        index=loaded.index,
        extractor=clients.chat,
        embedder=clients.embedder,
        responder=clients.chat,
        tokenizer=get_tokenizer(loaded.config.tokenizer),
        entry_k=loaded.config.entry_k,
        cross_k_per_type=loaded.config.cross_k_per_type,
        alpha=loaded.config.alpha,
        iterations=loaded.config.iterations,
        context_budget=loaded.config.context_budget,
        include_text_entries=loaded.config.include_text_entries,
    )


@dataclass
class BenchRow:
    query: str
    seconds: float
    token_count: int
    error: str | None = None


@dataclass
class BenchSummary:
    rows: list[BenchRow] = field(default_factory=list)

    @property
    def mean_seconds(self) -> float:
        ok = [r.seconds for r in self.rows if r.error is None]
        return statistics.fmean(ok) if ok else 0.0

    @property
    def median_seconds(self) -> float:
        ok = [r.seconds for r in self.rows if r.error is None]
        return statistics.median(ok) if ok else 0.0

    @property
    def mean_tokens(self) -> float:
        ok = [r.token_count for r in self.rows if r.error is None]
        return statistics.fmean(ok) if ok else 0.0

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.error is not None)


def run_bench(retriever: Retriever, queries: list[str], budget: int | None = None,
              concurrency: int = 1) -> BenchSummary:
    """Per-query wall time and retrieval tokens; failures counted, not fatal."""

    def one(query: str) -> BenchRow:
        start = time.perf_counter()
        try:
            _, result = retriever.answer(query, budget=budget)
            return BenchRow(query, time.perf_counter() - start, result.token_count)
        except Exception as exc:  # per-query failures must not kill the run
            return BenchRow(query, time.perf_counter() - start, 0, error=str(exc))

    summary = BenchSummary()
    if concurrency <= 1:
        summary.rows = [one(q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            summary.rows = list(pool.map(one, queries))
    return summary
