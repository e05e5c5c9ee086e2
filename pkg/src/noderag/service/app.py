"""FastAPI service wrapping a loaded index: the long-running, multi-client
query surface. The index is loaded once at startup; queries are read-only and
run concurrently.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..config import PipelineConfig
from ..errors import AnswerSynthesisError, ProviderError, QueryError
from ..pipeline import LoadedIndex, load_index, make_retriever, run_bench
from .schemas import (BenchRequest, BenchResponse, BenchRowModel, EdgeStats,
                      EntryRef, HealthResponse, NodeRef, QueryRequest,
                      QueryResponse, StatsResponse)


def create_app(index_dir: str, config: PipelineConfig | None = None) -> FastAPI:
    loaded: LoadedIndex = load_index(index_dir)
    if config is not None:
        loaded = LoadedIndex(graph=loaded.graph, store=loaded.store,
                             index=loaded.index, config=config, stats=loaded.stats)
    retriever = make_retriever(loaded)

    app = FastAPI(title="noderag", version="0.1.0")
    app.state.retriever = retriever
    app.state.stats = loaded.stats

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", nodes=retriever.graph.node_count,
                              edges=retriever.graph.edge_count)

    @app.post("/query", response_model=QueryResponse)
    def query(request: QueryRequest) -> QueryResponse:
        try:
            answer, result = retriever.answer(request.query, budget=request.budget)
        except QueryError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (ProviderError, AnswerSynthesisError) as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        graph = retriever.graph
        return QueryResponse(
            answer=answer,
            token_count=result.token_count,
            entries=[EntryRef(id=e.node_id, mode=e.mode, rank=e.rank,
                              similarity=e.similarity) for e in result.entries],
            retrieved=[NodeRef(id=v, type=graph.nodes[v].type.value,
                               hrid=graph.nodes[v].human_readable_id)
                       for v in result.retrieved],
            notices=list(result.trace.get("notices", [])),
            trace=result.trace if request.include_trace else None,
        )

    @app.get("/stats", response_model=StatsResponse)
    def stats() -> StatsResponse:
        data = app.state.stats
        if not data:
            raise HTTPException(status_code=404, detail="index has no stats report")
        return StatsResponse(
            node_counts=data["node_counts"],
            total_nodes=data["total_nodes"],
            edges=EdgeStats(**data["edges"]),
            community_count=data.get("community_count", 0),
            tokenizer=data.get("tokenizer", ""),
            failed_chunks=data.get("failed_chunks", 0),
        )

    @app.post("/bench", response_model=BenchResponse)
    def bench(request: BenchRequest) -> BenchResponse:
        summary = run_bench(retriever, request.queries, budget=request.budget,
                            concurrency=request.concurrency)
        return BenchResponse(
            rows=[BenchRowModel(query=r.query, seconds=r.seconds,
                                token_count=r.token_count, error=r.error)
                  for r in summary.rows],
            mean_seconds=summary.mean_seconds,
            median_seconds=summary.median_seconds,
            mean_tokens=summary.mean_tokens,
            failures=summary.failures,
            tokenizer=retriever.tokenizer.name,
        )

    return app
