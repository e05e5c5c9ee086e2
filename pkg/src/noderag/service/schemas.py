"""Request/response models for the query service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    nodes: int
    edges: int


class QueryRequest(BaseModel):
    query: str = Field(min_length=1)
    budget: int | None = Field(default=None, gt=0)
    include_trace: bool = False


class NodeRef(BaseModel):
    id: str
    type: str
    hrid: int


class EntryRef(BaseModel):
    id: str
    mode: str
    rank: int | None = None
    similarity: float | None = None


class QueryResponse(BaseModel):
    answer: str
    token_count: int
    entries: list[EntryRef]
    retrieved: list[NodeRef]
    notices: list[str]
    trace: dict | None = None


class EdgeStats(BaseModel):
    structural: int
    hnsw_inserted: int
    overlap: int
    total: int


class StatsResponse(BaseModel):
    node_counts: dict[str, int]
    total_nodes: int
    edges: EdgeStats
    community_count: int
    tokenizer: str
    failed_chunks: int = 0


class BenchRequest(BaseModel):
    queries: list[str] = Field(min_length=1)
    budget: int | None = Field(default=None, gt=0)
    concurrency: int = Field(default=1, ge=1, le=64)


class BenchRowModel(BaseModel):
    query: str
    seconds: float
    token_count: int
    error: str | None = None


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]
    mean_seconds: float
    median_seconds: float
    mean_tokens: float
    failures: int
    tokenizer: str
