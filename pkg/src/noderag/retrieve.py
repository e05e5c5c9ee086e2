"""Query-time pipeline: plan, dual search, shallow personalized PageRank,
cross-node selection, retrieval filtering, and budgeted answer assembly.

All stages are read-only over a frozen graph; per-query state is local, so
any number of queries may run concurrently.
"""
from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingStore
from .errors import (AnswerSynthesisError, NoEntryPointsError, ProviderError,
                     QueryError, ValidationError)
from .hgraph import (ENTRY_EXACT_TYPES, ENTRY_VECTOR_TYPES, RETRIEVABLE_TYPES,
                     HeteroGraph, NodeType)
from .hnsw import HnswIndex
from .llmio import PROMPTS, chat_structured, extract_json_object
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)

# Order in which the seven types are visited during cross-node selection.
_TYPE_ORDER = [NodeType.ENTITY, NodeType.RELATIONSHIP, NodeType.SEMANTIC_UNIT,
               NodeType.ATTRIBUTE, NodeType.HIGH_LEVEL, NodeType.OVERVIEW,
               NodeType.TEXT]

_CONTEXT_LABELS = {
    NodeType.TEXT: "Source text",
    NodeType.SEMANTIC_UNIT: "Event",
    NodeType.ATTRIBUTE: "Entity profile",
    NodeType.HIGH_LEVEL: "Insight",
    NodeType.RELATIONSHIP: "Relationship",
}

_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)


def normalize_match(text: str) -> str:
    """Matching form for dual search: lowercase, punctuation stripped,
    whitespace collapsed."""
    return re.sub(r"\s+", " ", _PUNCT_RE.sub(" ", text.lower())).strip()


@dataclass
class QueryPlan:
    raw_query: str
    extracted_entities: list[str]
    query_vector: np.ndarray


@dataclass
class EntryPoint:
    node_id: str
    mode: str  # "exact" | "vector"
    rank: int | None = None
    similarity: float | None = None


@dataclass
class PprScores:
    scores: dict[str, float]
    alpha: float
    iterations: int


@dataclass
class RetrievalResult:
    entries: list[EntryPoint]
    cross: list[tuple[str, float]]
    retrieved: list[str]
    included: list[str]
    token_count: int
    trace: dict


def _parse_entities(text: str) -> list[str]:
    data = extract_json_object(text)
    entities = data.get("entities")
    if not isinstance(entities, list):
        raise ValueError("missing 'entities' list")
    return [str(e).strip() for e in entities if str(e).strip()]


def plan_query(query: str, extractor, embedder) -> QueryPlan:
    """Entity extraction (degrades to none on failure) plus a unit query vector."""
    if not query.strip():
        raise QueryError("empty query")
    try:
        entities = chat_structured(
            extractor, PROMPTS["query_entities"].render(query=query), _parse_entities)
    except (ValueError, ProviderError) as exc:
        logger.warning("query entity extraction failed, using vector-only entry: %s", exc)
        entities = []
    try:
        vector = embedder.embed([query])[0]
    except ProviderError as exc:
        raise QueryError(f"query embedding failed: {exc}") from exc
    return QueryPlan(raw_query=query, extracted_entities=entities, query_vector=vector)


def dual_search(graph: HeteroGraph, index: HnswIndex | None, plan: QueryPlan,
                k: int = 10, include_text_entries: bool = False,
                title_lookup: dict[str, list[str]] | None = None) -> list[EntryPoint]:
    """Exact title matches on N/O plus the vector-similar slice of the ANN
    top-k. Entities that match nothing contribute nothing."""
    if title_lookup is None:
        title_lookup = build_title_lookup(graph)
    entries: list[EntryPoint] = []
    seen: set[str] = set()

    exact_hits: list[str] = []
    for entity in plan.extracted_entities:
        for node_id in title_lookup.get(normalize_match(entity), ()):
            if node_id not in seen:
                seen.add(node_id)
                exact_hits.append(node_id)
    exact_hits.sort(key=lambda v: graph.nodes[v].human_readable_id)
    entries.extend(EntryPoint(v, "exact") for v in exact_hits)

    if index is not None and len(index) > 0 and k > 0:
        allowed = ENTRY_VECTOR_TYPES | ({NodeType.TEXT} if include_text_entries else set())
        for rank, (node_id, sim) in enumerate(index.search(plan.query_vector, k)):
            if graph.nodes[node_id].type in allowed and node_id not in seen:
                seen.add(node_id)
                entries.append(EntryPoint(node_id, "vector", rank=rank, similarity=sim))
    return entries


def build_title_lookup(graph: HeteroGraph) -> dict[str, list[str]]:
    """Normalized title -> ids over the exact-entry types (N, O)."""
    lookup: dict[str, list[str]] = defaultdict(list)
    for node_id in sorted(graph.nodes_of_types(ENTRY_EXACT_TYPES)):
        lookup[normalize_match(graph.nodes[node_id].title)].append(node_id)
    return dict(lookup)


def shallow_ppr(graph: HeteroGraph, entries: list[str] | set[str],
                alpha: float = 0.5, iterations: int = 2) -> PprScores:
    """Exactly `iterations` synchronous steps of
    pi <- alpha * p + (1 - alpha) * P^T pi, starting from pi = p (uniform over
    the entry nodes). Transitions are proportional to edge weights; mass on a
    degree-0 node teleports back to p, so total mass stays 1."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    entry_list = sorted(set(entries))
    if not entry_list:
        raise NoEntryPointsError("shallow PPR requires at least one entry point")
    for v in entry_list:
        if v not in graph.nodes:
            raise QueryError(f"entry node {v!r} not in graph")

    p = 1.0 / len(entry_list)
    pi = {v: p for v in entry_list}
    for _ in range(iterations):
        spread: dict[str, float] = defaultdict(float)
        dangling = 0.0
        # Sorted iteration pins float accumulation order, so scores are
        # bit-identical however the graph was constructed.
        for i in sorted(pi):
            mass = pi[i]
            wd = graph.weighted_degree(i)
            if wd == 0:
                dangling += mass
                continue
            for j, edge in sorted(graph.neighbors(i).items()):
                spread[j] += mass * edge.weight / wd
        teleport = alpha + (1.0 - alpha) * dangling
        nxt = {v: teleport * p for v in entry_list}
        for j in sorted(spread):
            nxt[j] = nxt.get(j, 0.0) + (1.0 - alpha) * spread[j]
        pi = nxt
    return PprScores(scores=pi, alpha=alpha, iterations=iterations)


def select_cross_nodes(graph: HeteroGraph, scores: PprScores, k_per_type: int,
                       exclude: set[str] | None = None) -> list[tuple[str, float]]:
    """Per node type, the k highest-scoring nodes (score ties broken by lower
    hrid); entry nodes and zero-score nodes never qualify."""
    exclude = exclude or set()
    by_type: dict[NodeType, list[tuple[str, float]]] = defaultdict(list)
    for node_id, score in scores.scores.items():
        if score > 0.0 and node_id not in exclude:
            by_type[graph.nodes[node_id].type].append((node_id, score))
    cross: list[tuple[str, float]] = []
    for t in _TYPE_ORDER:
        ranked = sorted(by_type.get(t, ()),
                        key=lambda x: (-x[1], graph.nodes[x[0]].human_readable_id))
        cross.extend(ranked[:k_per_type])
    cross.sort(key=lambda x: (-x[1], graph.nodes[x[0]].human_readable_id))
    return cross


def filter_retrieval(graph: HeteroGraph, entries: list[EntryPoint],
                     cross: list[tuple[str, float]]) -> list[str]:
    """Union of entries and cross nodes narrowed to retrievable types, ordered
    as vector entries by similarity rank then cross by descending score;
    duplicates keep their first position."""
    ordered: list[str] = [e.node_id for e in entries if e.mode == "vector"]
    ordered.extend(node_id for node_id, _ in cross)
    out: list[str] = []
    seen: set[str] = set()
    for node_id in ordered:
        if node_id in seen:
            continue
        seen.add(node_id)
        if graph.nodes[node_id].type in RETRIEVABLE_TYPES:
            out.append(node_id)
    return out


def assemble_context(graph: HeteroGraph, retrieved: list[str],
                     tokenizer: Tokenizer, budget: int) -> tuple[str, list[str], int]:
    """Greedy prefix of type-labeled node contents that fits the token budget."""
    if budget <= 0:
        raise ValidationError("token budget must be positive")
    pieces: list[str] = []
    included: list[str] = []
    used = 0
    for node_id in retrieved:
        node = graph.nodes[node_id]
        piece = f"[{_CONTEXT_LABELS[node.type]}]\n{node.content}"
        cost = tokenizer.count(piece)
        if used + cost > budget:
            break
        pieces.append(piece)
        included.append(node_id)
        used += cost
    context = "\n\n".join(pieces)
    return context, included, tokenizer.count(context)


def assemble_and_answer(query: str, graph: HeteroGraph, retrieved: list[str],
                        budget: int, responder, tokenizer: Tokenizer,
                        ) -> tuple[str, str, list[str], int]:
    """Returns (answer, context, included ids, token count). A responder
    failure raises AnswerSynthesisError carrying the assembled context."""
    context, included, token_count = assemble_context(graph, retrieved, tokenizer, budget)
    request = PROMPTS["unified_answer"].render(context=context, query=query)
    try:
        answer = responder.chat(request)
    except ProviderError as exc:
        raise AnswerSynthesisError(
            f"answer synthesis failed: {exc}", context=context, token_count=token_count
        ) from exc
    return answer, context, included, token_count


@dataclass
class Retriever:
    """Facade binding a frozen index to the query pipeline."""

    graph: HeteroGraph
    store: EmbeddingStore
    index: HnswIndex | None
    extractor: object
    embedder: object
    responder: object
    tokenizer: Tokenizer
    entry_k: int = 10
    cross_k_per_type: int = 5
    alpha: float = 0.5
    iterations: int = 2
    context_budget: int = 8000
    include_text_entries: bool = False
    _title_lookup: dict[str, list[str]] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self._title_lookup = build_title_lookup(self.graph)

    def retrieve(self, query: str, plan: QueryPlan | None = None) -> RetrievalResult:
        plan = plan or plan_query(query, self.extractor, self.embedder)
        entries = dual_search(self.graph, self.index, plan, k=self.entry_k,
                              include_text_entries=self.include_text_entries,
                              title_lookup=self._title_lookup)
        notices: list[str] = []
        if entries:
            scores = shallow_ppr(self.graph, [e.node_id for e in entries],
                                 alpha=self.alpha, iterations=self.iterations)
            cross = select_cross_nodes(self.graph, scores, self.cross_k_per_type,
                                       exclude={e.node_id for e in entries})
        else:
            scores = PprScores({}, self.alpha, self.iterations)
            cross = []
            notices.append("no entry points found for this query")
        retrieved = filter_retrieval(self.graph, entries, cross)
        if not retrieved:
            notices.append("retrieval is empty")
        trace = {
            "query": plan.raw_query,
            "entities": plan.extracted_entities,
            "entries": [
                {"id": e.node_id, "mode": e.mode, "rank": e.rank,
                 "similarity": e.similarity,
                 "type": self.graph.nodes[e.node_id].type.value,
                 "hrid": self.graph.nodes[e.node_id].human_readable_id}
                for e in entries
            ],
            "cross": [
                {"id": v, "score": s, "type": self.graph.nodes[v].type.value,
                 "hrid": self.graph.nodes[v].human_readable_id}
                for v, s in cross
            ],
            "retrieved": [
                {"id": v, "type": self.graph.nodes[v].type.value,
                 "hrid": self.graph.nodes[v].human_readable_id}
                for v in retrieved
            ],
            "notices": notices,
        }
        return RetrievalResult(entries=entries, cross=cross, retrieved=retrieved,
                               included=[], token_count=0, trace=trace)

    def answer(self, query: str, budget: int | None = None) -> tuple[str, RetrievalResult]:
        budget = budget or self.context_budget
        result = self.retrieve(query)
        answer, context, included, token_count = assemble_and_answer(
            query, self.graph, result.retrieved, budget, self.responder, self.tokenizer)
        result.included = included
        result.token_count = token_count
        result.trace["included"] = included
        result.trace["token_count"] = token_count
        result.trace["budget"] = budget
        if not context:
            result.trace["notices"].append("context is empty; answer is unguided")
        return answer, result
