"""Corpus chunking and LLM decomposition into semantic unit / entity /
relationship nodes, producing the initial graph.

Extraction calls run concurrently under a bounded pool, but results are merged
into the graph strictly in chunk_id order so rebuilt graphs are identical.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ExtractionError, IndexingError, ProviderError, ValidationError
from .hgraph import EdgeKind, HeteroGraph, HeteroNode, NodeType, make_node_id, normalize_title
from .llmio import PROMPTS, chat_structured, extract_json_object
from .tokenizer import Tokenizer, window_text

logger = logging.getLogger(__name__)


@dataclass
class ChunkRecord:
    doc_id: str
    chunk_id: str
    text: str
    token_count: int

    def validate(self) -> None:
        if not self.text.strip():
            raise ValidationError(f"chunk {self.chunk_id!r} has empty text")


@dataclass
class ExtractionResult:
    """Per-chunk extraction: parallel unit_* lists align with semantic_units."""

    semantic_units: list[str]
    entities: list[str]
    relationships: list[tuple[str, str, str]]
    unit_entities: list[list[str]]
    unit_relationships: list[list[tuple[str, str, str]]]

    def validate(self) -> None:
        known = {normalize_title(e) for e in self.entities}
        for src, _, tgt in self.relationships:
            if normalize_title(src) not in known or normalize_title(tgt) not in known:
                raise ValidationError(f"relationship endpoint missing from entities: {src}->{tgt}")
        if not (len(self.semantic_units) == len(self.unit_entities) == len(self.unit_relationships)):
            raise ValidationError("unit maps must align with semantic_units")

    def orphan_entities(self) -> list[str]:
        mentioned = {normalize_title(e) for ue in self.unit_entities for e in ue}
        return [e for e in self.entities if normalize_title(e) not in mentioned]


@dataclass
class FailedChunk:
    chunk_id: str
    error: str


@dataclass
class DecomposeReport:
    failed: list[FailedChunk] = field(default_factory=list)
    orphan_entities: dict[str, list[str]] = field(default_factory=dict)


# -- corpus input -----------------------------------------------------------

def load_corpus(path: str | Path, tokenizer: Tokenizer,
                chunk_tokens: int = 1000, overlap: int = 100) -> list[ChunkRecord]:
    """Read JSON-lines corpus: pre-chunked records pass through, documents are
    windowed into fixed-size token chunks with the configured overlap."""
    chunks: list[ChunkRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"corpus line {lineno} is not valid JSON: {exc}") from exc
            if "text" not in obj:
                raise ValidationError(f"corpus line {lineno} missing 'text'")
            doc_id = str(obj.get("doc_id", f"doc{lineno}"))
            if "chunk_id" in obj:
                rec = ChunkRecord(doc_id, str(obj["chunk_id"]), obj["text"],
                                  tokenizer.count(obj["text"]))
                rec.validate()
                if rec.chunk_id in seen:
                    raise ValidationError(f"duplicate chunk_id {rec.chunk_id!r}")
                seen.add(rec.chunk_id)
                chunks.append(rec)
            else:
                for rec in chunk_document(doc_id, obj["text"], tokenizer, chunk_tokens, overlap):
                    if rec.chunk_id in seen:
                        raise ValidationError(f"duplicate chunk_id {rec.chunk_id!r}")
                    seen.add(rec.chunk_id)
                    chunks.append(rec)
    return chunks


def chunk_document(doc_id: str, text: str, tokenizer: Tokenizer,
                   chunk_tokens: int, overlap: int) -> list[ChunkRecord]:
    if overlap >= chunk_tokens:
        raise ValidationError("overlap must be smaller than chunk_tokens")
    spans = tokenizer.spans(text)
    if not spans:
        return []
    out: list[ChunkRecord] = []
    start, idx = 0, 0
    while start < len(spans):
        end = min(start + chunk_tokens, len(spans))
        piece = window_text(text, spans, start, end)
        out.append(ChunkRecord(doc_id, f"{doc_id}:{idx:04d}", piece, end - start))
        if end == len(spans):
            break
        start = end - overlap
        idx += 1
    return out


# -- extraction -------------------------------------------------------------

def _parse_extraction(text: str) -> ExtractionResult:
    data = extract_json_object(text)
    units = data.get("units")
    if not isinstance(units, list):
        raise ValueError("missing 'units' list")

    semantic_units: list[str] = []
    entities: list[str] = []
    known: dict[str, str] = {}  # normalized -> first-seen casing
    relationships: list[tuple[str, str, str]] = []
    unit_entities: list[list[str]] = []
    unit_relationships: list[list[tuple[str, str, str]]] = []

    def register(name: str) -> str:
        norm = normalize_title(name)
        if not norm:
            raise ValueError("empty entity name")
        if norm not in known:
            known[norm] = name.strip()
            entities.append(known[norm])
        return known[norm]

    for unit in units:
        if not isinstance(unit, dict) or not str(unit.get("text", "")).strip():
            raise ValueError("unit without text")
        semantic_units.append(str(unit["text"]).strip())
        u_ents = [register(str(e)) for e in unit.get("entities", []) if str(e).strip()]
        u_rels: list[tuple[str, str, str]] = []
        for rel in unit.get("relationships", []):
            if not isinstance(rel, (list, tuple)) or len(rel) != 3:
                raise ValueError("relationship is not a 3-item list")
            src, phrase, tgt = (str(x).strip() for x in rel)
            if not (src and phrase and tgt):
                raise ValueError("relationship with empty field")
            src, tgt = register(src), register(tgt)
            for endpoint in (src, tgt):
                if endpoint not in u_ents:
                    u_ents.append(endpoint)
            triple = (src, phrase, tgt)
            u_rels.append(triple)
            relationships.append(triple)
        # Dedup within the unit, preserving order.
        unit_entities.append(list(dict.fromkeys(u_ents)))
        unit_relationships.append(u_rels)

    result = ExtractionResult(semantic_units, entities, relationships,
                              unit_entities, unit_relationships)
    result.validate()
    return result


def decompose_chunk(chunk: ChunkRecord, extractor) -> ExtractionResult:
    """One extraction call at temperature 0, with a single repair round-trip
    if the reply does not parse."""
    chunk.validate()
    request = PROMPTS["decompose"].render(chunk=chunk.text)
    try:
        return chat_structured(extractor, request, _parse_extraction)
    except (ValueError, ValidationError) as exc:
        raise ExtractionError(
            f"chunk {chunk.chunk_id}: unparseable after repair ({exc})"
        ) from exc


def extract_all(chunks: list[ChunkRecord], extractor,
                parallelism: int = 8) -> dict[str, ExtractionResult | Exception]:
    """Run extraction for every chunk with bounded parallelism."""
    results: dict[str, ExtractionResult | Exception] = {}

    def run(chunk: ChunkRecord):
        try:
            return decompose_chunk(chunk, extractor)
        except (ExtractionError, ProviderError, ValidationError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        for chunk, outcome in zip(chunks, pool.map(run, chunks)):
            results[chunk.chunk_id] = outcome
    return results


def build_initial_graph(chunks: list[ChunkRecord], extractor,
                        parallelism: int = 8) -> tuple[HeteroGraph, DecomposeReport]:
    """Decompose every chunk and assemble S/N/R nodes with their e_d/e_r edges.

    Entities dedup across chunks by normalized title, which is what links
    chunks together. Failed chunks are reported, not fatal, unless every
    chunk fails.
    """
    if not chunks:
        raise IndexingError("corpus produced no chunks")
    outcomes = extract_all(chunks, extractor, parallelism)
    graph = HeteroGraph()
    report = DecomposeReport()

    for chunk in sorted(chunks, key=lambda c: c.chunk_id):
        outcome = outcomes[chunk.chunk_id]
        if isinstance(outcome, Exception):
            report.failed.append(FailedChunk(chunk.chunk_id, str(outcome)))
            continue
        merge_extraction(graph, chunk.chunk_id, outcome)
        orphans = outcome.orphan_entities()
        if orphans:
            report.orphan_entities[chunk.chunk_id] = orphans
            logger.warning("chunk %s: %d entities mentioned in no unit",
                           chunk.chunk_id, len(orphans))

    if len(report.failed) == len(chunks):
        raise IndexingError(f"all {len(chunks)} chunks failed extraction")
    return graph, report


def merge_extraction(graph: HeteroGraph, chunk_id: str, result: ExtractionResult) -> None:
    for name in result.entities:
        graph.add_node(HeteroNode.entity(name))
    for unit_text, u_ents, u_rels in zip(
            result.semantic_units, result.unit_entities, result.unit_relationships):
        s_id = graph.add_node(HeteroNode.semantic_unit(unit_text, chunk_id))
        for name in u_ents:
            graph.upsert_edge(s_id, HeteroNode.entity(name).id, EdgeKind.DECOMPOSITION)
        for src, phrase, tgt in u_rels:
            r_id = graph.add_node(_relationship_node(phrase, chunk_id, src, tgt))
            graph.upsert_edge(r_id, HeteroNode.entity(src).id, EdgeKind.RELATION)
            graph.upsert_edge(r_id, HeteroNode.entity(tgt).id, EdgeKind.RELATION)
            graph.upsert_edge(r_id, s_id, EdgeKind.RELATION)


def _relationship_node(phrase: str, chunk_id: str, src: str, tgt: str) -> HeteroNode:
    # Endpoint names scope the id so equal phrases between different entity
    # pairs stay distinct nodes.
    provenance = f"{chunk_id}|{normalize_title(src)}|{normalize_title(tgt)}"
    nid = make_node_id(NodeType.RELATIONSHIP, "", phrase, provenance)
    return HeteroNode(nid, NodeType.RELATIONSHIP, content=phrase, source_chunk=chunk_id)
