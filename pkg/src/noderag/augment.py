"""Graph augmentation: important-entity selection, attribute synthesis,
community detection, high-level element extraction, and semantic-match edges.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from . import analytics
from .errors import NotApplicableError, ProviderError, ValidationError
from .hgraph import EdgeKind, HeteroGraph, HeteroNode, NodeType
from .llmio import PROMPTS, chat_structured, extract_json_object
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)


@dataclass
class ImportanceReport:
    k_default: int
    kcore_set: set[str]
    betweenness_scores: dict[str, float]
    mean_betweenness: float
    scale: int
    betweenness_set: set[str]
    important: set[str]
    applicable: bool = True

    def to_json(self) -> dict:
        return {
            "k_default": self.k_default,
            "kcore_count": len(self.kcore_set),
            "mean_betweenness": self.mean_betweenness,
            "scale": self.scale,
            "betweenness_count": len(self.betweenness_set),
            "important_count": len(self.important),
            "applicable": self.applicable,
        }

    @staticmethod
    def empty() -> "ImportanceReport":
        return ImportanceReport(0, set(), {}, 0.0, 0, set(), set(), applicable=False)


@dataclass
class CommunityPartition:
    assignment: dict[str, int]
    community_count: int

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for node_id, cid in self.assignment.items():
            out.setdefault(cid, []).append(node_id)
        return out


def compute_core_threshold(graph: HeteroGraph, log_base: str = "e") -> int:
    n = graph.node_count
    mean_degree = (2.0 * graph.edge_count / n) if n else 0.0
    return analytics.core_threshold(n, mean_degree, log_base)


def k_core_nodes(graph: HeteroGraph, k: int) -> set[str]:
    """Entities in the k-core; non-entity nodes participate in peeling but are
    not selected."""
    members = analytics.k_core_membership(graph, k)
    return {v for v in members if graph.nodes[v].type is NodeType.ENTITY}


def betweenness_select(graph: HeteroGraph, pivots: int = 10,
                       seed: int = 5) -> tuple[dict[str, float], set[str]]:
    """Approximate betweenness for every node; entities strictly above
    mean * floor(log10(|V|)) (scale clamped to >= 1) are selected."""
    scores = analytics.betweenness_scores(graph, pivots=pivots, seed=seed)
    mean = sum(scores.values()) / len(scores)
    scale = max(1, math.floor(math.log10(graph.node_count)))
    threshold = mean * scale
    selected = {
        v for v, b in scores.items()
        if b > threshold and graph.nodes[v].type is NodeType.ENTITY
    }
    return scores, selected


def select_important_entities(graph: HeteroGraph, pivots: int = 10, seed: int = 5,
                              log_base: str = "e") -> ImportanceReport:
    try:
        k_default = compute_core_threshold(graph, log_base)
    except NotApplicableError as exc:
        logger.warning("importance selection skipped: %s", exc)
        return ImportanceReport.empty()
    kcore = k_core_nodes(graph, k_default)
    scores, selected = betweenness_select(graph, pivots=pivots, seed=seed)
    mean = sum(scores.values()) / len(scores)
    scale = max(1, math.floor(math.log10(graph.node_count)))
    return ImportanceReport(
        k_default=k_default,
        kcore_set=kcore,
        betweenness_scores=scores,
        mean_betweenness=mean,
        scale=scale,
        betweenness_set=selected,
        important=kcore | selected,
    )


@dataclass
class StageFailure:
    item: str
    error: str


def attribute_context(graph: HeteroGraph, entity_id: str) -> list[str]:
    """Contents of the entity's adjacent relationship and semantic-unit nodes,
    in ascending hrid order. Raw text nodes are deliberately excluded."""
    neighbors = [
        graph.nodes[u] for u in graph.neighbors(entity_id)
        if graph.nodes[u].type in (NodeType.RELATIONSHIP, NodeType.SEMANTIC_UNIT)
    ]
    neighbors.sort(key=lambda n: n.human_readable_id)
    return [n.content for n in neighbors]


def attach_attributes(graph: HeteroGraph, important: set[str],
                      writer) -> list[StageFailure]:
    """Write one attribute node per important entity and link it with e_a."""
    failures: list[StageFailure] = []
    for entity_id in sorted(important, key=lambda v: graph.nodes[v].human_readable_id):
        node = graph.nodes[entity_id]
        if node.type is not NodeType.ENTITY:
            raise ValidationError(f"important set contains non-entity node {entity_id}")
        lines = attribute_context(graph, entity_id)
        context = "\n".join(f"{i + 1}. {text}" for i, text in enumerate(lines))
        request = PROMPTS["attribute"].render(title=node.title, context=context)
        try:
            content = writer.chat(request)
        except ProviderError as exc:
            failures.append(StageFailure(entity_id, str(exc)))
            logger.warning("attribute generation failed for %s: %s", node.title, exc)
            continue
        a_id = graph.add_node(HeteroNode.attribute(content, entity_id, title=node.title))
        graph.upsert_edge(a_id, entity_id, EdgeKind.ATTRIBUTE)
    return failures


def detect_communities(graph: HeteroGraph, seed: int = 7,
                       resolution: float = 1.0) -> CommunityPartition:
    """Seeded modularity community detection over every node; ids densely
    numbered from 0 and written back onto the nodes."""
    if graph.node_count == 0:
        raise ValidationError("cannot detect communities on an empty graph")
    ids = sorted(graph.nodes)
    index = {v: i for i, v in enumerate(ids)}
    edges = [
        (index[u], index[v], float(edge.weight))
        for (u, v), edge in sorted(graph.edges.items())
    ]
    membership = analytics.leiden_membership(len(ids), edges, seed=seed,
                                             resolution=resolution)
    dense: dict[int, int] = {}
    assignment: dict[str, int] = {}
    for v in ids:
        cid = dense.setdefault(membership[index[v]], len(dense))
        assignment[v] = cid
        graph.set_community(v, cid)
    return CommunityPartition(assignment=assignment, community_count=len(dense))


def _parse_high_level(text: str) -> list[tuple[str, str]]:
    data = extract_json_object(text)
    elements = data.get("elements")
    if not isinstance(elements, list) or not elements:
        raise ValueError("missing non-empty 'elements' list")
    out = []
    for el in elements:
        insight = str(el.get("insight", "")).strip()
        title = str(el.get("title", "")).strip()
        if not insight or not title:
            raise ValueError("element missing insight or title")
        out.append((insight, title))
    return out


def community_context(graph: HeteroGraph, member_ids: list[str],
                      tokenizer: Tokenizer, budget: int) -> str:
    """Concatenated S/A/R contents in hrid order, truncated at the token budget."""
    nodes = [
        graph.nodes[v] for v in member_ids
        if graph.nodes[v].type in (NodeType.SEMANTIC_UNIT, NodeType.ATTRIBUTE,
                                   NodeType.RELATIONSHIP)
    ]
    nodes.sort(key=lambda n: n.human_readable_id)
    pieces: list[str] = []
    used = 0
    for node in nodes:
        cost = tokenizer.count(node.content)
        if pieces and used + cost > budget:
            break
        pieces.append(node.content)
        used += cost
        if used >= budget:
            break
    return "\n".join(pieces)


def extract_high_level(graph: HeteroGraph, partition: CommunityPartition, writer,
                       tokenizer: Tokenizer, context_budget: int = 8000,
                       ) -> tuple[list[tuple[str, str]], list[StageFailure]]:
    """Per community, ask the writer for insight/title pairs and add the H and O
    nodes with their e_o link. Returns (created (h_id, o_id) pairs, failures)."""
    created: list[tuple[str, str]] = []
    failures: list[StageFailure] = []
    for cid, member_ids in sorted(partition.members().items()):
        context = community_context(graph, member_ids, tokenizer, context_budget)
        if not context:
            continue  # nothing content-bearing to summarize
        request = PROMPTS["high_level"].render(context=context)
        try:
            elements = chat_structured(writer, request, _parse_high_level)
        except (ValueError, ProviderError) as exc:
            failures.append(StageFailure(f"community:{cid}", str(exc)))
            logger.warning("high-level extraction failed for community %d: %s", cid, exc)
            continue
        for i, (insight, title) in enumerate(elements):
            h = HeteroNode.high_level(insight, cid, i)
            h.community = cid
            h_id = graph.add_node(h)
            o = HeteroNode.overview(title, h_id)
            o.community = cid
            o_id = graph.add_node(o)
            graph.upsert_edge(h_id, o_id, EdgeKind.OVERVIEW)
            # New nodes join their source community in the partition too.
            partition.assignment[h_id] = cid
            partition.assignment[o_id] = cid
            created.append((h_id, o_id))
    return created, failures


def kmeans_cluster_count(n: int) -> int:
    return max(1, math.isqrt(n))


def semantic_match_edges(graph: HeteroGraph, partition: CommunityPartition,
                         vectors: dict[str, np.ndarray],
                         seed: int = 11) -> set[tuple[str, str]]:
    """K-means the S/A/H embeddings (K = floor(sqrt(n))) and link every
    co-community, co-cluster (S|A, H) pair with an e_h edge."""
    ids = sorted(
        graph.nodes_of_types({NodeType.SEMANTIC_UNIT, NodeType.ATTRIBUTE,
                              NodeType.HIGH_LEVEL}),
        key=lambda v: graph.nodes[v].human_readable_id,
    )
    if not ids:
        return set()
    missing = [v for v in ids if v not in vectors]
    if missing:
        raise ValidationError(f"{len(missing)} S/A/H nodes lack embeddings")
    k = kmeans_cluster_count(len(ids))
    labels = cluster_labels(np.stack([vectors[v] for v in ids]), k, seed)

    groups: dict[tuple[int, int], tuple[list[str], list[str]]] = {}
    for v, label in zip(ids, labels):
        key = (partition.assignment[v], int(label))
        sa, h = groups.setdefault(key, ([], []))
        if graph.nodes[v].type is NodeType.HIGH_LEVEL:
            h.append(v)
        else:
            sa.append(v)

    added: set[tuple[str, str]] = set()
    for key in sorted(groups):
        sa, h = groups[key]
        for v in sa:
            for v2 in h:
                graph.upsert_edge(v, v2, EdgeKind.SEMANTIC_MATCH)
                added.add((v, v2) if v < v2 else (v2, v))
    return added


def cluster_labels(matrix: np.ndarray, k: int, seed: int) -> np.ndarray:
    if matrix.shape[0] == 1:
        return np.zeros(1, dtype=int)
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=100,
                random_state=seed)
    return km.fit_predict(matrix)
