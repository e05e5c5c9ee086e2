"""Heterogeneous-graph retrieval engine.

Indexing decomposes a corpus into typed nodes (text, semantic units, entities,
relationships, attributes, high-level insights and their keyword overviews),
augments the graph with importance- and community-derived structure, and
merges an ANN base layer as semantic edges. Queries combine exact title
matching and vector similarity for entry points, spread relevance with a
two-step personalized PageRank, and assemble a token-budgeted context from
retrievable nodes only.
"""

from .config import PipelineConfig, load_config
from .hgraph import EdgeKind, HeteroGraph, HeteroNode, NodeType
from .pipeline import build_index, load_index, make_retriever, run_bench
from .retrieve import Retriever

__version__ = "0.1.0"

__all__ = [
    "EdgeKind",
    "HeteroGraph",
    "HeteroNode",
    "NodeType",
    "PipelineConfig",
    "Retriever",
    "build_index",
    "load_config",
    "load_index",
    "make_retriever",
    "run_bench",
    "__version__",
]
