import json
import random
from pathlib import Path

import pytest

from noderag.config import PipelineConfig
from noderag.hgraph import EdgeKind, HeteroGraph, HeteroNode
from noderag.llmio import ChatRequest, MockChatClient, MockEmbeddingClient
from noderag.pipeline import build_index


class ScriptedChat:
    """Chat stub that replays canned replies in order."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests: list[ChatRequest] = []
        self.calls = []

    def chat(self, request: ChatRequest) -> str:
        self.requests.append(request)
        self.calls.append((request.template, request.temperature))
        if not self.replies:
            raise AssertionError("scripted chat ran out of replies")
        return self.replies.pop(0)


@pytest.fixture
def mock_chat():
    return MockChatClient()


@pytest.fixture
def mock_embedder():
    return MockEmbeddingClient()


def plain_graph(names, edges, weights=None):
    """Graph of semantic-unit nodes joined by hnsw edges: lets tests build
    arbitrary topologies while respecting endpoint legality. Returns
    (graph, {name: node_id})."""
    g = HeteroGraph()
    ids = {}
    for name in names:
        ids[name] = g.add_node(HeteroNode.semantic_unit(f"unit {name}", "chunk"))
    for k, (u, v) in enumerate(edges):
        w = 1 if weights is None else weights[k]
        for _ in range(w):
            g.upsert_edge(ids[u], ids[v], EdgeKind.HNSW)
    return g, ids


def random_plain_graph(n, edge_prob, seed, max_weight=1):
    rng = random.Random(seed)
    names = [f"n{i}" for i in range(n)]
    edges, weights = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                edges.append((names[i], names[j]))
                weights.append(rng.randint(1, max_weight))
    return plain_graph(names, edges, weights)


SYNTH_CHUNKS = [
    ("c00", "Alice Rivera founded Helios Labs in Lisbon. Helios Labs builds solar drones."),
    ("c01", "Helios Labs hired Bruno Costa as chief engineer. Bruno Costa designed the Falcon drone."),
    ("c02", "The Falcon drone won the Madrid Air Prize. Judges praised its lightweight wings."),
    ("c03", "Lisbon hosts the annual Solar Summit. Alice Rivera spoke at the Solar Summit about clean flight."),
    ("c04", "Bruno Costa studied at Porto University. Porto University runs a famous robotics program."),
    ("c05", "The Madrid Air Prize committee includes Carla Mendes. Carla Mendes chairs the European Drone Council."),
    ("c06", "The European Drone Council sets safety rules. New rules require parachutes on heavy drones."),
    ("c07", "Helios Labs opened a factory in Porto. The factory produces Falcon wings."),
    ("c08", "Solar Summit attendees toured the Porto factory. The tour ended with a Falcon flight demo."),
    ("c09", "Carla Mendes praised the Falcon demo. She invited Alice Rivera to address the European Drone Council."),
]

GOLDEN_QUERIES = [
    "Who founded Helios Labs?",
    "What did the Falcon drone win?",
    "Where did Bruno Costa study?",
    "Who chairs the European Drone Council?",
    "What happens at the Solar Summit?",
]


def write_synth_corpus(path: Path) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        for chunk_id, text in SYNTH_CHUNKS:
            f.write(json.dumps({"doc_id": "synth", "chunk_id": chunk_id,
                                "text": text}) + "\n")
    return path


def synth_config(**overrides) -> PipelineConfig:
    return PipelineConfig(**overrides).validate()


@pytest.fixture(scope="session")
def synth_index(tmp_path_factory):
    """The 10-chunk synthetic corpus indexed once with all-mock clients."""
    root = tmp_path_factory.mktemp("synth")
    corpus = write_synth_corpus(root / "corpus.jsonl")
    built = build_index(corpus, root / "idx", synth_config())
    return built
