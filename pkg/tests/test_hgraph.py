import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noderag.errors import FrozenGraphError, GraphFormatError, ValidationError
from noderag.hgraph import (EMBEDDABLE_TYPES, EdgeKind, HeteroGraph, HeteroNode,
                            NodeType, legal_endpoints, normalize_title)


def hinton_example_graph():
    """One semantic unit, three entities, one relationship, fully wired."""
    g = HeteroGraph()
    s = g.add_node(HeteroNode.semantic_unit(
        "Hinton was awarded the Nobel Prize for inventing backpropagation", "c0"))
    hinton = g.add_node(HeteroNode.entity("Hinton"))
    nobel = g.add_node(HeteroNode.entity("Nobel Prize"))
    backprop = g.add_node(HeteroNode.entity("backpropagation"))
    r = g.add_node(HeteroNode.relationship("Hinton received Nobel Prize", "c0"))
    for n in (hinton, nobel, backprop):
        g.upsert_edge(s, n, EdgeKind.DECOMPOSITION)
    g.upsert_edge(r, hinton, EdgeKind.RELATION)
    g.upsert_edge(r, nobel, EdgeKind.RELATION)
    g.upsert_edge(r, s, EdgeKind.RELATION)
    return g, dict(s=s, hinton=hinton, nobel=nobel, backprop=backprop, r=r)


class TestNodes:
    def test_entity_upsert_is_idempotent(self):
        g = HeteroGraph()
        first = g.add_node(HeteroNode.entity("Hinton"))
        again = g.add_node(HeteroNode.entity("Hinton"))
        assert first == again
        assert g.node_count == 1

    def test_entity_dedup_normalizes_title(self):
        g = HeteroGraph()
        a = g.add_node(HeteroNode.entity("  Nobel   Prize "))
        b = g.add_node(HeteroNode.entity("nobel prize"))
        assert a == b

    def test_semantic_unit_gets_new_id(self):
        g = HeteroGraph()
        s = g.add_node(HeteroNode.semantic_unit(
            "Hinton was awarded the Nobel Prize for inventing backpropagation", "c0"))
        assert g.nodes[s].type is NodeType.SEMANTIC_UNIT

    def test_same_content_different_chunk_distinct(self):
        a = HeteroNode.semantic_unit("it rained", "c0")
        b = HeteroNode.semantic_unit("it rained", "c1")
        assert a.id != b.id

    def test_overview_with_content_rejected(self):
        g = HeteroGraph()
        bad = HeteroNode(id="x", type=NodeType.OVERVIEW, title="topic", content="oops")
        with pytest.raises(ValidationError):
            g.add_node(bad)

    def test_entity_with_content_rejected(self):
        with pytest.raises(ValidationError):
            HeteroNode(id="x", type=NodeType.ENTITY, title="A", content="text").validate()

    def test_text_without_content_rejected(self):
        with pytest.raises(ValidationError):
            HeteroNode(id="x", type=NodeType.TEXT).validate()

    def test_hrids_are_monotonic(self):
        g = HeteroGraph()
        ids = [g.add_node(HeteroNode.entity(f"e{i}")) for i in range(5)]
        assert [g.nodes[v].human_readable_id for v in ids] == [0, 1, 2, 3, 4]


class TestEdges:
    def test_fresh_edge_weight_one(self):
        g, ids = hinton_example_graph()
        t = g.add_node(HeteroNode.text("raw", "c0"))
        assert g.upsert_edge(t, ids["s"], EdgeKind.SOURCE) == 1

    def test_structural_then_hnsw_accumulates(self):
        g, ids = hinton_example_graph()
        t = g.add_node(HeteroNode.text("raw", "c0"))
        g.upsert_edge(t, ids["s"], EdgeKind.SOURCE)
        assert g.upsert_edge(t, ids["s"], EdgeKind.HNSW) == 2
        edge = g.get_edge(t, ids["s"])
        assert edge.kinds == {EdgeKind.SOURCE, EdgeKind.HNSW}

    def test_self_loop_rejected(self):
        g, ids = hinton_example_graph()
        with pytest.raises(ValidationError):
            g.upsert_edge(ids["hinton"], ids["hinton"], EdgeKind.DECOMPOSITION)

    def test_unknown_id_rejected(self):
        g, ids = hinton_example_graph()
        with pytest.raises(ValidationError):
            g.upsert_edge(ids["s"], "nope", EdgeKind.DECOMPOSITION)

    def test_illegal_endpoints_rejected(self):
        g, ids = hinton_example_graph()
        # entities are not embeddable, so they can never take hnsw edges
        with pytest.raises(ValidationError):
            g.upsert_edge(ids["hinton"], ids["nobel"], EdgeKind.HNSW)
        with pytest.raises(ValidationError):
            g.upsert_edge(ids["s"], ids["hinton"], EdgeKind.SOURCE)

    def test_legal_endpoints_table(self):
        assert legal_endpoints(EdgeKind.DECOMPOSITION, NodeType.SEMANTIC_UNIT, NodeType.ENTITY)
        assert legal_endpoints(EdgeKind.RELATION, NodeType.RELATIONSHIP, NodeType.SEMANTIC_UNIT)
        assert not legal_endpoints(EdgeKind.RELATION, NodeType.SEMANTIC_UNIT, NodeType.ENTITY)
        assert legal_endpoints(EdgeKind.HNSW, NodeType.TEXT, NodeType.HIGH_LEVEL)
        assert not legal_endpoints(EdgeKind.HNSW, NodeType.TEXT, NodeType.OVERVIEW)


class TestTypeQueries:
    def test_hinton_example_counts(self):
        g, _ = hinton_example_graph()
        picked = g.nodes_of_types({NodeType.ENTITY, NodeType.RELATIONSHIP,
                                   NodeType.SEMANTIC_UNIT})
        assert len(picked) == 5
        assert len(g.typed_index[NodeType.ENTITY]) == 3

    def test_empty_type_set(self):
        g, _ = hinton_example_graph()
        assert g.nodes_of_types(set()) == set()

    def test_embeddable_set_definition(self):
        g, ids = hinton_example_graph()
        t = g.add_node(HeteroNode.text("raw", "c0"))
        assert g.nodes_of_types(EMBEDDABLE_TYPES) == {ids["s"], t}

    def test_typed_index_partitions_nodes(self):
        g, _ = hinton_example_graph()
        union = set()
        for t, members in g.typed_index.items():
            assert union.isdisjoint(members)
            union |= members
        assert union == set(g.nodes)


def random_heterograph(seed, n_entities=60, n_units=300, n_texts=40):
    rng = random.Random(seed)
    g = HeteroGraph()
    entities = [g.add_node(HeteroNode.entity(f"entity {i}")) for i in range(n_entities)]
    units = [g.add_node(HeteroNode.semantic_unit(f"unit {i}", f"c{i % n_texts}"))
             for i in range(n_units)]
    texts = [g.add_node(HeteroNode.text(f"text {i}", f"c{i}")) for i in range(n_texts)]
    for s in units:
        for n in rng.sample(entities, rng.randint(0, 3)):
            g.upsert_edge(s, n, EdgeKind.DECOMPOSITION)
    for i, s in enumerate(units):
        g.upsert_edge(texts[i % n_texts], s, EdgeKind.SOURCE)
    for _ in range(400):
        u, v = rng.sample(units + texts, 2)
        g.upsert_edge(u, v, EdgeKind.HNSW)
    return g


class TestPersistence:
    def test_empty_round_trip(self, tmp_path):
        g = HeteroGraph()
        path = tmp_path / "g.hg"
        g.save(path)
        loaded = HeteroGraph.load(path)
        assert loaded.node_count == 0 and loaded.edge_count == 0

    def test_large_random_round_trip_byte_identical(self, tmp_path):
        g = random_heterograph(seed=42)
        assert g.node_count == 400
        raw = g.to_bytes()
        loaded = HeteroGraph.from_bytes(raw)
        assert loaded.to_bytes() == raw
        assert loaded.node_count == g.node_count
        assert loaded.edge_count == g.edge_count
        for nid, node in g.nodes.items():
            other = loaded.nodes[nid]
            assert (node.type, node.title, node.content, node.source_chunk,
                    node.community, node.human_readable_id) == \
                   (other.type, other.title, other.content, other.source_chunk,
                    other.community, other.human_readable_id)
        for key, edge in g.edges.items():
            assert loaded.edges[key].weight == edge.weight
            assert loaded.edges[key].kinds == edge.kinds

    def test_version_bump_rejected(self):
        raw = random_heterograph(seed=1).to_bytes()
        tampered = raw.replace(b"HGRAPH v1", b"HGRAPH v2", 1)
        with pytest.raises(GraphFormatError, match="checksum|format"):
            HeteroGraph.from_bytes(tampered)

    def test_version_bump_with_valid_checksum_rejected(self):
        g = random_heterograph(seed=1)
        body = g.to_bytes()
        # rebuild the trailer so only the version line is wrong
        import hashlib
        lines = body.decode().split("\n")
        lines[0] = "HGRAPH v2"
        new_body = ("\n".join(lines[:-2]) + "\n").encode()
        digest = hashlib.sha256(new_body).hexdigest()
        tampered = new_body + f"CHECKSUM {digest}\n".encode()
        with pytest.raises(GraphFormatError, match="format"):
            HeteroGraph.from_bytes(tampered)

    def test_checksum_failure(self):
        raw = random_heterograph(seed=2).to_bytes()
        tampered = raw.replace(b'"weight":1', b'"weight":9', 1)
        with pytest.raises(GraphFormatError, match="checksum"):
            HeteroGraph.from_bytes(tampered)

    def test_truncated_file(self):
        raw = random_heterograph(seed=3).to_bytes()
        with pytest.raises(GraphFormatError):
            HeteroGraph.from_bytes(raw[: len(raw) // 2])

    def test_hrid_assignment_survives_round_trip(self, tmp_path):
        g = random_heterograph(seed=4)
        path = tmp_path / "g.hg"
        g.save(path)
        loaded = HeteroGraph.load(path)
        loaded.add_node(HeteroNode.entity("fresh"))
        fresh = loaded.find_entity("fresh")
        assert loaded.nodes[fresh].human_readable_id == g.node_count


class TestInvariants:
    def test_duplicate_upsert_accounting(self):
        rng = random.Random(7)
        g = HeteroGraph()
        units = [g.add_node(HeteroNode.semantic_unit(f"u{i}", "c")) for i in range(10)]
        duplicates = 0
        for _ in range(300):
            u, v = rng.sample(units, 2)
            if g.has_edge(u, v):
                duplicates += 1
            g.upsert_edge(u, v, EdgeKind.HNSW)
        assert sum(e.weight - 1 for e in g.edges.values()) == duplicates

    def test_endpoint_legality_full_scan(self):
        g = random_heterograph(seed=9)
        from noderag.hgraph import legal_endpoints
        for (u, v), edge in g.edges.items():
            for kind in edge.kinds:
                assert legal_endpoints(kind, g.nodes[u].type, g.nodes[v].type)

    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)).filter(
        lambda p: p[0] != p[1]), max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_weight_accounting_property(self, pairs):
        g = HeteroGraph()
        units = [g.add_node(HeteroNode.semantic_unit(f"u{i}", "c")) for i in range(8)]
        duplicates = 0
        for i, j in pairs:
            if g.has_edge(units[i], units[j]):
                duplicates += 1
            g.upsert_edge(units[i], units[j], EdgeKind.HNSW)
        assert sum(e.weight - 1 for e in g.edges.values()) == duplicates
        union = set()
        for members in g.typed_index.values():
            union |= members
        assert union == set(g.nodes)

    def test_merged_edge_count_identity(self):
        # the one environment-free arithmetic instance from production-scale runs
        assert 171_410 + 203_199 - 7_123 == 367_486

    def test_frozen_graph_rejects_mutation(self):
        g, ids = hinton_example_graph()
        g.freeze()
        with pytest.raises(FrozenGraphError):
            g.add_node(HeteroNode.entity("late"))
        with pytest.raises(FrozenGraphError):
            g.upsert_edge(ids["s"], ids["hinton"], EdgeKind.DECOMPOSITION)


def test_normalize_title():
    assert normalize_title("  Nobel   Prize ") == "nobel prize"
    assert normalize_title("HINTON") == "hinton"
