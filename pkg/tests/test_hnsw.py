import numpy as np
import pytest

from noderag.errors import ValidationError
from noderag.hnsw import HnswIndex


def unit_rows(n, dim, seed):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, dim))
    return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)


def build_index(vectors, **kwargs):
    index = HnswIndex(vectors.shape[1], **kwargs)
    for i, row in enumerate(vectors):
        index.insert(f"v{i:04d}", row)
    return index


def exact_top_k(vectors, query, k):
    sims = vectors @ query
    order = sorted(range(len(vectors)), key=lambda i: (-float(sims[i]), i))
    return [f"v{i:04d}" for i in order[:k]]


class TestConstruction:
    def test_single_vector(self):
        vecs = unit_rows(1, 16, 0)
        index = build_index(vecs)
        assert len(index) == 1
        assert index.entry_point == 0
        assert index.search(vecs[0], 1) == [("v0000", pytest.approx(1.0))]

    def test_m_below_two_rejected(self):
        with pytest.raises(ValidationError):
            HnswIndex(8, m=1)

    def test_duplicate_id_rejected(self):
        index = HnswIndex(4)
        v = unit_rows(1, 4, 0)[0]
        index.insert("a", v)
        with pytest.raises(ValidationError):
            index.insert("a", v)

    def test_dimension_mismatch_rejected(self):
        index = HnswIndex(4)
        with pytest.raises(ValidationError):
            index.insert("a", unit_rows(1, 5, 0)[0])
        index.insert("a", unit_rows(1, 4, 0)[0])
        with pytest.raises(ValidationError):
            index.search(unit_rows(1, 5, 0)[0], 1)

    def test_degree_caps_hold(self):
        vecs = unit_rows(400, 16, 3)
        index = build_index(vecs, m=8, ef_construction=50)
        for idx, per_layer in enumerate(index._neighbors):
            for layer, neigh in enumerate(per_layer):
                cap = index.m0 if layer == 0 else index.m
                assert len(neigh) <= cap

    def test_build_is_bit_reproducible(self):
        vecs = unit_rows(300, 32, 5)
        a = build_index(vecs, seed=13)
        b = build_index(vecs, seed=13)
        assert a.layer_adjacency() == b.layer_adjacency()
        assert a.entry_point == b.entry_point

    def test_different_seed_changes_levels(self):
        vecs = unit_rows(300, 32, 5)
        a = build_index(vecs, seed=13)
        b = build_index(vecs, seed=14)
        assert a._levels != b._levels


class TestSearch:
    def test_exhaustive_regime_matches_oracle_exactly(self):
        vecs = unit_rows(50, 16, 7)
        index = build_index(vecs)
        query = unit_rows(1, 16, 99)[0]
        got = [node_id for node_id, _ in index.search(query, k=50)]
        assert got == exact_top_k(vecs, query, 50)
        oversized = [node_id for node_id, _ in index.search(query, k=500)]
        assert oversized == got

    def test_recall_at_10(self):
        vecs = unit_rows(2000, 64, seed=101)
        queries = unit_rows(100, 64, seed=202)
        index = build_index(vecs, m=16, ef_construction=200, ef_search=64, seed=13)
        hits = 0
        for q in queries:
            got = {node_id for node_id, _ in index.search(q, 10)}
            want = set(exact_top_k(vecs, q, 10))
            hits += len(got & want)
        recall = hits / (10 * len(queries))
        assert recall >= 0.95

    def test_similarities_are_descending(self):
        vecs = unit_rows(200, 16, 11)
        index = build_index(vecs)
        sims = [s for _, s in index.search(unit_rows(1, 16, 5)[0], 20)]
        assert sims == sorted(sims, reverse=True)

    def test_empty_index_returns_nothing(self):
        index = HnswIndex(8)
        assert index.search(unit_rows(1, 8, 0)[0], 5) == []


class TestBaseLayer:
    def test_pairs_are_sorted_and_distinct(self):
        vecs = unit_rows(100, 16, 13)
        index = build_index(vecs)
        pairs = index.base_layer_pairs()
        assert pairs == sorted(set(pairs))
        for a, b in pairs:
            assert a < b

    def test_every_nonfirst_node_appears_at_base_layer(self):
        vecs = unit_rows(100, 16, 13)
        index = build_index(vecs)
        seen = set()
        for a, b in index.base_layer_pairs():
            seen.add(a)
            seen.add(b)
        assert len(seen) == 100
