"""Hierarchical navigable small-world index over unit vectors, cosine metric.

Construction is single-threaded and seeded: the only randomness is the level
draw per insertion, so the same seed, parameters, and insertion order rebuild
byte-identical layer adjacencies. The base layer is exposed as id pairs so it
can be merged into the heterograph as semantic edges.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from .errors import ValidationError


class HnswIndex:
    def __init__(self, dim: int, m: int = 16, ef_construction: int = 200,
                 ef_search: int = 64, seed: int = 13) -> None:
        if m < 2:
            raise ValidationError("M must be >= 2")
        if ef_construction < 1 or ef_search < 1:
            raise ValidationError("ef parameters must be >= 1")
        self.dim = dim
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._level_mult = 1.0 / math.log(m)

        self.ids: list[str] = []
        self._index_of: dict[str, int] = {}
        self._levels: list[int] = []
        # _neighbors[idx][layer] is the adjacency set of idx at that layer.
        self._neighbors: list[list[set[int]]] = []
        self.entry_point: int | None = None
        self.max_level = -1

        self._capacity = 256
        self._matrix = np.zeros((self._capacity, dim), dtype=np.float32)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._index_of

    # -- construction -------------------------------------------------------

    def insert(self, node_id: str, vector: np.ndarray) -> None:
        if node_id in self._index_of:
            raise ValidationError(f"duplicate id in index: {node_id}")
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise ValidationError(f"vector shape {v.shape} does not match dim {self.dim}")

        idx = len(self.ids)
        if idx >= self._capacity:
            self._capacity *= 2
            grown = np.zeros((self._capacity, self.dim), dtype=np.float32)
            grown[:idx] = self._matrix[:idx]
            self._matrix = grown
        self._matrix[idx] = v
        self.ids.append(node_id)
        self._index_of[node_id] = idx

        # 1 - random() lies in (0, 1], so the log is always defined.
        level = int(-math.log(1.0 - self._rng.random()) * self._level_mult)
        self._levels.append(level)
        self._neighbors.append([set() for _ in range(level + 1)])

        if self.entry_point is None:
            self.entry_point = idx
            self.max_level = level
            return

        entry = [self.entry_point]
        for layer in range(self.max_level, level, -1):
            entry = [i for _, i in self._search_layer(v, entry, layer, 1)]

        for layer in range(min(level, self.max_level), -1, -1):
            candidates = self._search_layer(v, entry, layer, self.ef_construction)
            selected = [i for _, i in candidates[:self.m]]
            for u in selected:
                self._neighbors[idx][layer].add(u)
                self._neighbors[u][layer].add(idx)
            cap = self.m0 if layer == 0 else self.m
            for u in selected:
                if len(self._neighbors[u][layer]) > cap:
                    self._prune(u, layer, cap)
            entry = [i for _, i in candidates]

        if level > self.max_level:
            self.entry_point = idx
            self.max_level = level

    def _prune(self, idx: int, layer: int, cap: int) -> None:
        # Shrink only this node's own list; links may become one-directional.
        neighbors = sorted(self._neighbors[idx][layer])
        dists = 1.0 - self._matrix[neighbors] @ self._matrix[idx]
        keep = heapq.nsmallest(cap, zip(dists, neighbors))
        self._neighbors[idx][layer] = {u for _, u in keep}

    def _search_layer(self, query: np.ndarray, entry: list[int], layer: int,
                      ef: int) -> list[tuple[float, int]]:
        """Best-first beam of width ef; returns (distance, idx) ascending."""
        visited = set(entry)
        entry_d = 1.0 - self._matrix[entry] @ query
        candidates = [(float(d), i) for d, i in zip(entry_d, entry)]
        heapq.heapify(candidates)
        best = [(-d, i) for d, i in candidates]
        heapq.heapify(best)
        while len(best) > ef:
            heapq.heappop(best)
        while candidates:
            d, i = heapq.heappop(candidates)
            if len(best) >= ef and d > -best[0][0]:
                break
            fresh = [u for u in self._neighbors[i][layer] if u not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            fresh_d = 1.0 - self._matrix[fresh] @ query
            for u, du in zip(fresh, fresh_d):
                du = float(du)
                if len(best) < ef or du < -best[0][0]:
                    heapq.heappush(candidates, (du, u))
                    heapq.heappush(best, (-du, u))
                    if len(best) > ef:
                        heapq.heappop(best)
        return sorted((-d, i) for d, i in best)

    # -- queries --------------------------------------------------------------

    def search(self, query: np.ndarray, k: int,
               ef_search: int | None = None) -> list[tuple[str, float]]:
        """Top-k ids with cosine similarity, most similar first. Falls back to
        an exact scan when k covers the whole index."""
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise ValidationError(f"query shape {q.shape} does not match dim {self.dim}")
        n = len(self.ids)
        if n == 0 or k <= 0:
            return []
        if k >= n:
            sims = self._matrix[:n] @ q
            order = sorted(range(n), key=lambda i: (-float(sims[i]), i))
            return [(self.ids[i], float(sims[i])) for i in order]

        ef = max(ef_search or self.ef_search, k)
        entry = [self.entry_point]
        for layer in range(self.max_level, 0, -1):
            entry = [i for _, i in self._search_layer(q, entry, layer, 1)]
        found = self._search_layer(q, entry, 0, ef)[:k]
        return [(self.ids[i], 1.0 - d) for d, i in found]

    def base_layer_pairs(self) -> list[tuple[str, str]]:
        """Distinct undirected base-layer adjacencies as sorted id pairs.

        Pruning can leave links one-directional, so every out-link counts."""
        pairs = set()
        for idx in range(len(self.ids)):
            for u in self._neighbors[idx][0]:
                a, b = self.ids[idx], self.ids[u]
                pairs.add((a, b) if a < b else (b, a))
        return sorted(pairs)

    def layer_adjacency(self) -> list[dict[str, list[str]]]:
        """Full adjacency per layer keyed by node id (for reproducibility checks)."""
        layers: list[dict[str, list[str]]] = [dict() for _ in range(self.max_level + 1)]
        for idx, per_layer in enumerate(self._neighbors):
            for layer, neigh in enumerate(per_layer):
                layers[layer][self.ids[idx]] = sorted(self.ids[u] for u in neigh)
        return layers
