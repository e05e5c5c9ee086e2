"""Deterministic graph analytics: k-core peeling, sampled betweenness, and a
seeded Leiden-style community detector with the modularity objective.

Everything here is read-only over the graph and reproducible under a fixed
seed. Betweenness delegates to networkx (pivot-sampled Brandes); k-core and
community detection are implemented locally.
"""
from __future__ import annotations

import math
import random
from collections import defaultdict, deque

import networkx as nx

from .errors import NotApplicableError, ValidationError
from .hgraph import HeteroGraph


def to_networkx(graph: HeteroGraph) -> nx.Graph:
    # Sorted insertion: seeded pivot sampling must not depend on whether the
    # graph was just built or reloaded from disk.
    g = nx.Graph()
    g.add_nodes_from(sorted(graph.nodes))
    for (u, v) in sorted(graph.edges):
        g.add_edge(u, v, weight=graph.edges[(u, v)].weight)
    return g


# -- k-core -------------------------------------------------------------------

def k_core_membership(graph: HeteroGraph, k: int) -> set[str]:
    """Nodes of the maximal subgraph where every node keeps degree >= k,
    found by iteratively peeling under-degree nodes."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    degree = {v: graph.degree(v) for v in graph.nodes}
    removed: set[str] = set()
    queue = deque(v for v, d in degree.items() if d < k)
    in_queue = set(queue)
    while queue:
        v = queue.popleft()
        if v in removed:
            continue
        removed.add(v)
        for u in graph.neighbors(v):
            if u in removed:
                continue
            degree[u] -= 1
            if degree[u] < k and u not in in_queue:
                queue.append(u)
                in_queue.add(u)
    return set(graph.nodes) - removed


# -- betweenness --------------------------------------------------------------

def betweenness_scores(graph: HeteroGraph, pivots: int = 10,
                       seed: int = 5) -> dict[str, float]:
    """Brandes betweenness, unnormalized; pivot-sampled when pivots < |V|.

    Sampled estimates are rescaled by |V|/pivots so they sit on the same
    scale as the exact values.
    """
    n = graph.node_count
    if n < 2:
        raise ValidationError("betweenness requires at least 2 nodes")
    g = to_networkx(graph)
    k = None if pivots >= n else pivots
    return dict(nx.betweenness_centrality(g, k=k, normalized=False, seed=seed))


# -- Leiden-style community detection ------------------------------------------

def leiden_membership(n: int, edges: list[tuple[int, int, float]],
                      seed: int = 7, resolution: float = 1.0) -> list[int]:
    """Community id per node (dense, from 0) for an undirected weighted graph.

    Modularity-based local moving with a work queue, a refinement phase that
    only merges well-connected singletons inside their community, and
    aggregation over the refined partition seeded with the coarse one.
    Seeded shuffles plus lowest-id tie-breaks make the result reproducible.
    """
    if n == 0:
        return []
    if not edges:
        return list(range(n))
    rng = random.Random(seed)

    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    self_w = [0.0] * n
    for u, v, w in edges:
        if u == v:
            self_w[u] += w
        else:
            adj[u][v] = adj[u].get(v, 0.0) + w
            adj[v][u] = adj[v].get(u, 0.0) + w

    coarse = list(range(n))  # current-level node containing each original node
    init = list(range(n))
    while True:
        k = [sum(adj[v].values()) + 2.0 * self_w[v] for v in range(len(adj))]
        m2 = sum(k)
        if m2 <= 0:
            final = list(range(len(adj)))
            break
        comm = _local_move(adj, k, m2, resolution, init, rng)
        if len(set(comm)) == len(adj):
            final = comm
            break
        refined = _refine(adj, k, m2, resolution, comm, rng)
        if len(set(refined)) == len(adj):
            final = comm
            break
        adj, self_w, init, agg_of = _aggregate(adj, self_w, refined, comm)
        coarse = [agg_of[refined[coarse[v]]] for v in range(n)]

    membership = [final[coarse[v]] for v in range(n)]
    dense: dict[int, int] = {}
    return [dense.setdefault(c, len(dense)) for c in membership]


def _local_move(adj, k, m2, gamma, init, rng):
    n = len(adj)
    comm = list(init)
    tot = defaultdict(float)
    for v in range(n):
        tot[comm[v]] += k[v]
    order = list(range(n))
    rng.shuffle(order)
    queue = deque(order)
    queued = [True] * n
    while queue:
        v = queue.popleft()
        queued[v] = False
        w_to = defaultdict(float)
        for u, w in adj[v].items():
            w_to[comm[u]] += w
        cur = comm[v]
        tot[cur] -= k[v]
        best_c = cur
        best_gain = w_to.get(cur, 0.0) - gamma * k[v] * tot[cur] / m2
        for c, w in w_to.items():
            if c == cur:
                continue
            gain = w - gamma * k[v] * tot[c] / m2
            if gain > best_gain + 1e-12 or (abs(gain - best_gain) <= 1e-12 and c < best_c):
                best_gain, best_c = gain, c
        tot[best_c] += k[v]
        comm[v] = best_c
        if best_c != cur:
            for u in adj[v]:
                if comm[u] != best_c and not queued[u]:
                    queue.append(u)
                    queued[u] = True
    return comm


def _refine(adj, k, m2, gamma, comm, rng):
    n = len(adj)
    refined = list(range(n))
    rtot = list(k)
    rsize = [1] * n
    tot_c = defaultdict(float)
    for v in range(n):
        tot_c[comm[v]] += k[v]
    order = list(range(n))
    rng.shuffle(order)
    for v in order:
        if rsize[refined[v]] > 1:
            continue
        c = comm[v]
        conn = sum(w for u, w in adj[v].items() if comm[u] == c)
        if conn < gamma * k[v] * (tot_c[c] - k[v]) / m2:
            continue
        w_to = defaultdict(float)
        for u, w in adj[v].items():
            if comm[u] == c:
                w_to[refined[u]] += w
        cur = refined[v]
        best_d, best_gain = cur, 0.0
        for d, w in w_to.items():
            if d == cur:
                continue
            gain = w - gamma * k[v] * rtot[d] / m2
            if gain > best_gain + 1e-12 or (abs(gain - best_gain) <= 1e-12 and 0.0 < gain and d < best_d):
                best_gain, best_d = gain, d
        if best_d != cur and best_gain > 0.0:
            rtot[best_d] += k[v]
            rtot[cur] -= k[v]
            rsize[best_d] += 1
            rsize[cur] -= 1
            refined[v] = best_d
    return refined


def _aggregate(adj, self_w, refined, comm):
    labels: dict[int, int] = {}
    agg_of = {}
    for v in range(len(adj)):
        agg_of[refined[v]] = labels.setdefault(refined[v], len(labels))
    n_agg = len(labels)

    new_adj: list[dict[int, float]] = [dict() for _ in range(n_agg)]
    new_self = [0.0] * n_agg
    for v in range(len(adj)):
        a = agg_of[refined[v]]
        new_self[a] += self_w[v]
        for u, w in adj[v].items():
            if u < v:
                continue
            b = agg_of[refined[u]]
            if a == b:
                new_self[a] += w
            else:
                new_adj[a][b] = new_adj[a].get(b, 0.0) + w
                new_adj[b][a] = new_adj[b].get(a, 0.0) + w

    # Seed the next level with the coarse communities found this level.
    init = [0] * n_agg
    for v in range(len(adj)):
        init[agg_of[refined[v]]] = comm[v]
    return new_adj, new_self, init, agg_of


def core_threshold(node_count: int, mean_degree: float, log_base: str = "e") -> int:
    """floor(log(|V|) * sqrt(mean degree)), clamped to at least 1."""
    if node_count < 2 or mean_degree <= 0:
        raise NotApplicableError("core threshold needs >= 2 nodes and at least one edge")
    log_fn = {"e": math.log, "10": math.log10, "2": math.log2}.get(log_base)
    if log_fn is None:
        raise ValidationError(f"unknown log base {log_base!r}")
    return max(1, math.floor(log_fn(node_count) * math.sqrt(mean_degree)))
