"""Balanced k-way graph partitioning (multilevel) and cluster coarsening.

Pipeline: heavy-edge matching shrinks the graph until it has at most 4m
nodes, greedy graph growing from m far-apart seeds produces an initial
partition, and boundary FM refinement runs at every level on the way back
up.  All randomness comes from one ``random.Random(seed)``.
"""
from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import CodeGraph


class DimensionError(ValueError):
    pass


@dataclass
class Partition:
    m: int
    assign: np.ndarray
    sizes: np.ndarray
    edge_cut: int
    seed: int

    def to_json(self) -> dict:
        return {"m": self.m, "assign": self.assign.tolist(), "edge_cut": self.edge_cut,
                "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict | str) -> "Partition":
        if isinstance(obj, str):
            obj = json.loads(obj)
        assign = np.asarray(obj["assign"], dtype=np.int64)
        m = int(obj["m"])
        return cls(m, assign, np.bincount(assign, minlength=m), int(obj["edge_cut"]),
                   int(obj["seed"]))


class _Graph:
    """Weighted undirected graph as adjacency dicts plus node weights."""

    __slots__ = ("adj", "vwgt")

    def __init__(self, adj: list[dict[int, int]], vwgt: list[int]):
        self.adj = adj
        self.vwgt = vwgt

    @property
    def n(self) -> int:
        return len(self.vwgt)

    @classmethod
    def from_edges(cls, n: int, edges) -> "_Graph":
        adj: list[dict[int, int]] = [dict() for _ in range(n)]
        for u, v in edges:
            if u == v:
                continue
            adj[u][v] = adj[u].get(v, 0) + 1
            adj[v][u] = adj[v].get(u, 0) + 1
        return cls(adj, [1] * n)


def balance_bound(n: int, m: int, epsilon: float = 0.1) -> int:
    # the tiny offset guards against float noise such as 1.1 * 10 / 1 = 11.000000000000002
    return max(1, math.ceil((1 + epsilon) * n / m - 1e-9))


def edge_cut(n: int, edges, assign) -> int:
    return sum(1 for u, v in edges if u != v and assign[u] != assign[v])


# -- coarsening ------------------------------------------------------------------------

def _match(g: _Graph, rng: random.Random, max_vwgt: int) -> tuple[list[int], int]:
    order = list(range(g.n))
    rng.shuffle(order)
    match = [-1] * g.n
    for u in order:
        if match[u] != -1:
            continue
        best, best_w = -1, 0
        for v, w in g.adj[u].items():
            if match[v] != -1 or g.vwgt[u] + g.vwgt[v] > max_vwgt:
                continue
            if w > best_w or (w == best_w and g.vwgt[v] < g.vwgt[best]):
                best, best_w = v, w
        match[u] = best if best != -1 else u
        if best != -1:
            match[best] = u
    cmap = [-1] * g.n
    nc = 0
    for u in range(g.n):
        if cmap[u] == -1:
            cmap[u] = nc
            cmap[match[u]] = nc
            nc += 1
    return cmap, nc


def _contract(g: _Graph, cmap: list[int], nc: int) -> _Graph:
    adj: list[dict[int, int]] = [dict() for _ in range(nc)]
    vwgt = [0] * nc
    for u in range(g.n):
        cu = cmap[u]
        vwgt[cu] += g.vwgt[u]
        row = adj[cu]
        for v, w in g.adj[u].items():
            cv = cmap[v]
            if cv != cu:
                row[cv] = row.get(cv, 0) + w
    return _Graph(adj, vwgt)


# -- initial partition -------------------------------------------------------------------

def _bfs_dist(g: _Graph, sources: list[int]) -> list[int]:
    dist = [-1] * g.n
    q = deque(sources)
    for s in sources:
        dist[s] = 0
    while q:
        u = q.popleft()
        for v in g.adj[u]:
            if dist[v] == -1:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _grow(g: _Graph, m: int, rng: random.Random) -> list[int]:
    # farthest-first seeds; unreachable nodes count as infinitely far
    seeds = [rng.randrange(g.n)]
    while len(seeds) < m:
        dist = _bfs_dist(g, seeds)
        taken = set(seeds)
        far = max((d if d != -1 else g.n + 1, -u) for u, d in enumerate(dist) if u not in taken)
        seeds.append(-far[1])
    part = [-1] * g.n
    weight = [0] * m
    conn: list[dict[int, int]] = [dict() for _ in range(m)]  # frontier node -> connectivity
    unassigned = g.n

    def take(u: int, c: int) -> None:
        nonlocal unassigned
        part[u] = c
        weight[c] += g.vwgt[u]
        unassigned -= 1
        for k in range(m):
            conn[k].pop(u, None)
        for v, w in g.adj[u].items():
            if part[v] == -1:
                conn[c][v] = conn[c].get(v, 0) + w

    for c, s in enumerate(seeds):
        take(s, c)
    while unassigned:
        c = min(range(m), key=lambda k: (weight[k], k))
        if conn[c]:
            u = max(conn[c].items(), key=lambda kv: (kv[1], -kv[0]))[0]
        else:
            u = next(i for i in range(g.n) if part[i] == -1)
        take(u, c)
    return part


# -- refinement ------------------------------------------------------------------------------

def _refine(g: _Graph, part: list[int], m: int, bound: int, max_passes: int = 8) -> None:
    """Boundary FM: move a node to the neighbouring cluster with the best
    strictly positive gain, or zero gain when that strictly improves balance,
    never exceeding ``bound`` or emptying a cluster."""
    weight = [0] * m
    count = [0] * m
    for u in range(g.n):
        weight[part[u]] += g.vwgt[u]
        count[part[u]] += 1
    for _ in range(max_passes):
        moved = False
        for u in range(g.n):
            a = part[u]
            if count[a] == 1:
                continue
            ext: dict[int, int] = {}
            internal = 0
            for v, w in g.adj[u].items():
                if part[v] == a:
                    internal += w
                else:
                    ext[part[v]] = ext.get(part[v], 0) + w
            if not ext:
                continue
            best, best_key = None, None
            for b, w in sorted(ext.items()):
                if weight[b] + g.vwgt[u] > bound:
                    continue
                gain = w - internal
                better_balance = weight[b] + g.vwgt[u] < weight[a]
                if gain > 0 or (gain == 0 and better_balance):
                    key = (gain, -weight[b])
                    if best_key is None or key > best_key:
                        best, best_key = b, key
            if best is not None:
                part[u] = best
                weight[a] -= g.vwgt[u]
                weight[best] += g.vwgt[u]
                count[a] -= 1
                count[best] += 1
                moved = True
        if not moved:
            break


def _rebalance(g: _Graph, part: list[int], m: int, bound: int) -> None:
    """Finest level only: force the size bound and non-empty clusters."""
    sizes = [0] * m
    for c in part:
        sizes[c] += 1

    def gain(u: int, b: int) -> int:
        return sum(w if part[v] == b else -w if part[v] == part[u] else 0
                   for v, w in g.adj[u].items())

    for c in range(m):
        if sizes[c] == 0:
            donor = max(range(m), key=lambda k: (sizes[k], -k))
            u = max((u for u in range(g.n) if part[u] == donor), key=lambda u: (gain(u, c), -u))
            part[u] = c
            sizes[donor] -= 1
            sizes[c] += 1
    while max(sizes) > bound:
        a = max(range(m), key=lambda k: (sizes[k], -k))
        targets = [b for b in range(m) if sizes[b] < bound]
        u, b = max(((u, b) for u in range(g.n) if part[u] == a for b in targets),
                   key=lambda ub: (gain(*ub), -sizes[ub[1]], -ub[0], -ub[1]))
        part[u] = b
        sizes[a] -= 1
        sizes[b] += 1


# -- public API ----------------------------------------------------------------------------

def partition_edges(n: int, edges, m: int, seed: int = 0, epsilon: float = 0.1) -> Partition:
    """Partition a graph given as ``n`` and an iterable of (u, v) pairs.
    Parallel edges accumulate weight; every edge weighs 1."""
    if n < 1:
        raise ValueError("cannot partition an empty graph")
    edges = [(int(u), int(v)) for u, v in edges]
    m = max(1, min(m, n))
    bound = balance_bound(n, m, epsilon)
    if m == 1:
        assign = np.zeros(n, dtype=np.int64)
        return Partition(1, assign, np.array([n]), 0, seed)
    rng = random.Random(seed)
    base = _Graph.from_edges(n, edges)
    levels = [base]
    maps: list[list[int]] = []
    max_vwgt = max(1, math.ceil(1.5 * n / m))
    while levels[-1].n > 4 * m:
        g = levels[-1]
        cmap, nc = _match(g, rng, max_vwgt)
        if nc > 0.95 * g.n or nc < m:
            break
        maps.append(cmap)
        levels.append(_contract(g, cmap, nc))
    coarse = levels[-1]
    part = _grow(coarse, m, rng)
    coarse_bound = max(bound, max(coarse.vwgt))
    _refine(coarse, part, m, coarse_bound)
    for level in range(len(maps) - 1, -1, -1):
        cmap = maps[level]
        g = levels[level]
        part = [part[cmap[u]] for u in range(g.n)]
        _refine(g, part, m, bound if level == 0 else coarse_bound)
    _rebalance(base, part, m, bound)
    _refine(base, part, m, bound)
    assign = np.asarray(part, dtype=np.int64)
    return Partition(m, assign, np.bincount(assign, minlength=m), edge_cut(n, edges, part), seed)


def partition(graph: CodeGraph, m: int = 8, seed: int = 0, epsilon: float = 0.1) -> Partition:
    return partition_edges(graph.n, graph.edges[:, :2].tolist(), m, seed, epsilon)


def assignment_matrix(p: Partition, sparse: bool = False):
    """n x m matrix with 1/|cluster| at (node, its cluster), else 0."""
    n = len(p.assign)
    vals = 1.0 / p.sizes[p.assign]
    if sparse:
        return sp.csr_matrix((vals, (np.arange(n), p.assign)), shape=(n, p.m))
    C = np.zeros((n, p.m))
    C[np.arange(n), p.assign] = vals
    return C


def coarsen(X: np.ndarray, A, C) -> tuple[np.ndarray, np.ndarray]:
    """Return (CᵀX, CᵀAC)."""
    n = C.shape[0]
    if X.shape[0] != n or A.shape != (n, n):
        raise DimensionError(f"X {X.shape}, A {A.shape} and C {C.shape} disagree")
    Xp = np.asarray(C.T @ X)
    Ap = C.T @ (A @ C)
    if sp.issparse(Ap):
        Ap = Ap.toarray()
    return Xp, np.asarray(Ap)


def adjacency(n: int, pairs: np.ndarray, sparse: bool = True):
    """Symmetric 0/1 adjacency from unordered pairs."""
    if len(pairs) == 0:
        A = sp.csr_matrix((n, n))
    else:
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        A.sum_duplicates()
        A.data[:] = 1.0
    return A if sparse else A.toarray()
