"""Immutable undirected graphs stored in CSR form."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidNode


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph.

    Every undirected edge is stored twice (once per direction), rows are
    sorted, and there are no self-loops or duplicates. The arrays are
    made read-only on construction.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    num_undirected_edges: int

    def __post_init__(self):
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def num_directed_edges(self) -> int:
        return int(self.col_indices.shape[0])

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edge_sources(self) -> np.ndarray:
        """Source node of every stored directed edge, aligned with col_indices."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)

    def directed_edges(self) -> np.ndarray:
        return np.column_stack([self.edge_sources(), self.col_indices])

    def undirected_edges(self) -> np.ndarray:
        e = self.directed_edges()
        return e[e[:, 0] < e[:, 1]]

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(self.num_directed_edges, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )


def build_graph(num_nodes: int, edges) -> Graph:
    """Build a graph from an edge list given once or twice per undirected edge.

    Self-loops are dropped and duplicates merged.
    """
    num_nodes = int(num_nodes)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size:
        bad = (e < 0) | (e >= num_nodes)
        if bad.any():
            raise InvalidNode(int(e[bad][0]))
    e = e[e[:, 0] != e[:, 1]]
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    # unique unordered pairs via a single int64 key
    keys = np.unique(lo * num_nodes + hi)
    lo, hi = keys // max(num_nodes, 1), keys % max(num_nodes, 1)
    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])
    return Graph(num_nodes, offsets, dst.astype(np.int64), int(keys.shape[0]))


def neighbors(g: Graph, i: int) -> np.ndarray:
    return g.neighbors(i)


def ego_nodes(g: Graph, i: int, hops: int) -> np.ndarray:
    """Sorted ids of nodes within ``hops`` BFS steps of ``i`` (including ``i``)."""
    if not 0 <= i < g.num_nodes:
        raise InvalidNode(i)
    dist = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if dist[u] == hops:
            continue
        for v in g.neighbors(u):
            v = int(v)
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return np.array(sorted(dist), dtype=np.int64)


def ego_edges(g: Graph, i: int, hops: int) -> np.ndarray:
    """Directed edges of ``g`` whose endpoints both lie within ``hops`` of ``i``.

    Returned as an ``(m, 2)`` int array sorted by (source, target).
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    inside = np.zeros(g.num_nodes, dtype=bool)
    inside[ego_nodes(g, i, hops)] = True
    src = g.edge_sources()
    keep = inside[src] & inside[g.col_indices]
    return np.column_stack([src[keep], g.col_indices[keep]])
