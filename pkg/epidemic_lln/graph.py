"""
Erdős–Rényi graphs G(n, p) stored as sorted neighbour arrays, together with
the cross-edge count alpha(C, D) and a sampled proxy for beta(c, d, n).
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from epidemic_lln.exceptions import ConfigError, DomainError, PreconditionError

logger = logging.getLogger(__name__)

# Above this many vertices edges are placed by geometric skips instead of
# one Bernoulli draw per pair
BERNOULLI_MAX_N = 20_000
_SKIP_CHUNK = 1 << 20

VertexSet = Union[Iterable[int], np.ndarray]


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Undirected simple graph on vertices 0..n-1.

    ``indices[indptr[i]:indptr[i + 1]]`` holds the neighbours of ``i`` in
    increasing order. ``p`` is the edge probability the graph was drawn
    with (1.0 for the all-edges fixture, None when unknown).
    """
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    p: Optional[float] = None

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return int(self.indices.shape[0] // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def adjacency(self) -> List[np.ndarray]:
        return [self.neighbors(i) for i in range(self.n)]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        nbrs = self.neighbors(i)
        k = int(np.searchsorted(nbrs, j))
        return k < nbrs.shape[0] and int(nbrs[k]) == j

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Every edge once, as (u, v) arrays with u < v in lexicographic order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = src < self.indices
        return src[mask], self.indices[mask]

    def gather(self, vertices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        All (vertex, neighbour) pairs for the given vertices, vectorised.

        Returns:
            src, dst arrays of equal length
        """
        vertices = np.asarray(vertices, dtype=np.int64)
        starts = self.indptr[vertices]
        counts = self.indptr[vertices + 1] - starts
        total = int(counts.sum())
        if total == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        src = np.repeat(vertices, counts)
        offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
        dst = self.indices[np.repeat(starts, counts) + offsets]
        return src, dst


def _from_pairs(n: int, u: np.ndarray, v: np.ndarray, p: Optional[float]) -> Graph:
    src = np.concatenate([u, v]).astype(np.int64)
    dst = np.concatenate([v, u]).astype(np.int64)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return Graph(n=n, indptr=indptr, indices=dst, p=p)


def from_edges(n: int, edges: Iterable[Tuple[int, int]], p: Optional[float] = None) -> Graph:
    """
    Build a graph from an explicit edge list.

    Raises:
        PreconditionError: self-loops, duplicate edges or ids outside 0..n-1
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise PreconditionError(f"edge endpoints must lie in 0..{n - 1}")
    u = np.minimum(pairs[:, 0], pairs[:, 1])
    v = np.maximum(pairs[:, 0], pairs[:, 1])
    if np.any(u == v):
        raise PreconditionError("self-loops are not allowed")
    if np.unique(u * n + v).shape[0] != u.shape[0]:
        raise PreconditionError("duplicate edges are not allowed")
    return _from_pairs(n, u, v, p)


def complete_graph(n: int) -> Graph:
    """All-edges fixture: every pair adjacent, p recorded as 1."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    u, v = np.triu_indices(n, k=1)
    return _from_pairs(n, u, v, 1.0)


def _bernoulli_pairs(n: int, p: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    us, vs = [], []
    for i in range(n - 1):
        hits = np.flatnonzero(rng.random(n - i - 1) < p)
        if hits.size:
            us.append(np.full(hits.size, i, dtype=np.int64))
            vs.append(hits + i + 1)
    if not us:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(us), np.concatenate(vs)


def _skip_pairs(n: int, p: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    # Pairs (i, j), i < j, enumerated row by row; gaps between present
    # pairs are geometric(p)
    total = n * (n - 1) // 2
    positions = []
    last = -1
    while True:
        gaps = rng.geometric(p, size=_SKIP_CHUNK)
        chunk = last + np.cumsum(gaps, dtype=np.int64)
        if chunk[-1] >= total:
            positions.append(chunk[chunk < total])
            break
        positions.append(chunk)
        last = int(chunk[-1])
    idx = np.concatenate(positions)
    rows = np.arange(n, dtype=np.int64)
    row_start = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(row_start, idx, side="right") - 1
    j = idx - row_start[i] + i + 1
    return i.astype(np.int64), j.astype(np.int64)


def generate_er(n: int, p: float, seed: int, method: str = "auto") -> Graph:
    """
    Sample G(n, p): each of the n(n-1)/2 pairs is an edge independently
    with probability p. Identical seeds give identical graphs.

    Args:
        n: Number of vertices (>= 1)
        p: Edge probability, strictly inside (0, 1)
        seed: Seed for numpy's default generator
        method: "bernoulli", "skip" or "auto" (bernoulli up to 20000 vertices)

    Raises:
        DomainError: p outside (0, 1)
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie strictly in (0,1), got {p}")
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if method == "auto":
        method = "bernoulli" if n <= BERNOULLI_MAX_N else "skip"
    rng = np.random.default_rng(seed)
    if method == "bernoulli":
        u, v = _bernoulli_pairs(n, p, rng)
    elif method == "skip":
        u, v = _skip_pairs(n, p, rng)
    else:
        raise ValueError(f"Unknown sampling method: {method}")
    graph = _from_pairs(n, u, v, p)
    logger.debug(f"G({n}, {p}) via {method}: {graph.edge_count} edges")
    return graph


def _as_vertex_array(g: Graph, vertices: VertexSet) -> np.ndarray:
    arr = np.unique(np.fromiter(vertices, dtype=np.int64) if not isinstance(vertices, np.ndarray)
                    else vertices.astype(np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= g.n):
        raise PreconditionError(f"vertex ids must lie in 0..{g.n - 1}")
    return arr


def _count_cross(g: Graph, c: np.ndarray, d: np.ndarray) -> int:
    if c.size == 0 or d.size == 0:
        return 0
    in_d = np.zeros(g.n, dtype=bool)
    in_d[d] = True
    _, dst = g.gather(c)
    return int(np.count_nonzero(in_d[dst]))


def cross_edges(g: Graph, C: VertexSet, D: VertexSet) -> int:
    """
    alpha(C, D): number of edges with one endpoint in C and the other in D.

    Raises:
        PreconditionError: C and D overlap
    """
    c = _as_vertex_array(g, C)
    d = _as_vertex_array(g, D)
    if np.intersect1d(c, d).size:
        raise PreconditionError("C and D must be disjoint")
    return _count_cross(g, c, d)


def subset_size(fraction: float, n: int) -> int:
    """ceil(fraction * n), ignoring floating-point noise in the product."""
    return int(math.ceil(round(fraction * n, 9)))


def estimate_beta(g: Graph, c: float, d: float, trials: int, seed: int,
                  p: Optional[float] = None) -> float:
    """
    Sampled lower bound for beta(c, d, n).

    Draws ``trials`` random disjoint pairs (C, D) with |C| = ceil(cn) and
    |D| = ceil(dn) and returns the largest |alpha(C, D) - |C||D|p|. A fixed
    seed gives a fixed stream of pairs, so the estimate never decreases as
    ``trials`` grows.

    Raises:
        PreconditionError: ceil(cn) + ceil(dn) > n, or p unknown
    """
    if not (0.0 < c <= 1.0 and 0.0 < d <= 1.0):
        raise DomainError("c and d must lie in (0,1]")
    if trials < 0:
        raise PreconditionError("trials must be >= 0")
    a, b = subset_size(c, g.n), subset_size(d, g.n)
    if a + b > g.n:
        raise PreconditionError(f"|C| + |D| = {a + b} exceeds n = {g.n}")
    p = g.p if p is None else p
    if p is None:
        raise PreconditionError("edge probability is unknown for this graph; pass p")

    rng = np.random.default_rng(seed)
    mean = a * b * p
    best = 0.0
    for _ in range(trials):
        perm = rng.permutation(g.n)
        deviation = abs(_count_cross(g, perm[:a], perm[a:a + b]) - mean)
        best = max(best, deviation)
    return float(best)


def dump_edgelist(g: Graph, path: str) -> None:
    """Write the header 'n m' followed by one 'i j' line per edge, i < j."""
    u, v = g.edges()
    with open(path, "w") as f:
        f.write(f"{g.n} {g.edge_count}\n")
        for i, j in zip(u.tolist(), v.tolist()):
            f.write(f"{i} {j}\n")


def load_edgelist(path: str, p: Optional[float] = None) -> Graph:
    """Read a graph written by dump_edgelist."""
    if not os.path.exists(path):
        raise ConfigError("edge-list file not found", path=path)
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ConfigError("missing 'n m' header", path=path, line=1)
    try:
        n, m = (int(tok) for tok in lines[0].split())
    except ValueError as e:
        raise ConfigError(f"malformed header '{lines[0]}'", path=path, line=1) from e

    edges = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"expected 'i j', got '{line}'", path=path, line=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise ConfigError(f"expected integer ids, got '{line}'", path=path, line=lineno) from e
        if not 0 <= i < j < n:
            raise ConfigError(f"edge ({i}, {j}) violates 0 <= i < j < {n}", path=path, line=lineno)
        edges.append((i, j))
    if len(edges) != m:
        raise ConfigError(f"header announces {m} edges, found {len(edges)}", path=path, line=1)
    try:
        return from_edges(n, edges, p)
    except PreconditionError as e:
        raise ConfigError(str(e), path=path) from e
