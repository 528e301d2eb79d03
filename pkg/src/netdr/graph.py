"""Simple undirected graphs and the network statistics the estimator needs.

Graphs are immutable and stored in compressed sparse row form (sorted
adjacency lists). Path distances are integers; unreachable pairs carry the
sentinel :data:`UNREACHABLE` instead of a float infinity so that distance
arrays stay integer typed.

The module also houses the two random graph generators used in the
experiments, the average-degree / average-path-length summary, and the
data-driven choice of the dependency bandwidth used by the network HAC
variance estimator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "UNREACHABLE",
    "Graph",
    "GraphStats",
    "ArcPlan",
    "generate_er",
    "generate_rgg",
    "rgg_from_positions",
    "bfs_distances",
    "k_neighborhood",
    "neighborhood_boundary",
    "induced_subgraph",
    "graph_stats",
    "avg_path_length",
    "hac_bandwidth",
    "ball_mask",
    "read_edge_list",
    "write_edge_list",
]

# Sentinel for "no path". Kept integer so distance arrays stay int64.
UNREACHABLE = np.iinfo(np.int64).max


class Graph:
    """Immutable simple undirected graph on units ``0..n-1``.

    Adjacency is stored CSR style: ``indices[indptr[i]:indptr[i+1]]`` is the
    sorted neighbor list of unit ``i``. Self loops and multi-edges are not
    representable; :meth:`from_edges` deduplicates and rejects loops.
    """

    __slots__ = ("n", "indptr", "indices", "_csr", "_arc_plan")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = indptr
        self.indices = indices
        self._csr = None
        self._arc_plan = None

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build a graph from an iterable of ``(i, j)`` pairs.

        Duplicate edges collapse; ``(i, j)`` and ``(j, i)`` are the same
        edge. Raises ``ValueError`` on self loops or out-of-range labels.
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        e = np.asarray(list(edges), dtype=np.int64)
        if e.size == 0:
            e = e.reshape(0, 2)
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValueError("edges must be pairs")
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self loops are not allowed")
        arcs = np.concatenate([e, e[:, ::-1]], axis=0)
        # sort by (source, target) and drop duplicates
        order = np.lexsort((arcs[:, 1], arcs[:, 0]))
        arcs = arcs[order]
        if arcs.shape[0]:
            keep = np.ones(arcs.shape[0], dtype=bool)
            keep[1:] = np.any(arcs[1:] != arcs[:-1], axis=1)
            arcs = arcs[keep]
        counts = np.bincount(arcs[:, 0], minlength=n).astype(np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(n, indptr, arcs[:, 1].copy())

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted neighbor labels of unit ``i`` (a read-only view)."""
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def edges(self) -> np.ndarray:
        """Undirected edge array of shape (m, 2) with ``i < j``, sorted."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < nb.size and nb[k] == j)

    # ------------------------------------------------------------------
    # cached derived structures
    # ------------------------------------------------------------------

    def csr(self) -> sp.csr_matrix:
        """Adjacency as a scipy CSR matrix of float64 (cached)."""
        if self._csr is None:
            data = np.ones(self.indices.size, dtype=np.float64)
            self._csr = sp.csr_matrix(
                (data, self.indices, self.indptr), shape=(self.n, self.n)
            )
        return self._csr

    def arc_plan(self) -> "ArcPlan":
        """Directed-arc layout for vectorized message passing (cached)."""
        if self._arc_plan is None:
            self._arc_plan = ArcPlan.from_graph(self)
        return self._arc_plan

    def __repr__(self) -> str:  # pragma: no cover
        return f"Graph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True)
class ArcPlan:
    """Arc arrays for message passing, grouped by receiving unit.

    ``src[k] -> dst[k]`` enumerates every directed arc; arcs are sorted by
    ``dst`` so per-receiver reductions are contiguous segments. ``starts``
    indexes segment beginnings for the non-isolated receivers listed in
    ``nonempty``. ``by_src_order`` re-sorts arcs by ``src`` and ``src_starts``
    plays the same role on that ordering, which gives the adjoint of a
    gather-by-src without scatter operations.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    counts: np.ndarray
    nonempty: np.ndarray
    starts: np.ndarray
    by_src_order: np.ndarray
    src_counts: np.ndarray
    src_nonempty: np.ndarray
    src_starts: np.ndarray

    @staticmethod
    def from_graph(g: Graph) -> "ArcPlan":
        counts = g.degrees.astype(np.int64)
        dst = np.repeat(np.arange(g.n, dtype=np.int64), counts)
        src = g.indices.astype(np.int64)
        nonempty = np.flatnonzero(counts > 0)
        starts = g.indptr[:-1][nonempty]
        by_src_order = np.lexsort((dst, src))
        src_counts = np.bincount(src, minlength=g.n).astype(np.int64)
        src_nonempty = np.flatnonzero(src_counts > 0)
        src_ptr = np.zeros(g.n + 1, dtype=np.int64)
        np.cumsum(src_counts, out=src_ptr[1:])
        src_starts = src_ptr[:-1][src_nonempty]
        return ArcPlan(
            n=g.n,
            src=src,
            dst=dst,
            counts=counts,
            nonempty=nonempty,
            starts=starts,
            by_src_order=by_src_order,
            src_counts=src_counts,
            src_nonempty=src_nonempty,
            src_starts=src_starts,
        )


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------


def generate_er(n: int, kappa: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi graph: each pair is an edge independently w.p. kappa/n.

    The stream discipline is fixed: row ``i`` consumes ``n - 1 - i`` uniforms
    for the pairs ``(i, i+1..n-1)`` in order, so a draw is reproducible from
    ``(n, kappa, stream)`` alone.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    p = kappa / n if n else 0.0
    if not 0.0 <= p <= 1.0:
        raise ValueError("kappa/n must lie in [0, 1]")
    chunks = []
    for i in range(n - 1):
        u = rng.random(n - 1 - i)
        hits = np.flatnonzero(u < p)
        if hits.size:
            e = np.empty((hits.size, 2), dtype=np.int64)
            e[:, 0] = i
            e[:, 1] = hits + i + 1
            chunks.append(e)
    edges = np.concatenate(chunks, axis=0) if chunks else np.empty((0, 2), np.int64)
    return Graph.from_edges(n, edges)


def rgg_from_positions(positions: np.ndarray, radius: float) -> Graph:
    """Random geometric graph given positions: edge iff Euclidean distance
    is at most ``radius``."""
    pos = np.asarray(positions, dtype=np.float64)
    n = pos.shape[0]
    r2 = radius * radius
    chunks = []
    block = 512
    for a in range(0, n, block):
        b = min(a + block, n)
        diff = pos[a:b, None, :] - pos[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.nonzero(d2 <= r2)
        ii = ii + a
        keep = ii < jj
        if keep.any():
            chunks.append(np.column_stack([ii[keep], jj[keep]]))
    edges = np.concatenate(chunks, axis=0) if chunks else np.empty((0, 2), np.int64)
    return Graph.from_edges(n, edges)


def generate_rgg(n: int, kappa: float, rng: np.random.Generator) -> Graph:
    """Random geometric graph on the unit square.

    Positions are iid uniform on [0,1]^2 and the connection radius is
    ``sqrt(kappa / (pi * n))``, which targets a limiting average degree of
    about kappa (boundary effects pull the realized value slightly below).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    positions = rng.random((n, 2))
    radius = math.sqrt(kappa / (math.pi * n)) if n else 0.0
    return rgg_from_positions(positions, radius)


# ----------------------------------------------------------------------
# distances and neighborhoods
# ----------------------------------------------------------------------


def bfs_distances(g: Graph, source: int, max_depth: int | None = None) -> np.ndarray:
    """Path distances from ``source`` to every unit.

    Returns an int64 array with ``UNREACHABLE`` where no path exists. With
    ``max_depth`` the search stops early and anything farther keeps the
    sentinel.
    """
    if not 0 <= source < g.n:
        raise ValueError("source out of range")
    dist = np.full(g.n, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    a = g.csr()
    frontier = np.zeros(g.n, dtype=np.float64)
    frontier[source] = 1.0
    visited = dist == 0
    d = 0
    while True:
        if max_depth is not None and d >= max_depth:
            break
        nxt = (a @ frontier) > 0
        nxt &= ~visited
        if not nxt.any():
            break
        d += 1
        dist[nxt] = d
        visited |= nxt
        frontier = nxt.astype(np.float64)
    return dist


def k_neighborhood(g: Graph, i: int, k: int) -> np.ndarray:
    """Sorted labels of units within path distance ``k`` of ``i`` (incl. i)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    dist = bfs_distances(g, i, max_depth=k)
    return np.flatnonzero(dist <= k)


def neighborhood_boundary(g: Graph, i: int, s: int) -> np.ndarray:
    """Sorted labels of units at path distance exactly ``s`` from ``i``."""
    if s < 0:
        raise ValueError("s must be non-negative")
    dist = bfs_distances(g, i, max_depth=s)
    return np.flatnonzero(dist == s)


def induced_subgraph(g: Graph, units) -> tuple[Graph, np.ndarray]:
    """Subgraph induced by ``units``, relabeled in increasing label order.

    Returns ``(subgraph, new_label)`` where ``new_label`` has length ``g.n``
    and maps every retained old label to its new one (-1 when dropped). New
    labels preserve the old ordering, so old ``units[k]`` (sorted) becomes
    ``k``.
    """
    members = np.unique(np.asarray(units, dtype=np.int64))
    if members.size and (members[0] < 0 or members[-1] >= g.n):
        raise ValueError("unit label out of range")
    new_label = np.full(g.n, -1, dtype=np.int64)
    new_label[members] = np.arange(members.size, dtype=np.int64)
    e = g.edges()
    if e.size:
        keep = (new_label[e[:, 0]] >= 0) & (new_label[e[:, 1]] >= 0)
        e = new_label[e[keep]]
    sub = Graph.from_edges(members.size, e)
    return sub, new_label


# ----------------------------------------------------------------------
# summary statistics
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GraphStats:
    """Summary used by the bandwidth rule and the experiment tables.

    ``avg_degree`` is (1/n) * sum_ij A_ij, i.e. the mean degree.
    ``avg_path_length`` averages path distance over ordered pairs of distinct
    units inside the largest connected component (NaN when that component has
    fewer than two units). Ties between equally large components break toward
    the one containing the smallest unit label.
    """

    n: int
    edge_count: int
    avg_degree: float
    degree_hist: np.ndarray
    component_sizes: tuple[int, ...]
    largest_component: np.ndarray = field(repr=False)
    avg_path_length: float


def _components(g: Graph) -> list[np.ndarray]:
    """Connected components as arrays of members, by smallest member."""
    seen = np.zeros(g.n, dtype=bool)
    comps = []
    a = g.csr()
    for start in range(g.n):
        if seen[start]:
            continue
        frontier = np.zeros(g.n, dtype=np.float64)
        frontier[start] = 1.0
        member = np.zeros(g.n, dtype=bool)
        member[start] = True
        while True:
            nxt = (a @ frontier) > 0
            nxt &= ~member
            if not nxt.any():
                break
            member |= nxt
            frontier = nxt.astype(np.float64)
        seen |= member
        comps.append(np.flatnonzero(member))
    return comps


def _pair_distance_sum(g: Graph, members: np.ndarray, block: int = 128):
    """Sum of path distances over ordered pairs of distinct ``members``.

    Level-synchronized BFS run from all members at once in column blocks;
    per level the newly reached count contributes level * count.
    """
    a = g.csr()
    total = 0
    reached_pairs = 0
    for s in range(0, members.size, block):
        cols = members[s:s + block]
        visited = np.zeros((g.n, cols.size), dtype=bool)
        visited[cols, np.arange(cols.size)] = True
        frontier = visited.astype(np.float64)
        level = 0
        while True:
            nxt = (a @ frontier) > 0
            nxt &= ~visited
            hits = int(nxt.sum())
            if hits == 0:
                break
            level += 1
            total += level * hits
            reached_pairs += hits
            visited |= nxt
            frontier = nxt.astype(np.float64)
    return total, reached_pairs


def avg_path_length(g: Graph) -> float:
    """Average path distance over ordered pairs in the largest component."""
    return graph_stats(g).avg_path_length


def graph_stats(g: Graph) -> GraphStats:
    degs = g.degrees
    comps = _components(g)
    sizes = [c.size for c in comps]
    if comps:
        best = max(range(len(comps)), key=lambda k: (sizes[k], -int(comps[k][0])))
        largest = comps[best]
    else:
        largest = np.empty(0, dtype=np.int64)
    if largest.size >= 2:
        total, pairs = _pair_distance_sum(g, largest)
        # within one component every ordered pair is reachable
        assert pairs == largest.size * (largest.size - 1)
        apl = total / pairs
    else:
        apl = float("nan")
    return GraphStats(
        n=g.n,
        edge_count=g.num_edges,
        avg_degree=float(degs.mean()) if g.n else 0.0,
        degree_hist=np.bincount(degs) if g.n else np.zeros(0, dtype=np.int64),
        component_sizes=tuple(sorted(sizes, reverse=True)),
        largest_component=largest,
        avg_path_length=apl,
    )


def hac_bandwidth(g: Graph, stats: GraphStats | None = None) -> int:
    """Data-driven dependency radius for the network HAC variance.

    With L the average path length of the largest component and d the average
    degree, the rule takes L/4 in the dense regime (L below 2 log n / log d)
    and L^(1/4) otherwise, rounded up to an integer. Requires average degree
    above 1 and a largest component with at least two units.
    """
    if stats is None:
        stats = graph_stats(g)
    if stats.avg_degree <= 1.0:
        raise ValueError(
            "bandwidth rule needs average degree > 1 "
            f"(got {stats.avg_degree:.4f})"
        )
    if stats.largest_component.size < 2:
        raise ValueError("bandwidth rule needs a component with >= 2 units")
    length = stats.avg_path_length
    threshold = 2.0 * math.log(g.n) / math.log(stats.avg_degree)
    raw = length / 4.0 if length < threshold else length ** 0.25
    return int(math.ceil(raw))


def ball_mask(g: Graph, radius: int, block: int = 256) -> sp.csr_matrix:
    """Boolean CSR mask of pairs within path distance ``radius``.

    Row i marks every j with distance(i, j) <= radius, self included. Used by
    the HAC variance sum; radius 0 is the identity.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return sp.identity(g.n, dtype=bool, format="csr")
    a = g.csr()
    rows = []
    for s in range(0, g.n, block):
        cols = np.arange(s, min(s + block, g.n))
        visited = np.zeros((g.n, cols.size), dtype=bool)
        visited[cols, np.arange(cols.size)] = True
        frontier = visited.astype(np.float64)
        for _ in range(radius):
            nxt = (a @ frontier) > 0
            nxt &= ~visited
            if not nxt.any():
                break
            visited |= nxt
            frontier = nxt.astype(np.float64)
        rows.append(sp.csr_matrix(visited.T))
    return sp.vstack(rows, format="csr")


# ----------------------------------------------------------------------
# edge list I/O
# ----------------------------------------------------------------------


def read_edge_list(path, n: int | None = None) -> Graph:
    """Read a graph from a text file of 0-indexed ``i j`` lines.

    Blank lines and lines starting with ``#`` are skipped. Unless given, the
    number of units is the largest label plus one.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise ValueError(f"malformed edge line: {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = 1 + max((max(i, j) for i, j in pairs), default=-1)
    return Graph.from_edges(n, pairs)


def write_edge_list(g: Graph, path) -> None:
    """Write the graph as sorted ``i j`` lines (each edge once, i < j)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")
