"""Undirected graphs and the index machinery for constrained scatter.

Vertices are labeled 1..p externally (file formats, reported edges);
internal adjacency computations are 0-based.  A graph splits the lower
triangle (diagonal included) of a p x p matrix into

* ``K``: diagonal plus sub-diagonal edge positions, and
* ``D``: sub-diagonal non-edge positions,

which drive all selection/embedding operators used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linops import PositionSet, duplication_matrix, lower_triangle_positions, selection_matrix

__all__ = [
    "Graph",
    "GraphIndex",
    "build_index",
    "embed",
    "is_chordal",
    "maximal_cliques",
    "read_graph",
    "parse_graph",
    "write_graph",
    "format_graph",
]


@dataclass(frozen=True)
class Graph:
    """Undirected graph on vertices 1..p without self-loops.

    Edges are stored once each as (a, b) with a < b.
    """

    p: int
    edges: frozenset

    def __post_init__(self):
        if self.p < 1:
            raise DimensionError("graph needs at least one vertex")
        for e in self.edges:
            a, b = e
            if not (1 <= a < b <= self.p):
                raise DimensionError(f"invalid edge {e} for p={self.p}")

    @classmethod
    def from_edges(cls, p: int, edges) -> "Graph":
        norm = frozenset((min(i, j), max(i, j)) for i, j in edges)
        for i, j in norm:
            if i == j:
                raise DimensionError(f"self-loop at vertex {i}")
        return cls(p, norm)

    @classmethod
    def complete(cls, p: int) -> "Graph":
        return cls(p, frozenset((i, j) for i in range(1, p + 1) for j in range(i + 1, p + 1)))

    @classmethod
    def empty(cls, p: int) -> "Graph":
        return cls(p, frozenset())

    @classmethod
    def cycle(cls, p: int) -> "Graph":
        """The chordless p-cycle 1-2-...-p-1."""
        if p < 3:
            raise DimensionError("a cycle needs at least 3 vertices")
        edges = [(i, i + 1) for i in range(1, p)] + [(1, p)]
        return cls.from_edges(p, edges)

    @property
    def m(self) -> int:
        return self.p * (self.p + 1) // 2

    @property
    def q(self) -> int:
        """Number of absent edges."""
        return self.p * (self.p - 1) // 2 - len(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, v: int) -> set:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}

    def without_edge(self, i: int, j: int) -> "Graph":
        e = (min(i, j), max(i, j))
        if e not in self.edges:
            raise DimensionError(f"edge {e} not present")
        return Graph(self.p, self.edges - {e})

    def with_edge(self, i: int, j: int) -> "Graph":
        return Graph.from_edges(self.p, set(self.edges) | {(i, j)})

    def is_subgraph_of(self, other: "Graph") -> bool:
        return self.p == other.p and self.edges <= other.edges

    def sorted_edges(self) -> list:
        return sorted(self.edges)


@dataclass(frozen=True, eq=False)
class GraphIndex:
    """Graph plus the dense selection/embedding operators derived from it.

    ``Pt`` stacks ``Qt_K`` over ``Qt_D`` and is an orthogonal m x m
    permutation, so extraction and embedding round-trip exactly.
    Identity comparison only (the array fields make value equality
    ill-defined).
    """

    graph: Graph
    D: PositionSet
    K: PositionSet
    Q_D: np.ndarray
    Q_K: np.ndarray
    Qt_D: np.ndarray
    Qt_K: np.ndarray
    Pt: np.ndarray
    cliques: tuple
    k_mask: np.ndarray = field(repr=False)
    d_mask: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.graph.p

    @property
    def q(self) -> int:
        return self.graph.q

    @property
    def m(self) -> int:
        return self.graph.m


def build_index(G: Graph) -> GraphIndex:
    """Split the lower triangle into D(G)/K(G) and materialize operators."""
    p = G.p
    d_pos, k_pos = [], []
    for (i, j) in lower_triangle_positions(p).positions:
        if i == j or G.has_edge(i, j):
            k_pos.append((i, j))
        else:
            d_pos.append((i, j))
    D = PositionSet(p, tuple(d_pos))
    K = PositionSet(p, tuple(k_pos))
    Q_D = selection_matrix(D)
    Q_K = selection_matrix(K)
    Dp, _ = duplication_matrix(p)
    Qt_D = Q_D @ Dp
    Qt_K = Q_K @ Dp
    Pt = np.vstack([Qt_K, Qt_D])

    k_mask = np.eye(p, dtype=bool)
    d_mask = np.zeros((p, p), dtype=bool)
    for a, b in G.edges:
        k_mask[a - 1, b - 1] = k_mask[b - 1, a - 1] = True
    for (i, j) in d_pos:
        d_mask[i - 1, j - 1] = d_mask[j - 1, i - 1] = True

    cliques = tuple(tuple(c) for c in maximal_cliques(G))
    return GraphIndex(G, D, K, Q_D, Q_K, Qt_D, Qt_K, Pt, cliques, k_mask, d_mask)


def embed(a, b, index: GraphIndex) -> np.ndarray:
    """Fill an m-vector with free entries ``a`` on K(G) and ``b`` on D(G).

    Inverse of extraction: Qt_K @ embed(a, b) == a and
    Qt_D @ embed(a, b) == b.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (len(index.K),) or b.shape != (len(index.D),):
        raise DimensionError(
            f"expected lengths {len(index.K)} and {len(index.D)}, got {a.shape} and {b.shape}"
        )
    return index.Pt.T @ np.concatenate([a, b])


def is_chordal(G: Graph) -> bool:
    """Maximum-cardinality search with perfect-elimination verification.

    True iff every cycle of length > 3 has a chord.
    """
    p = G.p
    adj = [set() for _ in range(p)]
    for a, b in G.edges:
        adj[a - 1].add(b - 1)
        adj[b - 1].add(a - 1)

    visited = []
    in_order = [False] * p
    weight = [0] * p
    for _ in range(p):
        v = max((u for u in range(p) if not in_order[u]), key=lambda u: (weight[u], -u))
        in_order[v] = True
        visited.append(v)
        for w in adj[v]:
            if not in_order[w]:
                weight[w] += 1

    # Reverse MCS order is a perfect elimination ordering iff each vertex's
    # earlier-visited neighborhood is a clique.
    pos = {v: k for k, v in enumerate(visited)}
    for k, v in enumerate(visited):
        earlier = [w for w in adj[v] if pos[w] < k]
        for a_i in range(len(earlier)):
            for b_i in range(a_i + 1, len(earlier)):
                if earlier[b_i] not in adj[earlier[a_i]]:
                    return False
    return True


def maximal_cliques(G: Graph) -> list:
    """All maximal cliques (Bron-Kerbosch with pivoting), 1-based labels.

    Exact enumeration; exponential in the worst case, which is fine for
    the sparse graphs at the dimensions this package targets.  Isolated
    vertices appear as singleton cliques.
    """
    adj = {v: set() for v in range(1, G.p + 1)}
    for a, b in G.edges:
        adj[a].add(b)
        adj[b].add(a)

    out = []

    def expand(R, P, X):
        if not P and not X:
            out.append(tuple(sorted(R)))
            return
        pivot = max(P | X, key=lambda u: len(P & adj[u]))
        for v in sorted(P - adj[pivot]):
            expand(R | {v}, P & adj[v], X & adj[v])
            P = P - {v}
            X = X | {v}

    expand(set(), set(adj), set())
    return sorted(out)


def parse_graph(text: str) -> Graph:
    """Parse the plain-text graph format.

    First non-comment line is ``p <integer>``; every following line is an
    edge ``i j`` (1-based).  ``#`` starts a comment; blank lines are
    skipped.
    """
    p = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if p is None:
            if len(parts) != 2 or parts[0] != "p":
                raise DimensionError(f"line {lineno}: expected 'p <integer>', got {raw!r}")
            p = int(parts[1])
            continue
        if len(parts) != 2:
            raise DimensionError(f"line {lineno}: expected 'i j', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if p is None:
        raise DimensionError("graph file has no 'p <integer>' line")
    return Graph.from_edges(p, edges)


def read_graph(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph(fh.read())


def format_graph(G: Graph) -> str:
    lines = [f"p {G.p}"] + [f"{a} {b}" for a, b in G.sorted_edges()]
    return "\n".join(lines) + "\n"


def write_graph(G: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(G))
