import itertools

import numpy as np
import pytest

from egm.errors import DimensionError
from egm.graphs import (
    Graph,
    build_index,
    embed,
    format_graph,
    is_chordal,
    maximal_cliques,
    parse_graph,
    read_graph,
    write_graph,
)
from egm.linops import lower_triangle_positions

from _oracles import random_graph

rng = np.random.default_rng(55)


class TestGraphBasics:
    def test_normalizes_edges(self):
        G = Graph.from_edges(4, [(2, 1), (3, 4)])
        assert G.edges == frozenset({(1, 2), (3, 4)})
        assert G.q == 4

    def test_rejects_self_loop(self):
        with pytest.raises(DimensionError):
            Graph.from_edges(3, [(2, 2)])

    def test_rejects_out_of_range(self):
        with pytest.raises(DimensionError):
            Graph.from_edges(3, [(1, 4)])

    def test_cycle_counts(self):
        G = Graph.cycle(7)
        assert len(G.edges) == 7
        assert G.q == 21 - 7 == 14


class TestBuildIndex:
    def test_complete_p3(self):
        idx = build_index(Graph.complete(3))
        assert len(idx.D) == 0
        assert len(idx.K) == 6

    def test_cycle4_positions(self):
        idx = build_index(Graph.cycle(4))
        assert idx.D.positions == ((3, 1), (4, 2))
        assert idx.q == 2

    def test_cycle7_q(self):
        idx = build_index(Graph.cycle(7))
        assert len(idx.D) == idx.q == 14

    def test_partition_small_p(self):
        # exhaustive over all graphs for p <= 5, random for p in {6, 7}
        for p in (2, 3, 4, 5):
            pairs = [(i, j) for i in range(1, p + 1) for j in range(i + 1, p + 1)]
            for bits in range(2 ** len(pairs)):
                G = Graph.from_edges(p, [e for k, e in enumerate(pairs) if bits >> k & 1])
                idx = build_index(G)
                union = set(idx.D.positions) | set(idx.K.positions)
                assert union == set(lower_triangle_positions(p).positions)
                assert len(idx.D) == G.q
                assert len(idx.K) == G.m - G.q
        for p in (6, 7):
            for _ in range(25):
                G = random_graph(p, rng)
                idx = build_index(G)
                union = set(idx.D.positions) | set(idx.K.positions)
                assert union == set(lower_triangle_positions(p).positions)
                assert len(idx.D) == G.q

    def test_single_vertex_graph(self):
        idx = build_index(Graph.empty(1))
        assert idx.m == 1 and idx.q == 0
        assert idx.K.positions == ((1, 1),)
        assert idx.cliques == ((1,),)

    def test_pt_orthogonal(self):
        for G in (Graph.cycle(5), Graph.complete(4), random_graph(6, rng)):
            idx = build_index(G)
            assert np.allclose(idx.Pt.T @ idx.Pt, np.eye(idx.m), atol=1e-15)


class TestEmbed:
    def test_round_trip_cycle4(self):
        idx = build_index(Graph.cycle(4))
        x = rng.standard_normal(idx.m)
        a = idx.Qt_K @ x
        b = idx.Qt_D @ x
        assert np.allclose(embed(a, b, idx), x, atol=1e-15)

    def test_complete_graph_permutation(self):
        idx = build_index(Graph.complete(3))
        a = rng.standard_normal(idx.m)
        out = embed(a, np.zeros(0), idx)
        assert np.allclose(np.sort(out), np.sort(a), atol=1e-15)
        assert np.allclose(idx.Qt_K @ out, a, atol=1e-15)

    def test_zero(self):
        idx = build_index(Graph.cycle(5))
        assert np.array_equal(embed(np.zeros(len(idx.K)), np.zeros(len(idx.D)), idx),
                              np.zeros(idx.m))

    def test_length_mismatch(self):
        idx = build_index(Graph.cycle(4))
        with pytest.raises(DimensionError):
            embed(np.zeros(3), np.zeros(1), idx)


def _chordal_oracle(p, edge_set):
    """A graph is chordal iff no vertex subset of size >= 4 induces a cycle."""
    adj = {v: set() for v in range(1, p + 1)}
    for a, b in edge_set:
        adj[a].add(b)
        adj[b].add(a)
    for size in range(4, p + 1):
        for C in itertools.combinations(range(1, p + 1), size):
            Cs = set(C)
            degs = [len(adj[v] & Cs) for v in C]
            if any(d != 2 for d in degs):
                continue
            # all induced degrees are 2; connected <=> a single cycle
            seen = {C[0]}
            stack = [C[0]]
            while stack:
                v = stack.pop()
                for w in adj[v] & Cs:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            if len(seen) == size:
                return False
    return True


class TestChordality:
    def test_trivial_cases(self):
        assert is_chordal(Graph.complete(5))
        assert not is_chordal(Graph.cycle(4))
        assert is_chordal(Graph.cycle(3))
        assert is_chordal(Graph.empty(4))

    @pytest.mark.parametrize("p", [2, 3, 4, 5])
    def test_against_oracle_exhaustive(self, p):
        pairs = [(i, j) for i in range(1, p + 1) for j in range(i + 1, p + 1)]
        for bits in range(2 ** len(pairs)):
            edges = [e for k, e in enumerate(pairs) if bits >> k & 1]
            G = Graph.from_edges(p, edges)
            assert is_chordal(G) == _chordal_oracle(p, G.edges), f"p={p} edges={edges}"

    def test_against_oracle_p6_exhaustive(self):
        p = 6
        pairs = [(i, j) for i in range(1, p + 1) for j in range(i + 1, p + 1)]
        for bits in range(2 ** len(pairs)):
            edges = frozenset(e for k, e in enumerate(pairs) if bits >> k & 1)
            G = Graph(p, edges)
            assert is_chordal(G) == _chordal_oracle(p, edges)


class TestMaximalCliques:
    def test_cycle_gives_edges(self):
        for p in (4, 5, 7):
            cl = maximal_cliques(Graph.cycle(p))
            assert sorted(cl) == sorted(tuple(e) for e in Graph.cycle(p).edges)

    def test_complete(self):
        assert maximal_cliques(Graph.complete(5)) == [tuple(range(1, 6))]

    def test_path(self):
        G = Graph.from_edges(3, [(1, 2), (2, 3)])
        assert maximal_cliques(G) == [(1, 2), (2, 3)]

    def test_isolated_vertices_are_singletons(self):
        G = Graph.from_edges(4, [(1, 2)])
        assert maximal_cliques(G) == [(1, 2), (3,), (4,)]

    def test_no_subset_and_edge_coverage(self):
        for _ in range(30):
            G = random_graph(int(rng.integers(2, 8)), rng)
            cliques = [set(c) for c in maximal_cliques(G)]
            for a in cliques:
                for b in cliques:
                    assert a == b or not a < b
            covered = {(min(i, j), max(i, j))
                       for c in cliques for i in c for j in c if i != j}
            assert covered >= G.edges
            for c in cliques:
                for i in c:
                    for j in c:
                        assert i == j or G.has_edge(i, j)


class TestGraphFiles:
    def test_parse(self):
        text = "# a comment\np 4\n1 2\n2 3  # trailing comment\n\n3 4\n"
        G = parse_graph(text)
        assert G.p == 4
        assert G.edges == frozenset({(1, 2), (2, 3), (3, 4)})

    def test_round_trip(self, tmp_path):
        G = Graph.cycle(5)
        path = tmp_path / "cycle.g"
        write_graph(G, path)
        assert read_graph(path) == G

    def test_missing_header(self):
        with pytest.raises(DimensionError):
            parse_graph("1 2\n")

    def test_bad_edge_line(self):
        with pytest.raises(DimensionError):
            parse_graph("p 3\n1 2 3\n")

    def test_format_sorted(self):
        G = Graph.from_edges(3, [(2, 3), (1, 2)])
        assert format_graph(G) == "p 3\n1 2\n2 3\n"
