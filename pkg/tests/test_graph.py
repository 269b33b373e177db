import pytest
from hypothesis import given, settings, strategies as st

from popmaj import graph as G


def test_clique_small():
    assert set(G.clique(2).arcs) == {(0, 1), (1, 0)}
    assert G.clique(4).num_arcs == 12
    g = G.clique(10)
    assert g.num_arcs == 90 and g.symmetric_arcs


def test_line():
    assert set(G.line(2).arcs) == {(0, 1), (1, 0)}
    assert G.line(5).num_arcs == 8
    assert G.connectivity(G.line(3)) == (True, True)


def test_lollipop_modes():
    assert G.lollipop(3, 2).num_arcs == 10
    g = G.lollipop(3, 2, "directed-u-to-v")
    assert g.num_arcs == 9 and not g.symmetric_arcs
    assert (3, 2) in g.arc_set and (2, 3) not in g.arc_set
    assert G.lollipop(3, 2, "directed-v-to-u").arc_set >= {(2, 3)}
    path = G.lollipop(2, 1)
    assert path.arc_set == {(0, 1), (1, 0), (1, 2), (2, 1)}


def test_two_cliques_and_feeder():
    assert G.two_cliques_bridged(2, 2).num_arcs == 6
    g = G.two_cliques_bridged(3, 3)
    assert g.num_arcs == 14 and {(2, 3), (3, 2)} <= g.arc_set
    assert G.connectivity(g) == (True, True)
    f = G.clique_with_feeder(2)
    assert set(f.arcs) == {(0, 1), (1, 0), (2, 0)}
    f4 = G.clique_with_feeder(4)
    assert f4.num_arcs == 13 and f4.in_degree(4) == 0 and not f4.symmetric_arcs
    assert G.connectivity(G.clique_with_feeder(3)) == (True, False)


def test_cycle_with_chords_strongly_connected():
    g = G.cycle_with_chords(9)
    assert g.num_arcs == 18 and not g.symmetric_arcs
    assert G.connectivity(g).strong


@pytest.mark.parametrize("bad", [
    lambda: G.clique(1), lambda: G.line(1), lambda: G.lollipop(1, 2),
    lambda: G.lollipop(3, 0), lambda: G.lollipop(3, 2, "sideways"),
    lambda: G.two_cliques_bridged(1, 3), lambda: G.clique_with_feeder(1),
])
def test_invalid_sizes(bad):
    with pytest.raises(G.GraphError):
        bad()


def test_validation():
    with pytest.raises(G.GraphError):
        G.InteractionGraph(3, ((0, 0),))
    with pytest.raises(G.GraphError):
        G.InteractionGraph(3, ((0, 1), (0, 1)))
    with pytest.raises(G.GraphError):
        G.InteractionGraph(3, ((0, 3),))
    disjoint = G.InteractionGraph(4, ((0, 1), (2, 3)))
    assert G.connectivity(disjoint) == (False, False)


def test_arc_count_formulas():
    for n1, n2 in ((2, 1), (4, 3), (7, 5)):
        assert G.lollipop(n1, n2).num_arcs == n1 * (n1 - 1) + 2 * (n2 - 1) + 2
        if n2 >= 2:
            assert G.two_cliques_bridged(n1, n2).num_arcs == n1 * (n1 - 1) + n2 * (n2 - 1) + 2
        assert G.clique_with_feeder(n1).num_arcs == n1 * (n1 - 1) + 1


def test_edge_list_parse():
    assert G.from_edge_list("n 2\n0 -- 1") == G.InteractionGraph(2, G.clique(2).arcs)
    g = G.from_edge_list("# comment\nn 3\n0 1   # arc\n1 2\n")
    assert g.num_arcs == 2 and not g.symmetric_arcs
    with pytest.raises(G.EdgeListParseError) as exc:
        G.from_edge_list("n x")
    assert exc.value.lineno == 1
    with pytest.raises(G.EdgeListParseError) as exc:
        G.from_edge_list("n 2\n0 1\n0 -- 1")
    assert exc.value.lineno == 3
    with pytest.raises(G.EdgeListParseError):
        G.from_edge_list("n 2\n0 5")


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["clique", "line", "lollipop", "two", "feeder", "cycle"]),
       st.integers(2, 7), st.integers(2, 6), st.sampled_from(G.BRIDGE_MODES))
def test_edge_list_round_trip(family, a, b, mode):
    g = {
        "clique": lambda: G.clique(a),
        "line": lambda: G.line(a),
        "lollipop": lambda: G.lollipop(a, b, mode),
        "two": lambda: G.two_cliques_bridged(a, b),
        "feeder": lambda: G.clique_with_feeder(a),
        "cycle": lambda: G.cycle_with_chords(a + 1, b),
    }[family]()
    back = G.from_edge_list(G.to_edge_list(g))
    assert back.arc_set == g.arc_set and back.n == g.n


def test_from_descriptor():
    g = G.from_descriptor({"family": "lollipop", "n1": 3, "n2": 2, "bridge": "directed-u-to-v"})
    assert g.num_arcs == 9 and g.descriptor["bridge"] == "directed-u-to-v"
    with pytest.raises(G.GraphError):
        G.from_descriptor({"family": "star", "n": 3})
    with pytest.raises(G.GraphError):
        G.from_descriptor({"family": "clique", "size": 3})


def test_incidence_lists_every_touching_arc():
    g = G.lollipop(4, 3)
    ptr, idx = g.incidence
    for v in range(g.n):
        touching = [k for k, (a, b) in enumerate(g.arcs) if v in (a, b)]
        assert idx[ptr[v]:ptr[v + 1]].tolist() == touching


def test_connected_graph_counts():
    # connected labelled graphs on n vertices: 1, 4, 38, 728 (OEIS A001187)
    assert [sum(1 for _ in G.connected_undirected_graphs(n)) for n in (2, 3, 4, 5)] == [1, 4, 38, 728]
