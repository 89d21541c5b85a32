import json

import numpy as np
import pytest

from errors import GraphFormatError
import graph_core
from graph_core import (
    Edge, DirectedGraph, adjacency, concat, dual_graph, dump_graph, graph_from_adjacency,
    graph_from_dict, is_primitive, iter_paths_with_range, load_graph, opposite_graph,
    path_range, path_source, paths_of_length, paths_up_to, predicates, random_graph,
    random_path_with_range, reverse_path, split_prefix, split_suffix, vertex_path,
)


def test_adjacency_counts_edges_by_range_then_source(load):
    g = load("example24")
    assert g.name == "example24"
    assert g.vertices == ("v", "w")
    assert adjacency(g).tolist() == [[2, 1], [0, 1]]


def test_path_counts_for_example24(load):
    g = load("example24")
    assert len(paths_of_length(g, 2)) == 8
    assert len(paths_up_to(g, 2)) == 14


def test_path_range_and_source(load):
    g = load("example24")
    assert path_range(g, ("f", "g")) == "v"
    assert path_source(g, ("f", "g")) == "w"
    assert path_range(g, vertex_path("w")) == "w"
    assert path_source(g, vertex_path("w")) == "w"


def test_concat_respects_composability(load):
    g = load("example24")
    assert concat(g, ("f",), ("g",)) == ("f", "g")
    assert concat(g, ("g",), ("f",)) is None
    assert concat(g, vertex_path("v"), ("e1",)) == ("e1",)
    assert concat(g, ("f",), vertex_path("w")) == ("f",)


def test_split_prefix(load):
    g = load("example24")
    assert split_prefix(g, ("e1", "f", "g"), ("e1",)) == ("f", "g")
    assert split_prefix(g, ("e1", "f"), ("e1", "f")) == vertex_path("w")
    assert split_prefix(g, ("e1", "f"), ("e2",)) is None
    assert split_prefix(g, ("e1",), vertex_path("v")) == ("e1",)


def test_iter_paths_with_range_matches_brute_force(rng):
    for _ in range(5):
        g = random_graph(3, rng)
        for v in g.vertices:
            fast = sorted(iter_paths_with_range(g, v, 3))
            slow = sorted(p for p in paths_of_length(g, 3) if path_range(g, p) == v)
            assert fast == slow


def test_opposite_graph_transposes_adjacency(load):
    g = load("suq2")
    op = opposite_graph(g)
    assert op.name == "suq2^op"
    assert (adjacency(op) == adjacency(g).T).all()
    assert reverse_path(g, ("e", "f")) == ("f", "e")


def test_dual_graph_has_one_vertex_per_edge(load):
    g = load("example24")
    d = dual_graph(g)
    assert d.vertices == tuple(e.name for e in g.edges)
    assert len(d.edges) == len(paths_of_length(g, 2))
    assert d.edge("f:g").dst == "f"
    assert d.edge("f:g").src == "g"


def test_predicates_find_sources_and_sinks():
    sink = graph_from_adjacency([[1, 0], [1, 0]])
    p = predicates(sink)
    assert p.sinks == ("v1",)
    assert not p.has_sources

    source = graph_from_adjacency([[1, 1], [0, 0]])
    p = predicates(source)
    assert p.sources == ("v1",)


def test_is_primitive():
    assert is_primitive(np.array([[1, 1], [1, 0]], dtype=object))
    assert not is_primitive(np.array([[0, 1], [1, 0]], dtype=object))
    assert not is_primitive(np.array([[1, 1], [0, 1]], dtype=object))


def test_random_graph_has_no_sources_or_sinks(rng):
    for n in (1, 2, 4, 6):
        p = predicates(random_graph(n, rng))
        assert not p.has_sources
        assert not p.has_sinks


def test_random_path_has_requested_range(load, rng):
    g = load("fibonacci")
    for _ in range(10):
        p = random_path_with_range(g, "w", 6, rng)
        assert len(p) == 6
        assert path_range(g, p) == "w"
        assert p in paths_of_length(g, 6)


def test_graph_from_dict_rejects_malformed_input():
    with pytest.raises(GraphFormatError):
        graph_from_dict({"vertices": ["v"], "edges": [], "extra": 1})
    with pytest.raises(GraphFormatError):
        graph_from_dict({"vertices": ["v"], "edges": [{"name": "e", "src": "v", "dst": "u"}]})
    with pytest.raises(GraphFormatError):
        graph_from_dict({"vertices": ["v"], "edges": [{"name": "e", "src": "v"}]})
    with pytest.raises(GraphFormatError):
        DirectedGraph(("v",), (Edge("e", "v", "v"), Edge("e", "v", "v")))
    with pytest.raises(GraphFormatError):
        DirectedGraph(("v",), (Edge("v", "v", "v"),))


def test_load_graph_rejects_invalid_json(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    with pytest.raises(GraphFormatError):
        load_graph(str(bad))
    with pytest.raises(GraphFormatError, match="Could not read"):
        load_graph(str(tmp_path / "missing.json"))


def test_dump_graph_writes_loadable_json(load, tmp_path):
    g = load("triangle_loops")
    target = tmp_path / "triangle_loops.json"
    dump_graph(g, str(target))
    assert json.loads(target.read_text())["vertices"] == ["a", "b", "c"]
    assert load_graph(str(target)) == g


def test_edge_names_cannot_look_like_vertex_paths():
    with pytest.raises(GraphFormatError, match="may not start"):
        DirectedGraph(("v",), (Edge("@v", "v", "v"),))
    with pytest.raises(GraphFormatError, match="may not start"):
        graph_from_dict({"vertices": ["v"], "edges": [{"name": "@e", "src": "v", "dst": "v"}]})


def test_dual_separator_is_reserved_in_loaded_graphs():
    # 'a' then 'b:c' would give the same dual edge name as 'a:b' then 'c'
    with pytest.raises(GraphFormatError, match="reserved"):
        graph_from_dict({"vertices": ["v"], "edges": [
            {"name": "a", "src": "v", "dst": "v"}, {"name": "b:c", "src": "v", "dst": "v"}]})
    d = dual_graph(dual_graph(graph_from_adjacency([[2]])))
    assert len(d.edges) == 8
    assert len({e.name for e in d.edges}) == 8


def test_edge_map_cache_is_bounded(rng):
    graph_core._edge_map.cache_clear()
    for _ in range(300):
        g = random_graph(2, rng)
        g.r(g.edges[0].name)
    info = graph_core._edge_map.cache_info()
    assert info.maxsize == 256
    assert info.currsize <= 256


def test_split_suffix(load):
    g = load("example24")
    assert split_suffix(g, ("e1", "f", "g"), ("g",)) == ("e1", "f")
    assert split_suffix(g, ("e1", "f"), ("e1", "f")) == vertex_path("v")
    assert split_suffix(g, ("e1", "f"), ("e1",)) is None
    assert split_suffix(g, ("e1", "f"), vertex_path("w")) == ("e1", "f")
    assert split_suffix(g, ("e1", "f"), vertex_path("v")) is None
