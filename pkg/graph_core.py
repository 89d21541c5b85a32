"""
Finite directed graphs and the conventions tying them to the edge module E = C(G¹).

Adjacency convention, used by every module in this repository:

    A[u][v] = #{g : r(g) = u, s(g) = v}

so rows are indexed by range and columns by source. With this convention the map on
K₀(C(G⁰)) is I − Aᵀ and the map on K⁰(C(G⁰)) is I − A. A path λ = λ₁λ₂…λₘ has
s(λᵢ) = r(λᵢ₊₁), r(λ) = r(λ₁) and s(λ) = s(λₘ); vertices are the paths of length 0.
"""

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Any, List, Tuple, Iterator, Optional

import numpy as np

from errors import GraphFormatError

Path = Tuple[str, ...]   # edge names; a vertex path is stored as ('@v',), see vertex_path()

GRAPH_KEYS = {'vertices', 'edges'}
EDGE_KEYS = {'name', 'src', 'dst'}
VERTEX_MARK = '@'
DUAL_SEPARATOR = ':'


@dataclass(frozen=True)
class Edge:
    name: str
    src: str   # s(g)
    dst: str   # r(g)


@dataclass(frozen=True)
class DirectedGraph:
    vertices: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    name: str = ''

    def __post_init__(self):
        if len(set(self.vertices)) != len(self.vertices):
            raise GraphFormatError(f"Duplicate vertex ids in graph '{self.name}'")
        edge_names = [e.name for e in self.edges]
        if len(set(edge_names)) != len(edge_names):
            raise GraphFormatError(f"Duplicate edge ids in graph '{self.name}'")
        clash = set(edge_names) & set(self.vertices)
        if clash:
            raise GraphFormatError(f"Ids used both as vertex and edge: {sorted(clash)}")
        marked = [n for n in edge_names if n.startswith(VERTEX_MARK)]
        if marked:
            raise GraphFormatError(f"Edge names may not start with '{VERTEX_MARK}': {sorted(marked)}")
        declared = set(self.vertices)
        for e in self.edges:
            for end in (e.src, e.dst):
                if end not in declared:
                    raise GraphFormatError(f"Edge '{e.name}' uses undeclared vertex '{end}'")

    @property
    def n(self) -> int:
        return len(self.vertices)

    def vertex_index(self) -> Dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    def edge(self, name: str) -> Edge:
        for e in self.edges:
            if e.name == name:
                return e
        raise KeyError(name)

    def r(self, edge_name: str) -> str:
        return self._edge_map()[edge_name].dst

    def s(self, edge_name: str) -> str:
        return self._edge_map()[edge_name].src

    def _edge_map(self) -> Dict[str, Edge]:
        return _edge_map(self)

    def edges_with_range(self, v: str) -> List[Edge]:
        return [e for e in self.edges if e.dst == v]

    def edges_with_source(self, v: str) -> List[Edge]:
        return [e for e in self.edges if e.src == v]


@lru_cache(maxsize=256)
def _edge_map(g: DirectedGraph) -> Dict[str, Edge]:
    return {e.name: e for e in g.edges}


@dataclass(frozen=True)
class GraphPredicates:
    has_sources: bool
    has_sinks: bool
    primitive: bool
    at_most_one_edge_per_pair: bool
    sources: Tuple[str, ...] = ()
    sinks: Tuple[str, ...] = ()


# --- Core Operations ---

def adjacency(g: DirectedGraph) -> np.ndarray:
    """Integer (object dtype) matrix with A[u][v] = #{edges with r = u, s = v}."""
    idx = g.vertex_index()
    A = np.zeros((g.n, g.n), dtype=object)
    for e in g.edges:
        A[idx[e.dst], idx[e.src]] += 1
    return A


def opposite_graph(g: DirectedGraph) -> DirectedGraph:
    """Reverses every edge; the edge module of the result is E^op."""
    return DirectedGraph(
        vertices=g.vertices,
        edges=tuple(Edge(e.name, e.dst, e.src) for e in g.edges),
        name=f"{g.name}^op" if g.name else '',
    )


def dual_graph(g: DirectedGraph) -> DirectedGraph:
    """
    Line graph: vertices are the edges of g, and each composable pair xy
    (s(x) = r(y)) becomes an edge named 'x:y' with range x and source y.
    """
    edges = []
    for x in g.edges:
        for y in g.edges:
            if x.src == y.dst:
                edges.append(Edge(f"{x.name}{DUAL_SEPARATOR}{y.name}", y.name, x.name))
    return DirectedGraph(
        vertices=tuple(e.name for e in g.edges),
        edges=tuple(edges),
        name=f"dual({g.name})" if g.name else '',
    )


def predicates(g: DirectedGraph) -> GraphPredicates:
    sources = tuple(v for v in g.vertices if not g.edges_with_range(v))
    sinks = tuple(v for v in g.vertices if not g.edges_with_source(v))
    A = adjacency(g)
    at_most_one = all(A[i, j] <= 1 for i in range(g.n) for j in range(g.n))
    return GraphPredicates(
        has_sources=bool(sources),
        has_sinks=bool(sinks),
        primitive=is_primitive(A),
        at_most_one_edge_per_pair=at_most_one,
        sources=sources,
        sinks=sinks,
    )


def is_primitive(A: np.ndarray) -> bool:
    """Positivity of some power A^N with N up to Wielandt's bound (n−1)² + 1."""
    n = A.shape[0]
    if n == 0:
        return False
    pattern = (np.asarray(A, dtype=object) != 0).astype(np.int64)
    power = pattern.copy()
    for _ in range((n - 1) ** 2 + 1):
        if power.all():
            return True
        power = ((power @ pattern) > 0).astype(np.int64)
    return bool(power.all())


# --- Paths ---

def vertex_path(v: str) -> Path:
    """Length-0 path at v. Stored behind VERTEX_MARK, which edge names may not start with."""
    return (VERTEX_MARK + v,)


def path_length(p: Path) -> int:
    return 0 if is_vertex_path(p) else len(p)


def is_vertex_path(p: Path) -> bool:
    return len(p) == 1 and p[0].startswith(VERTEX_MARK)


def path_range(g: DirectedGraph, p: Path) -> str:
    return p[0][1:] if is_vertex_path(p) else g.r(p[0])


def path_source(g: DirectedGraph, p: Path) -> str:
    return p[0][1:] if is_vertex_path(p) else g.s(p[-1])


def concat(g: DirectedGraph, p: Path, q: Path) -> Optional[Path]:
    """pq when s(p) = r(q), else None; vertex paths act as units."""
    if path_source(g, p) != path_range(g, q):
        return None
    if is_vertex_path(p):
        return q
    if is_vertex_path(q):
        return p
    return p + q


def split_prefix(g: DirectedGraph, p: Path, prefix: Path) -> Optional[Path]:
    """The path q with p = prefix·q, or None when prefix is not a prefix of p."""
    if is_vertex_path(prefix):
        return p if path_range(g, p) == path_range(g, prefix) else None
    k = len(prefix)
    if is_vertex_path(p) or len(p) < k or p[:k] != prefix:
        return None
    return p[k:] if len(p) > k else vertex_path(path_source(g, prefix))


def split_suffix(g: DirectedGraph, p: Path, suffix: Path) -> Optional[Path]:
    """The path q with p = q·suffix, or None when suffix does not end p."""
    if is_vertex_path(suffix):
        return p if path_source(g, p) == path_range(g, suffix) else None
    k = len(suffix)
    if is_vertex_path(p) or len(p) < k or p[-k:] != suffix:
        return None
    return p[:-k] if len(p) > k else vertex_path(path_range(g, suffix))


def reverse_path(g: DirectedGraph, p: Path) -> Path:
    """λ ↦ λ^op, the same edge names read backwards in the opposite graph."""
    return p if is_vertex_path(p) else tuple(reversed(p))


def paths_of_length(g: DirectedGraph, n: int) -> List[Path]:
    """All paths of length n in declaration order (brute force, used as an oracle)."""
    if n == 0:
        return [vertex_path(v) for v in g.vertices]
    current: List[Path] = [(e.name,) for e in g.edges]
    for _ in range(n - 1):
        current = [p + (e.name,) for p in current for e in g.edges if g.s(p[-1]) == e.dst]
    return current


def paths_up_to(g: DirectedGraph, L: int) -> List[Path]:
    out: List[Path] = []
    for n in range(L + 1):
        out.extend(paths_of_length(g, n))
    return out


def iter_paths_with_range(g: DirectedGraph, v: str, n: int) -> Iterator[Path]:
    """Depth-first enumeration of paths of length n ending (in range) at v."""
    if n == 0:
        yield vertex_path(v)
        return

    def extend(prefix: Path, at: str, remaining: int):
        if remaining == 0:
            yield prefix
            return
        for e in g.edges_with_range(at):
            yield from extend(prefix + (e.name,), e.src, remaining - 1)

    yield from extend((), v, n)


def random_path_with_range(g: DirectedGraph, v: str, n: int, rng: np.random.Generator) -> Path:
    if n == 0:
        return vertex_path(v)
    path: List[str] = []
    at = v
    for _ in range(n):
        choices = g.edges_with_range(at)
        if not choices:
            raise ValueError(f"Vertex '{at}' receives no edge; no path of length {n} with range {v}")
        e = choices[int(rng.integers(len(choices)))]
        path.append(e.name)
        at = e.src
    return tuple(path)


# --- Construction helpers ---

def graph_from_adjacency(A, name: str = '', vertex_prefix: str = 'v') -> DirectedGraph:
    """Builds a graph with A[u][v] parallel edges from v to u (same convention as adjacency())."""
    A = np.asarray(A, dtype=object)
    vertices = tuple(f"{vertex_prefix}{i}" for i in range(A.shape[0]))
    edges = []
    for u in range(A.shape[0]):
        for v in range(A.shape[1]):
            for k in range(int(A[u, v])):
                edges.append(Edge(f"e{u}_{v}_{k}", vertices[v], vertices[u]))
    return DirectedGraph(vertices, tuple(edges), name)


def random_graph(n: int, rng: np.random.Generator, max_multiplicity: int = 2,
                 density: float = 0.4, name: str = '') -> DirectedGraph:
    """Random graph on n vertices with no sources and no sinks."""
    A = np.zeros((n, n), dtype=np.int64)
    mask = rng.random((n, n)) < density
    A[mask] = rng.integers(1, max_multiplicity + 1, size=int(mask.sum()))
    for u in range(n):
        if A[u].sum() == 0:       # u receives nothing: no sources
            A[u, rng.integers(n)] += 1
    for v in range(n):
        if A[:, v].sum() == 0:    # v emits nothing: no sinks
            A[rng.integers(n), v] += 1
    return graph_from_adjacency(A.tolist(), name=name)


# --- JSON I/O ---

def graph_from_dict(data: Dict[str, Any], name: str = '') -> DirectedGraph:
    if not isinstance(data, dict):
        raise GraphFormatError("Graph JSON must be an object")
    unknown = set(data) - GRAPH_KEYS
    if unknown:
        raise GraphFormatError(f"Unknown graph fields: {sorted(unknown)}")
    missing = GRAPH_KEYS - set(data)
    if missing:
        raise GraphFormatError(f"Missing graph fields: {sorted(missing)}")
    vertices = data['vertices']
    if not isinstance(vertices, list) or not all(isinstance(v, str) for v in vertices):
        raise GraphFormatError("'vertices' must be a list of strings")
    edges = []
    for i, raw in enumerate(data['edges']):
        if not isinstance(raw, dict):
            raise GraphFormatError(f"Edge #{i} must be an object")
        unknown = set(raw) - EDGE_KEYS
        missing = EDGE_KEYS - set(raw)
        if unknown or missing:
            raise GraphFormatError(f"Edge #{i} ({raw.get('name', '?')}): unknown {sorted(unknown)}, missing {sorted(missing)}")
        if not all(isinstance(raw[k], str) for k in EDGE_KEYS):
            raise GraphFormatError(f"Edge #{i}: name/src/dst must be strings")
        if DUAL_SEPARATOR in raw['name']:
            raise GraphFormatError(f"Edge #{i} ({raw['name']}): '{DUAL_SEPARATOR}' is reserved for dual-graph edge names")
        edges.append(Edge(raw['name'], raw['src'], raw['dst']))
    return DirectedGraph(tuple(vertices), tuple(edges), name)


def graph_to_dict(g: DirectedGraph) -> Dict[str, Any]:
    return {
        'vertices': list(g.vertices),
        'edges': [{'name': e.name, 'src': e.src, 'dst': e.dst} for e in g.edges],
    }


def load_graph(path: str) -> DirectedGraph:
    name = os.path.splitext(os.path.basename(path))[0]
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise GraphFormatError(f"{path}: invalid JSON ({e})")
    except OSError as e:
        raise GraphFormatError(f"Could not read graph file {path}: {e}")
    return graph_from_dict(data, name=name)


def dump_graph(g: DirectedGraph, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(graph_to_dict(g), f, indent=2)
        f.write('\n')
