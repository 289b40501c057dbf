"""Causal graphs with bidirected edges: d-separation, back-door checks,
latent projection, and the built-in graph catalog.

Graphs are immutable value objects.  Bidirected edges are expanded into
hidden forks (``a <- u -> b``) internally before running any path
algorithm; the hidden vertices never appear in returned graphs.  All
catalog graphs are tiny, so plain path enumeration is used throughout.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Tuple


class GraphInputError(ValueError):
    """Raised for malformed graphs or invalid operation inputs."""


def _as_frozenset(items: Iterable[str]) -> FrozenSet[str]:
    return frozenset(items)


@dataclass(frozen=True)
class CausalGraph:
    """A mixed graph with directed and bidirected edges over string labels.

    ``directed`` holds ordered pairs (tail, head); ``bidirected`` holds
    unordered pairs stored as sorted tuples.
    """

    vertices: FrozenSet[str]
    directed: FrozenSet[Tuple[str, str]] = field(default_factory=frozenset)
    bidirected: FrozenSet[Tuple[str, str]] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "vertices", frozenset(self.vertices))
        object.__setattr__(self, "directed", frozenset(tuple(e) for e in self.directed))
        object.__setattr__(
            self, "bidirected", frozenset(tuple(sorted(e)) for e in self.bidirected)
        )
        for a, b in self.directed | self.bidirected:
            if a == b:
                raise GraphInputError(f"self-loop on {a!r}")
            if a not in self.vertices or b not in self.vertices:
                raise GraphInputError(f"edge ({a!r}, {b!r}) has endpoint outside vertex set")
        if self._has_cycle():
            raise GraphInputError("directed part contains a cycle")

    def _has_cycle(self) -> bool:
        order = self.topological_order(strict=False)
        return order is None

    def topological_order(self, strict: bool = True):
        """Topological order of the directed part, or None if cyclic."""
        indeg = {v: 0 for v in self.vertices}
        for _, h in self.directed:
            indeg[h] += 1
        frontier = sorted(v for v, d in indeg.items() if d == 0)
        order = []
        while frontier:
            v = frontier.pop(0)
            order.append(v)
            added = []
            for t, h in self.directed:
                if t == v:
                    indeg[h] -= 1
                    if indeg[h] == 0:
                        added.append(h)
            frontier = sorted(frontier + added)
        if len(order) != len(self.vertices):
            if strict:
                raise GraphInputError("directed part contains a cycle")
            return None
        return order

    def parents(self, v: str) -> FrozenSet[str]:
        return frozenset(t for t, h in self.directed if h == v)

    def children(self, v: str) -> FrozenSet[str]:
        return frozenset(h for t, h in self.directed if t == v)

    def descendants(self, vs: Iterable[str]) -> FrozenSet[str]:
        """All vertices reachable by directed paths from ``vs``, inclusive."""
        seen = set(vs)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for c in self.children(v):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return frozenset(seen)

    def ancestors(self, vs: Iterable[str]) -> FrozenSet[str]:
        seen = set(vs)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for p in self.parents(v):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return frozenset(seen)

    # -- serialization -------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "vertices": sorted(self.vertices),
            "directed": sorted([list(e) for e in self.directed]),
            "bidirected": sorted([list(e) for e in self.bidirected]),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        doc = json.loads(text)
        return cls(
            vertices=frozenset(doc["vertices"]),
            directed=frozenset(tuple(e) for e in doc["directed"]),
            bidirected=frozenset(tuple(e) for e in doc["bidirected"]),
        )


def _expand_bidirected(g: CausalGraph) -> CausalGraph:
    """Replace each a<->b with a hidden fork a <- @u -> b.

    Hidden vertex labels start with '@' which is reserved (never valid in
    user graphs passing through the public API).
    """
    vertices = set(g.vertices)
    directed = set(g.directed)
    for i, (a, b) in enumerate(sorted(g.bidirected)):
        u = f"@u{i}"
        vertices.add(u)
        directed.add((u, a))
        directed.add((u, b))
    return CausalGraph(frozenset(vertices), frozenset(directed), frozenset())


def _check_query_sets(g: CausalGraph, *sets: FrozenSet[str]) -> None:
    for s in sets:
        if not set(s) <= set(g.vertices):
            raise GraphInputError(f"vertices {set(s) - set(g.vertices)} not in graph")
    for s1, s2 in itertools.combinations(sets, 2):
        if set(s1) & set(s2):
            raise GraphInputError(f"query sets overlap on {set(s1) & set(s2)}")


def d_separated(
    g: CausalGraph,
    a: Iterable[str],
    b: Iterable[str],
    cond: Iterable[str] = (),
) -> bool:
    """True iff every path between ``a`` and ``b`` is blocked given ``cond``.

    Uses the moralized-ancestral-graph criterion on the DAG obtained by
    expanding bidirected edges into hidden forks.  An independent
    path-enumeration oracle lives in the test suite.
    """
    a, b, cond = _as_frozenset(a), _as_frozenset(b), _as_frozenset(cond)
    _check_query_sets(g, a, b, cond)
    dag = _expand_bidirected(g)

    relevant = dag.ancestors(a | b | cond)
    # undirected moral graph over the ancestral set
    adj = {v: set() for v in relevant}
    for t, h in dag.directed:
        if t in relevant and h in relevant:
            adj[t].add(h)
            adj[h].add(t)
    for v in relevant:
        ps = [p for p in dag.parents(v) if p in relevant]
        for p1, p2 in itertools.combinations(ps, 2):
            adj[p1].add(p2)
            adj[p2].add(p1)
    # reachability from a to b avoiding cond
    seen = set(a)
    stack = list(a)
    while stack:
        v = stack.pop()
        for w in adj.get(v, ()):
            if w in cond or w in seen:
                continue
            if w in b:
                return False
            seen.add(w)
            stack.append(w)
    return True


def is_backdoor_admissible(
    g: CausalGraph,
    x: Iterable[str],
    y: Iterable[str],
    z: Iterable[str],
) -> bool:
    """Back-door criterion: z has no descendant of x, and z blocks every
    path from x to y that starts with an arrow into x."""
    x, y, z = _as_frozenset(x), _as_frozenset(y), _as_frozenset(z)
    if not x or not y:
        raise GraphInputError("x and y must be nonempty")
    _check_query_sets(g, x, y, z)
    if z & g.descendants(x):
        return False
    # Remove edges out of x; remaining paths from x are exactly the
    # back-door paths, checked via d-separation in the expanded DAG.
    trimmed = CausalGraph(
        g.vertices,
        frozenset(e for e in g.directed if e[0] not in x),
        g.bidirected,
    )
    return d_separated(trimmed, x, y, z)


def _mixed_edges(g: CausalGraph):
    """All edges with endpoint marks: (a, b, mark_at_a, mark_at_b).

    Mark is '>' for an arrowhead at that endpoint and '-' for a tail.
    Directed a->b yields ('-', '>'); bidirected yields ('>', '>').
    """
    edges = []
    for t, h in g.directed:
        edges.append((t, h, "-", ">"))
    for a, b in g.bidirected:
        edges.append((a, b, ">", ">"))
    return edges


def _walks(g: CausalGraph, start: str, end: str, interior: FrozenSet[str]):
    """Simple paths from start to end whose interior vertices all lie in
    ``interior``; yields lists of (vertex, mark_in, mark_out) steps."""
    edges = _mixed_edges(g)
    incident = {}
    for a, b, ma, mb in edges:
        incident.setdefault(a, []).append((b, ma, mb))
        incident.setdefault(b, []).append((a, mb, ma))

    def rec(v, visited, path):
        for w, mark_here, mark_there in incident.get(v, ()):
            if w == end:
                yield path + [(v, w, mark_here, mark_there)]
            elif w in interior and w not in visited:
                yield from rec(w, visited | {w}, path + [(v, w, mark_here, mark_there)])

    yield from rec(start, {start}, [])


def latent_projection(g: CausalGraph, keep: Iterable[str]) -> CausalGraph:
    """Project ``g`` onto ``keep``, routing edges through dropped vertices.

    A directed edge a->b appears iff a directed path a->...->b exists with
    all interior vertices dropped.  A bidirected edge a<->b appears iff a
    collider-free path exists through dropped vertices with arrowheads at
    both endpoints.
    """
    keep = _as_frozenset(keep)
    if not keep <= g.vertices:
        raise GraphInputError("keep must be a subset of the graph's vertices")
    dropped = g.vertices - keep
    # Work on the fork-expanded graph so bidirected edges participate in
    # projected paths; hidden fork roots count as dropped.
    dag = _expand_bidirected(g)
    hidden = dag.vertices - g.vertices
    interior = frozenset(dropped | hidden)

    directed = set()
    bidirected = set()
    for a, b in itertools.permutations(sorted(keep), 2):
        for path in _walks(dag, a, b, interior):
            # marks along the path; step = (u, v, mark_at_u, mark_at_v)
            if all(mu == "-" and mv == ">" for (_, _, mu, mv) in path):
                directed.add((a, b))
                break
    for a, b in itertools.combinations(sorted(keep), 2):
        for path in _walks(dag, a, b, interior):
            first_out = path[0][2]
            last_in = path[-1][3]
            if first_out != ">" or last_in != ">":
                continue
            # no collider at any interior vertex
            collider = False
            for k in range(len(path) - 1):
                into = path[k][3]
                outof = path[k + 1][2]
                if into == ">" and outof == ">":
                    collider = True
                    break
            if not collider:
                bidirected.add((a, b))
                break
    return CausalGraph(keep, frozenset(directed), frozenset(bidirected))


# -- built-in catalog ---------------------------------------------------

def _mk(vertices, directed, bidirected=()):
    return CausalGraph(frozenset(vertices), frozenset(directed), frozenset(bidirected))


BUILTIN_GRAPHS = {
    # W -> Z -> X -> Y with Z <-> Y; the effect of X on Y has both an
    # admissible set {Z} and a functional with a spurious W.
    "fig1": _mk(
        "WZXY",
        [("W", "Z"), ("Z", "X"), ("X", "Y")],
        [("Z", "Y")],
    ),
    # three-graph family of increasing complexity
    "fig2a": _mk("WXY", [("W", "X"), ("X", "Y")], [("W", "Y")]),
    "fig2b": _mk("WXY", [("W", "X"), ("X", "Y")], [("W", "Y"), ("W", "X")]),
    "fig2c": _mk(
        "WZXY",
        [("W", "Z"), ("Z", "X"), ("X", "Y")],
        [("W", "Y"), ("W", "X")],
    ),
    # generalization with a covariate block B (single stand-in vertex)
    "fig3a": _mk(
        ["W", "Z", "X", "Y", "B"],
        [("W", "Z"), ("Z", "X"), ("X", "Y"), ("B", "Z"), ("B", "X"), ("B", "Y")],
        [("W", "B"), ("W", "X"), ("W", "Y")],
    ),
    # instance with B = {S, G} (the education/income graph)
    "fig3b": _mk(
        ["W", "Z", "X", "Y", "S", "G"],
        [
            ("W", "Z"), ("Z", "X"), ("X", "Y"),
            ("S", "Z"), ("S", "X"), ("S", "Y"),
            ("G", "Z"), ("G", "X"), ("G", "Y"),
        ],
        [("W", "S"), ("W", "X"), ("W", "Y")],
    ),
    # further trapdoor examples, catalogued as graphs only
    "fig4a": _mk(
        ["X1", "Z", "W", "X2", "Y"],
        [("X1", "Z"), ("Z", "W"), ("W", "X2"), ("X2", "Y")],
        [("X1", "W"), ("X1", "Y"), ("Z", "X2")],
    ),
    "fig4b": _mk(
        ["X1", "Z", "W", "X2", "Y"],
        [("X1", "Z"), ("W", "Z"), ("Z", "X2"), ("X2", "Y")],
        [("W", "Y"), ("X1", "Y"), ("W", "X2")],
    ),
    "fig4c": _mk(
        ["W", "Z", "X", "Y1", "Y2"],
        [("X", "Y1"), ("Y1", "Y2"), ("Z", "X"), ("W", "Z"), ("W", "Y1")],
        [("Y2", "W"), ("W", "X"), ("Z", "Y1")],
    ),
}
BUILTIN_GRAPHS["fsd"] = BUILTIN_GRAPHS["fig3b"]


def get_graph(key: str) -> CausalGraph:
    try:
        return BUILTIN_GRAPHS[key]
    except KeyError:
        raise GraphInputError(
            f"unknown graph key {key!r}; available: {sorted(BUILTIN_GRAPHS)}"
        ) from None
