import itertools
import random

import pytest

from trapdoor import graph
from trapdoor.graph import (
    BUILTIN_GRAPHS,
    CausalGraph,
    GraphInputError,
    d_separated,
    get_graph,
    is_backdoor_admissible,
    latent_projection,
)


def make(vertices, directed=(), bidirected=()):
    return CausalGraph(frozenset(vertices), frozenset(directed), frozenset(bidirected))


# -- validation ---------------------------------------------------------------

def test_rejects_self_loop():
    with pytest.raises(GraphInputError):
        make("AB", [("A", "A")])


def test_rejects_unknown_endpoint():
    with pytest.raises(GraphInputError):
        make("AB", [("A", "C")])


def test_rejects_directed_cycle():
    with pytest.raises(GraphInputError):
        make("ABC", [("A", "B"), ("B", "C"), ("C", "A")])


def test_json_round_trip():
    for key, g in BUILTIN_GRAPHS.items():
        assert CausalGraph.from_json(g.to_json()) == g


def test_get_graph_unknown_key():
    with pytest.raises(GraphInputError):
        get_graph("nope")


def test_ancestors_descendants():
    g = make("ABCD", [("A", "B"), ("B", "C")])
    assert g.descendants("A") == {"A", "B", "C"}
    assert g.ancestors("C") == {"A", "B", "C"}
    assert g.descendants("D") == {"D"}


# -- textbook d-separation cases ------------------------------------------------

def test_chain():
    g = make("ABC", [("A", "B"), ("B", "C")])
    assert not d_separated(g, {"A"}, {"C"})
    assert d_separated(g, {"A"}, {"C"}, {"B"})


def test_fork():
    g = make("ABC", [("B", "A"), ("B", "C")])
    assert not d_separated(g, {"A"}, {"C"})
    assert d_separated(g, {"A"}, {"C"}, {"B"})


def test_collider():
    g = make("ABC", [("A", "B"), ("C", "B")])
    assert d_separated(g, {"A"}, {"C"})
    assert not d_separated(g, {"A"}, {"C"}, {"B"})


def test_collider_descendant_opens():
    g = make("ABCD", [("A", "B"), ("C", "B"), ("B", "D")])
    assert not d_separated(g, {"A"}, {"C"}, {"D"})


def test_bidirected_confounding():
    g = make("XY", bidirected=[("X", "Y")])
    assert not d_separated(g, {"X"}, {"Y"})


# -- back-door admissibility ---------------------------------------------------

def test_backdoor_confounder_adjustment():
    g = get_graph("fig2a")  # W -> X -> Y with W <-> Y
    assert is_backdoor_admissible(g, {"X"}, {"Y"}, {"W"})
    assert not is_backdoor_admissible(g, {"X"}, {"Y"}, set())


def test_backdoor_collider_adjustment_fails():
    g = get_graph("fig2b")  # adds W <-> X, making W a collider on the back-door path
    assert not is_backdoor_admissible(g, {"X"}, {"Y"}, {"W"})


def test_backdoor_rejects_descendants_of_x():
    g = make("XMY", [("X", "M"), ("M", "Y")])
    assert not is_backdoor_admissible(g, {"X"}, {"Y"}, {"M"})


# -- latent projection ----------------------------------------------------------

def test_projection_collapses_mediator_into_confounded_edge():
    assert latent_projection(get_graph("fig2c"), {"W", "X", "Y"}) == get_graph("fig2b")


def test_projection_identity_and_idempotence():
    for g in BUILTIN_GRAPHS.values():
        assert latent_projection(g, g.vertices) == g
    g = get_graph("fig3b")
    once = latent_projection(g, {"W", "Z", "X", "Y"})
    assert latent_projection(once, once.vertices) == once


def test_projection_directed_chain():
    g = make("ABC", [("A", "B"), ("B", "C")])
    p = latent_projection(g, {"A", "C"})
    assert p.directed == {("A", "C")}
    assert not p.bidirected


def test_projection_hidden_fork_becomes_bidirected():
    g = make("ABC", [("B", "A"), ("B", "C")])
    p = latent_projection(g, {"A", "C"})
    assert not p.directed
    assert p.bidirected == {frozenset_edge(p, "A", "C")}


def frozenset_edge(g, a, b):
    return next(e for e in g.bidirected if set(e) == {a, b})


# -- brute-force oracle ----------------------------------------------------------

def _expand(g):
    """Replace each bidirected edge with an explicit hidden fork."""
    vertices = set(g.vertices)
    directed = set(g.directed)
    for i, edge in enumerate(sorted(map(tuple, map(sorted, g.bidirected)))):
        h = f"@h{i}"
        vertices.add(h)
        directed.add((h, edge[0]))
        directed.add((h, edge[1]))
    return vertices, directed


def _brute_d_separated(g, a, b, cond):
    """Path-enumeration d-separation on the hidden-fork expansion."""
    vertices, directed = _expand(g)
    cond = set(cond)
    nbrs = {}
    for u, v in directed:
        nbrs.setdefault(u, []).append((v, "out"))
        nbrs.setdefault(v, []).append((u, "in"))
    desc = {v: {v} for v in vertices}
    changed = True
    while changed:
        changed = False
        for u, v in directed:
            if not desc[v] <= desc[u]:
                desc[u] |= desc[v]
                changed = True

    def open_paths(start, goal):
        # DFS over simple paths; a path is open if every collider is in
        # cond (or has a conditioned descendant) and no non-collider is.
        stack = [(start, None, frozenset({start}))]
        while stack:
            node, came_in, seen = stack.pop()
            for nxt, direction in nbrs.get(node, []):
                if nxt in seen:
                    continue
                if came_in is not None:
                    is_collider = came_in == "in" and direction == "in"
                    if is_collider:
                        if not (desc[node] & cond):
                            continue
                    elif node in cond:
                        continue
                arrives = "in" if direction == "out" else "out"
                if nxt == goal:
                    return True
                stack.append((nxt, arrives, seen | {nxt}))
        return False

    for s in a:
        for t in b:
            if open_paths(s, t):
                return False
    return True


def test_d_separation_matches_brute_force_on_random_graphs():
    rng = random.Random(20260826)
    for trial in range(500):
        k = rng.randint(3, 6)
        names = [chr(ord("A") + i) for i in range(k)]
        order = names[:]
        rng.shuffle(order)
        directed = set()
        for i in range(k):
            for j in range(i + 1, k):
                if rng.random() < 0.35:
                    directed.add((order[i], order[j]))
        bidirected = set()
        for u, v in itertools.combinations(names, 2):
            if rng.random() < 0.15:
                bidirected.add((u, v))
        g = make(names, directed, bidirected)
        a, b = rng.sample(names, 2)
        rest = [v for v in names if v not in (a, b)]
        cond = set(rng.sample(rest, rng.randint(0, len(rest))))
        assert d_separated(g, {a}, {b}, cond) == _brute_d_separated(g, {a}, {b}, cond), (
            f"trial {trial}: {sorted(directed)}, {sorted(bidirected)}, "
            f"{a} vs {b} given {sorted(cond)}"
        )
