"""Directed interaction graphs and their structural predicates.

Agents are numbered 1..n.  An edge ``(parent, child)`` means information can
flow from ``parent`` to ``child``.  Self-loops are never stored: positive
diagonal mixing weights are added by the matrix constructors in
:mod:`pushpull.mixing` instead.

The central predicate is :func:`root_set`: the set of vertices from which
every other vertex is reachable by a directed path (equivalently, roots of
spanning trees).  It is computed exactly via Tarjan condensation: the root
set is the unique source strongly-connected component when one exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

Edge = tuple[int, int]

# Stream tags keep the counter-based generators used for link activation and
# gossip event sampling from ever colliding on a shared seed.
_REALIZE_STREAM = 1


@dataclass(frozen=True)
class Digraph:
    """Immutable digraph on agents ``1..n`` with edges ``(parent, child)``.

    Invariants enforced at construction: all ids in ``[1, n]``, no duplicate
    edges (guaranteed by the frozenset), no self-loops.
    """

    n: int
    edges: frozenset[Edge]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"agent count must be positive, got {self.n}")
        if not isinstance(self.edges, frozenset):
            object.__setattr__(self, "edges", frozenset(self.edges))
        for p, c in self.edges:
            if not (1 <= p <= self.n and 1 <= c <= self.n):
                raise ValueError(f"edge ({p}, {c}) out of range for n={self.n}")
            if p == c:
                raise ValueError(f"self-loop ({p}, {c}) is not storable")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Edge]) -> "Digraph":
        return cls(n, frozenset((int(p), int(c)) for p, c in edges))

    @cached_property
    def sorted_edges(self) -> tuple[Edge, ...]:
        """Canonical edge order used by seeded procedures and file output."""
        return tuple(sorted(self.edges))

    @cached_property
    def _out(self) -> dict[int, tuple[int, ...]]:
        table: dict[int, list[int]] = {i: [] for i in range(1, self.n + 1)}
        for p, c in self.sorted_edges:
            table[p].append(c)
        return {i: tuple(sorted(v)) for i, v in table.items()}

    @cached_property
    def _in(self) -> dict[int, tuple[int, ...]]:
        table: dict[int, list[int]] = {i: [] for i in range(1, self.n + 1)}
        for p, c in self.sorted_edges:
            table[c].append(p)
        return {i: tuple(sorted(v)) for i, v in table.items()}

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return self._out[i]

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return self._in[i]

    def reverse(self) -> "Digraph":
        return Digraph(self.n, frozenset((c, p) for p, c in self.edges))

    def with_edges(self, extra: Iterable[Edge]) -> "Digraph":
        return Digraph(self.n, self.edges | frozenset(extra))

    def without_edges(self, removed: Iterable[Edge]) -> "Digraph":
        return Digraph(self.n, self.edges - frozenset(removed))


@dataclass(frozen=True)
class GraphSequence:
    """A random time-varying sequence of subgraphs of a base digraph.

    Each non-protected base edge is independently active with probability
    ``activation_probability`` at every iteration; protected edges are always
    active.  ``realize(seq, k)`` is a pure function of ``(seed, k)``: the
    activation draws come from a counter-based generator keyed on the seed
    with the iteration index as counter, so realizations are random-access
    reproducible.
    """

    base: Digraph
    activation_probability: float
    seed: int
    protected_edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if not (0.0 < self.activation_probability <= 1.0):
            raise ValueError("activation_probability must be in (0, 1]")
        if not isinstance(self.protected_edges, frozenset):
            object.__setattr__(self, "protected_edges", frozenset(self.protected_edges))
        if not self.protected_edges <= self.base.edges:
            raise ValueError("protected edges must be a subset of the base edges")


def realize(seq: GraphSequence, k: int) -> Digraph:
    """Realized subgraph at iteration ``k``; deterministic in ``(seq.seed, k)``."""
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    if seq.activation_probability >= 1.0:
        return seq.base
    rng = np.random.Generator(
        np.random.Philox(key=seq.seed, counter=[k, 0, 0, _REALIZE_STREAM])
    )
    draws = rng.random(len(seq.base.sorted_edges))
    kept = [
        e
        for e, r in zip(seq.base.sorted_edges, draws)
        if e in seq.protected_edges or r < seq.activation_probability
    ]
    return Digraph(seq.base.n, frozenset(kept))


def strongly_connected_components(g: Digraph) -> list[frozenset[int]]:
    """Tarjan's algorithm, iterative so deep graphs cannot hit recursion limits.

    Components are returned in reverse topological order of the condensation
    (every edge between components goes from a later list entry to an earlier
    one).
    """
    index: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    components: list[frozenset[int]] = []
    counter = 0

    for start in range(1, g.n + 1):
        if start in index:
            continue
        # Explicit DFS stack of (vertex, iterator position).
        work = [(start, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            outs = g.out_neighbors(v)
            for idx in range(pos, len(outs)):
                w = outs[idx]
                if w not in index:
                    work.append((v, idx + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if recurse:
                continue
            if lowlink[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                components.append(frozenset(comp))
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
    return components


def root_set(g: Digraph) -> frozenset[int]:
    """Vertices from which every vertex is reachable by a directed path.

    Computed via condensation: the root set equals the members of the unique
    source component of the condensation when exactly one source exists, and
    is empty otherwise (in a condensation DAG every component is reachable
    from some source, so a unique source reaches them all).
    """
    comps = strongly_connected_components(g)
    comp_of: dict[int, int] = {}
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci
    has_incoming = [False] * len(comps)
    for p, c in g.edges:
        if comp_of[p] != comp_of[c]:
            has_incoming[comp_of[c]] = True
    sources = [ci for ci in range(len(comps)) if not has_incoming[ci]]
    if len(sources) != 1:
        return frozenset()
    return comps[sources[0]]


def is_strongly_connected(g: Digraph) -> bool:
    """True iff every ordered vertex pair is joined by a directed path."""
    return len(strongly_connected_components(g)) == 1


def reachable_from(g: Digraph, r: int) -> frozenset[int]:
    """Vertices reachable from ``r`` (including ``r``), by BFS."""
    seen = {r}
    frontier = [r]
    while frontier:
        nxt = []
        for v in frontier:
            for w in g.out_neighbors(v):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return frozenset(seen)


def random_strongly_connected(n: int, m: int, seed: int) -> Digraph:
    """Random strongly connected digraph with exactly ``m`` edges.

    A directed Hamiltonian cycle over a seeded random vertex order guarantees
    strong connectivity; the remaining ``m - n`` edges are drawn uniformly
    without replacement from the unused ordered pairs.  Deterministic in
    ``seed``.
    """
    if n < 2:
        raise ValueError("need at least two agents to close a directed cycle")
    if m < n:
        raise ValueError(f"need m >= n to close a cycle, got m={m} < n={n}")
    if m > n * (n - 1):
        raise ValueError(f"m={m} exceeds the {n * (n - 1)} possible edges")
    rng = np.random.default_rng(seed)
    order = [int(v) + 1 for v in rng.permutation(n)]
    cycle = {(order[i], order[(i + 1) % n]) for i in range(n)}
    candidates = sorted(
        (p, c)
        for p in range(1, n + 1)
        for c in range(1, n + 1)
        if p != c and (p, c) not in cycle
    )
    extra_count = m - len(cycle)
    picked = rng.choice(len(candidates), size=extra_count, replace=False)
    extra = {candidates[int(i)] for i in picked}
    return Digraph(n, frozenset(cycle) | frozenset(extra))


def _subset_strongly_connected(g: Digraph, vertices: list[int]) -> bool:
    """Strong connectivity of the subgraph induced by ``vertices``."""
    if len(vertices) == 1:
        return True
    relabel = {v: i + 1 for i, v in enumerate(vertices)}
    sub_edges = [
        (relabel[p], relabel[c])
        for p, c in g.edges
        if p in relabel and c in relabel
    ]
    return is_strongly_connected(Digraph.from_edges(len(vertices), sub_edges))


def leader_follower_split(
    g: Digraph, leaders: Iterable[int], seed: int
) -> tuple[Digraph, Digraph, frozenset[Edge]]:
    """Split a strongly connected graph into pull/push graphs for a leader subnet.

    The leaders are made mutually strongly connected by adding a seeded random
    cycle over them.  The pull graph drops every edge from a follower into the
    leader set; the push graph drops every edge from a leader to a follower.
    Leader-subnet edges (returned third, for protection in time-varying
    sequences) are kept in both.

    Returns
    -------
    (g_pull, g_push, leader_edges)
        ``g_pull`` has the leaders among its spanning-tree roots; the reverse
        of ``g_push`` does too.
    """
    leader_list = sorted(set(int(i) for i in leaders))
    if not leader_list:
        raise ValueError("leader set must be nonempty")
    for i in leader_list:
        if not (1 <= i <= g.n):
            raise ValueError(f"leader id {i} out of range")
    if not is_strongly_connected(g):
        raise ValueError("base graph must be strongly connected")
    leader_set = set(leader_list)

    subnet: set[Edge] = set()
    if not _subset_strongly_connected(g, leader_list):
        # Add just enough seeded links: a random cycle over the leaders.
        rng = np.random.default_rng(seed)
        order = [leader_list[int(i)] for i in rng.permutation(len(leader_list))]
        subnet = {(order[i], order[(i + 1) % len(order)]) for i in range(len(order))}
    leader_edges = frozenset(subnet) | frozenset(
        (p, c) for p, c in g.edges if p in leader_set and c in leader_set
    )

    augmented = g.with_edges(subnet)
    into_leaders = {
        (p, c) for p, c in augmented.edges if p not in leader_set and c in leader_set
    }
    out_of_leaders = {
        (p, c) for p, c in augmented.edges if p in leader_set and c not in leader_set
    }
    g_pull = augmented.without_edges(into_leaders)
    g_push = augmented.without_edges(out_of_leaders)

    if not leader_set <= root_set(g_pull):
        raise ValueError("pruning left the leaders unable to reach every follower")
    if not leader_set <= root_set(g_push.reverse()):
        raise ValueError("pruning left some follower unable to report to the leaders")
    return g_pull, g_push, leader_edges


def write_edge_list(g: Digraph, path) -> None:
    """Plain-text edge list: first line ``n m``, then one ``parent child`` per line."""
    lines = [f"{g.n} {len(g.edges)}"]
    lines += [f"{p} {c}" for p, c in g.sorted_edges]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_edge_list(path) -> Digraph:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: expected a header line 'n m'")
    n, m = int(tokens[0]), int(tokens[1])
    body = tokens[2:]
    if len(body) != 2 * m:
        raise ValueError(f"{path}: header promises {m} edges, found {len(body) // 2}")
    edges = [(int(body[2 * i]), int(body[2 * i + 1])) for i in range(m)]
    return Digraph.from_edges(n, edges)
