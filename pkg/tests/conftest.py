import numpy as np
import pytest

import pushpull as pp


def star_graphs():
    """Four-agent star: center 1 diffuses x outward and collects y inward."""
    pull = pp.Digraph.from_edges(4, [(1, 2), (1, 3), (1, 4)])
    return pull, pull.reverse()


def four_ring_chord():
    """The 4-agent ring 1->2->3->4->1 with the extra link 1->3."""
    return pp.Digraph.from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)])


def random_arborescence(n, root, rng):
    """Random directed tree rooted at ``root`` covering all n vertices."""
    others = [v for v in range(1, n + 1) if v != root]
    rng.shuffle(others)
    order = [root] + list(others)
    edges = set()
    for idx in range(1, n):
        parent = order[int(rng.integers(idx))]
        edges.add((parent, order[idx]))
    return edges


def random_rooted_pair(n, seed, extra_prob=0.25):
    """A (pull, push) graph pair sharing at least one spanning-tree root.

    The pull graph contains an arborescence out of the root; the push graph
    contains one into it (so its reverse is rooted there too).  Extra edges
    are sprinkled independently.
    """
    rng = np.random.default_rng(seed)
    root = int(rng.integers(n)) + 1
    pull_edges = random_arborescence(n, root, rng)
    push_edges = {(c, p) for p, c in random_arborescence(n, root, rng)}
    for p in range(1, n + 1):
        for c in range(1, n + 1):
            if p == c:
                continue
            if rng.random() < extra_prob:
                pull_edges.add((p, c))
            if rng.random() < extra_prob:
                push_edges.add((p, c))
    return (
        pp.Digraph.from_edges(n, pull_edges),
        pp.Digraph.from_edges(n, push_edges),
        root,
    )


@pytest.fixture
def star_pair():
    return pp.MixingPair.from_graphs(*star_graphs())


@pytest.fixture
def ring3_pair():
    ring = pp.Digraph.from_edges(3, [(1, 2), (2, 3), (3, 1)])
    return pp.MixingPair.from_graphs(ring, ring)
