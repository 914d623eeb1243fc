"""Shared helpers: fixture graphs and brute-force oracles."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from gnncert import Graph


def random_graph(rng, n=None, p_edge=0.3, directed=False, d=None) -> Graph:
    """Erdos-Renyi style fixture graph with random features."""
    if n is None:
        n = int(rng.integers(4, 11))
    edges = [
        (i, j)
        for i in range(n)
        for j in range(n)
        if i != j and (directed or i < j) and rng.random() < p_edge
    ]
    d = d or int(rng.integers(2, 5))
    features = rng.normal(size=(n, d))
    return Graph.build(n=n, edges=edges, features=features, directed=directed)


def random_tree(rng, n) -> Graph:
    """Uniform-ish random tree: each node attaches to an earlier node."""
    edges = [(i, int(rng.integers(0, i))) for i in range(1, n)]
    return Graph.build(n=n, edges=edges, features=np.eye(n), directed=False)


def brute_force_paths(g: Graph, v: int, k: int) -> dict[int, set]:
    """All simple paths of length <= k ending at v, by sequence enumeration."""
    edge_set = {(int(a), int(b)) for a, b in g.edges}
    found: dict[int, set] = {}
    for length in range(1, k + 1):
        for seq in itertools.permutations(range(g.n), length):
            if v in seq:
                continue
            nodes = seq + (v,)
            path = tuple(zip(nodes[:-1], nodes[1:]))
            if all(e in edge_set for e in path):
                found.setdefault(nodes[0], set()).add(path)
    return found


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def two_block_graph(rng, n=200, p_in=0.05, p_out=0.005, d=32,
                    hi=0.35, lo=0.05) -> Graph:
    """Separable two-community fixture: block-correlated binary features."""
    half = n // 2
    labels = np.array([0] * half + [1] * (n - half))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if labels[i] == labels[j] else p_out
            if rng.random() < p:
                edges.append((i, j))
    features = np.zeros((n, d))
    for i in range(n):
        probs = np.full(d, lo)
        if labels[i] == 0:
            probs[: d // 2] = hi
        else:
            probs[d // 2:] = hi
        features[i] = (rng.random(d) < probs).astype(float)
    return Graph.build(n=n, edges=edges, features=features, labels=labels)
