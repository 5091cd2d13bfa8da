import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdrls.errors import ConfigError
from pdrls.network_model import (
    CombinationMatrix,
    Topology,
    build_uniform_combination,
    enumerate_links,
    generate_random_topology,
)

from conftest import chain


def test_two_node_topology_is_full():
    for seed in range(5):
        topo = generate_random_topology(2, 1.0, seed)
        assert topo.adjacency.all()


def test_generation_is_deterministic():
    a = generate_random_topology(10, 2.0, 42)
    b = generate_random_topology(10, 2.0, 42)
    np.testing.assert_array_equal(a.adjacency, b.adjacency)


def test_mean_degree_over_seeds():
    degs = [generate_random_topology(10, 2.0, s).degrees.mean() for s in range(1000)]
    assert 1.6 <= np.mean(degs) <= 2.4


@pytest.mark.parametrize("n, d", [(1, 1.0), (5, 0.5), (5, 4.5)])
def test_generation_rejects_bad_arguments(n, d):
    with pytest.raises(ConfigError):
        generate_random_topology(n, d, 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 12), frac=st.floats(0, 1), seed=st.integers(0, 2**32))
def test_generated_topology_invariants(n, frac, seed):
    d = 1 + frac * (n - 2)
    topo = generate_random_topology(n, d, seed)
    adj = topo.adjacency
    assert np.array_equal(adj, adj.T)
    assert adj.diagonal().all()
    # connectivity by breadth-first search, independent of the constructor's check
    seen, frontier = {0}, [0]
    while frontier:
        k = frontier.pop()
        for l in np.flatnonzero(adj[k]):
            if l not in seen:
                seen.add(int(l))
                frontier.append(int(l))
    assert len(seen) == n
    A = build_uniform_combination(topo)
    np.testing.assert_allclose(A.weights.sum(axis=0), 1.0, rtol=0, atol=1e-14)
    assert np.array_equal(A.weights > 0, adj)


def test_topology_validation():
    with pytest.raises(ConfigError):
        Topology(np.array([[1, 1], [0, 1]], dtype=bool))
    with pytest.raises(ConfigError):
        Topology(np.eye(3, dtype=bool))  # disconnected
    with pytest.raises(ConfigError):
        Topology.from_edges(2, [(0, 2)])


def test_uniform_weights_two_nodes():
    A = build_uniform_combination(Topology(np.ones((2, 2), dtype=bool)))
    np.testing.assert_array_equal(A.weights, np.full((2, 2), 0.5))


def test_uniform_weights_star_centre():
    topo = Topology.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    A = build_uniform_combination(topo)
    np.testing.assert_array_equal(A.weights[:, 0], np.full(4, 0.25))
    np.testing.assert_array_equal(A.weights[:, 1], [0.5, 0.5, 0, 0])
    assert np.max(np.abs(A.weights.sum(axis=0) - 1)) <= 1e-15


def test_combination_matrix_validation():
    topo = chain(3)
    good = build_uniform_combination(topo).weights
    with pytest.raises(ConfigError, match="sum to one"):
        CombinationMatrix(good * 0.9, topo)
    bad = good.copy()
    bad[0, 2] = 0.1
    bad[2, 2] -= 0.1
    with pytest.raises(ConfigError, match="non-neighbours"):
        CombinationMatrix(bad, topo)
    neg = np.array([[1.5, 0.5, 0], [-0.5, 0.25, 0.5], [0, 0.25, 0.5]])
    with pytest.raises(ConfigError):
        CombinationMatrix(neg, topo)


def test_links_two_nodes():
    links = enumerate_links(Topology(np.ones((2, 2), dtype=bool)))
    # (source, sink): link from node 1 into node 0 first
    assert list(links) == [(1, 0), (0, 1)]


def test_links_chain():
    assert list(enumerate_links(chain(3))) == [(1, 0), (0, 1), (2, 1), (1, 2)]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 10_000))
def test_link_count_and_order(n, seed):
    topo = generate_random_topology(n, min(2.0, n - 1), seed)
    links = enumerate_links(topo)
    assert len(links) == int(topo.degrees.sum())
    assert list(links) == sorted(links, key=lambda e: (e[1], e[0]))
    assert len(set(links)) == len(links)
    for l, k in links:
        assert l != k and topo.adjacency[l, k]
    assert links.position(links.links[-1]) == len(links) - 1
    with pytest.raises(ConfigError):
        links.position((0, 0))
