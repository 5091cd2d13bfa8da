"""Topologies, combination weights and directed-link ordering."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Topology:
    """Undirected, reflexive, connected graph over nodes ``0..n_nodes-1``."""

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ConfigError(f"adjacency must be square, got shape {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ConfigError("adjacency must be symmetric")
        np.fill_diagonal(adj, True)
        if not nx.is_connected(nx.from_numpy_array(adj.astype(int))):
            raise ConfigError("topology is not connected")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def neighborhood(self, k: int) -> list[int]:
        """Ordered neighbourhood of ``k``, including ``k`` itself."""
        return [int(l) for l in np.flatnonzero(self.adjacency[:, k])]

    def neighbors(self, k: int) -> list[int]:
        return [l for l in self.neighborhood(k) if l != k]

    @property
    def degrees(self) -> np.ndarray:
        """Number of non-self neighbours per node."""
        return self.adjacency.sum(axis=0) - 1

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence[int]]) -> "Topology":
        adj = np.eye(n_nodes, dtype=bool)
        for l, k in edges:
            if not (0 <= l < n_nodes and 0 <= k < n_nodes):
                raise ConfigError(f"edge ({l}, {k}) out of range for {n_nodes} nodes")
            adj[l, k] = adj[k, l] = True
        return cls(adj)

    def edges(self) -> list[tuple[int, int]]:
        l, k = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b)) for a, b in zip(l, k)]


@dataclass(frozen=True)
class CombinationMatrix:
    """Weights ``a_lk`` (row = source l, column = sink k); columns sum to one."""

    weights: np.ndarray
    topology: Topology = field(repr=False)

    def __post_init__(self):
        A = np.array(self.weights, dtype=float)
        n = self.topology.n_nodes
        if A.shape != (n, n):
            raise ConfigError(f"combination matrix must be {n}x{n}, got {A.shape}")
        if np.any(A < 0) or np.any(A > 1):
            raise ConfigError("combination weights must lie in [0, 1]")
        if np.any(A[~self.topology.adjacency] != 0):
            raise ConfigError("nonzero weight between non-neighbours")
        if not np.allclose(A.sum(axis=0), 1.0, rtol=0, atol=1e-12):
            raise ConfigError("every column of the combination matrix must sum to one")
        A.setflags(write=False)
        object.__setattr__(self, "weights", A)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LinkIndex:
    """Directed links ``(source, sink)`` grouped by ascending sink, then source."""

    links: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self):
        return iter(self.links)

    def position(self, link: tuple[int, int]) -> int:
        try:
            return self.links.index(tuple(link))
        except ValueError:
            raise ConfigError(f"unknown link {link}") from None

    @property
    def sources(self) -> np.ndarray:
        return np.array([l for l, _ in self.links], dtype=int)

    @property
    def sinks(self) -> np.ndarray:
        return np.array([k for _, k in self.links], dtype=int)


def generate_random_topology(n_nodes: int, target_avg_degree: float, seed: int) -> Topology:
    """Random connected topology with a prescribed expected non-self degree.

    A random recursive spanning tree guarantees connectivity; every remaining
    node pair is then linked independently with the probability that brings
    the expected edge count to ``n_nodes * target_avg_degree / 2``. Degrees
    below what a tree already provides are clamped to the tree.
    """
    if n_nodes < 2:
        raise ConfigError("need at least two nodes")
    if target_avg_degree < 1:
        raise ConfigError("target_avg_degree < 1 cannot guarantee connectivity")
    if target_avg_degree > n_nodes - 1:
        raise ConfigError(f"target_avg_degree exceeds n_nodes - 1 = {n_nodes - 1}")

    rng = np.random.default_rng(seed)
    adj = np.eye(n_nodes, dtype=bool)
    order = rng.permutation(n_nodes)
    for pos in range(1, n_nodes):
        parent = order[rng.integers(pos)]
        adj[order[pos], parent] = adj[parent, order[pos]] = True

    tree_edges = n_nodes - 1
    free_pairs = comb(n_nodes, 2) - tree_edges
    wanted = n_nodes * target_avg_degree / 2 - tree_edges
    if wanted < 0:
        log.warning(
            "target degree %.3g below tree degree %.3g; using a bare spanning tree",
            target_avg_degree, 2 * tree_edges / n_nodes,
        )
    p_extra = min(max(wanted, 0.0) / free_pairs, 1.0) if free_pairs else 0.0
    coin = rng.random((n_nodes, n_nodes)) < p_extra
    extra = np.triu(coin, 1) & ~adj
    adj |= extra | extra.T
    return Topology(adj)


def build_uniform_combination(topology: Topology) -> CombinationMatrix:
    adj = topology.adjacency.astype(float)
    return CombinationMatrix(adj / adj.sum(axis=0, keepdims=True), topology)


def enumerate_links(topology: Topology) -> LinkIndex:
    links = []
    for k in range(topology.n_nodes):
        links.extend((l, k) for l in topology.neighbors(k))
    return LinkIndex(tuple(links))
