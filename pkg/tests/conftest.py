import itertools

import numpy as np
import pytest

from pdrls.network_model import Topology, build_uniform_combination, enumerate_links
from pdrls.signal_model import LinkNoiseProfile, NodeProfile

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def chain(n: int) -> Topology:
    return Topology.from_edges(n, [(k, k + 1) for k in range(n - 1)])


def literal_B(A: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Transition matrix written term by term from the partial combination rule.

    ``w_p = a_pp psi_p + sum_{q != p} a_qp (K_q psi_q + (I - K_q) psi_p)`` gives
    block (p, p) = a_pp I + sum_{q != p} a_qp (I - K_q) and block (p, q) = a_qp K_q.
    """
    N, M = K.shape
    B = np.zeros((N * M, N * M))
    I = np.eye(M)
    for p in range(N):
        diag = A[p, p] * I
        for q in range(N):
            if q == p or A[q, p] == 0:
                continue
            Kq = np.diag(K[q].astype(float))
            diag = diag + A[q, p] * (I - Kq)
            B[p * M:(p + 1) * M, q * M:(q + 1) * M] = A[q, p] * Kq
        B[p * M:(p + 1) * M, p * M:(p + 1) * M] = diag
    return B


def all_subsets(M: int, L: int) -> list[np.ndarray]:
    out = []
    for idx in itertools.combinations(range(M), L):
        m = np.zeros(M, dtype=bool)
        m[list(idx)] = True
        out.append(m)
    return out


@pytest.fixture
def chain3():
    topo = chain(3)
    return build_uniform_combination(topo)


@pytest.fixture
def flat_profiles():
    def make(N, M, r_u=1.0, sigma2_v=0.01):
        return [NodeProfile(np.full(M, r_u), sigma2_v) for _ in range(N)]
    return make


@pytest.fixture
def link_profile_const():
    def make(A, s2):
        links = enumerate_links(A.topology)
        return LinkNoiseProfile(links, np.full(len(links), s2))
    return make
