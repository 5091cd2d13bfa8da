"""Partial-diffusion RLS: local adaptation, noisy partial combination, network step.

Node quantities are stored stacked: ``w`` and ``psi`` are ``(N, M)`` and
``P`` is ``(N, M, M)``. Row ``k`` belongs to node ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError
from .network_model import CombinationMatrix, LinkIndex, enumerate_links
from .selection import SelectionScheme, select
from .signal_model import BatchDataset, GroundTruth, LinkNoiseProfile


@dataclass
class NodeState:
    w: np.ndarray
    psi: np.ndarray
    P: np.ndarray

    @property
    def M(self) -> int:
        return self.w.shape[0]


@dataclass
class NetworkState:
    w: np.ndarray
    psi: np.ndarray
    P: np.ndarray
    iteration: int = 0

    @property
    def n_nodes(self) -> int:
        return self.w.shape[0]

    @property
    def M(self) -> int:
        return self.w.shape[1]

    @property
    def nodes(self) -> list[NodeState]:
        return [NodeState(self.w[k], self.psi[k], self.P[k]) for k in range(self.n_nodes)]

    @classmethod
    def from_nodes(cls, nodes: list[NodeState], iteration: int = 0) -> "NetworkState":
        Ms = {n.M for n in nodes}
        if len(Ms) != 1:
            raise ConfigError(f"all nodes must share one dimension, got {sorted(Ms)}")
        return cls(
            np.stack([n.w for n in nodes]),
            np.stack([n.psi for n in nodes]),
            np.stack([n.P for n in nodes]),
            iteration,
        )

    def copy(self) -> "NetworkState":
        return NetworkState(self.w.copy(), self.psi.copy(), self.P.copy(), self.iteration)


def rls_init(M: int, delta: float = 0.01, dtype=float) -> NodeState:
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    return NodeState(np.zeros(M, dtype), np.zeros(M, dtype), np.eye(M, dtype=dtype) / delta)


def network_init(n_nodes: int, M: int, delta: float = 0.01, dtype=float) -> NetworkState:
    return NetworkState.from_nodes([rls_init(M, delta, dtype) for _ in range(n_nodes)])


def adapt(w, P, U, d, lam: float, symmetrize: bool = True):
    """Vectorised RLS update for stacked nodes.

    ``w``: (..., M) prior estimates, ``P``: (..., M, M), ``U``: (..., M)
    regressor rows, ``d``: (...,) measurements. Returns ``(P_new, psi)``.
    """
    Uh = U.conj()
    Pu = np.einsum("...ij,...j->...i", P, Uh)
    denom = lam + np.einsum("...i,...i->...", U, Pu)
    P_new = (P - Pu[..., :, None] * Pu.conj()[..., None, :] / denom[..., None, None]) / lam
    if symmetrize:
        P_new = 0.5 * (P_new + np.swapaxes(P_new, -1, -2).conj())
    err = d - np.einsum("...i,...i->...", U, w)
    gain = np.einsum("...ij,...j->...i", P_new, Uh)
    return P_new, w + gain * err[..., None]


def rls_adapt(state: NodeState, u, d, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """One RLS step at a single node, using the combined estimate ``w`` as the prior."""
    u = np.asarray(u)
    if u.shape != (state.M,):
        raise ConfigError(f"regressor must have length {state.M}")
    if not (0 < lam <= 1):
        raise ConfigError(f"forgetting factor must lie in (0, 1], got {lam}")
    if not (np.all(np.isfinite(u)) and np.isfinite(d) and np.all(np.isfinite(state.P))
            and np.all(np.isfinite(state.w))):
        raise DomainError("non-finite input to rls_adapt")
    return adapt(state.w, state.P, u, np.asarray(d), lam)


def combine_partial(
    k: int,
    own_psi: np.ndarray,
    received: Mapping[int, tuple[np.ndarray, np.ndarray]],
    A: CombinationMatrix,
) -> np.ndarray:
    """Partial-diffusion combination at node ``k``.

    ``received[l]`` is ``(mask, values)``: the selection diagonal of node ``l``
    and the (noisy) entries it transmitted, in index order, one per set bit.
    Entries that were not transmitted are replaced by node ``k``'s own.
    """
    expected = set(A.topology.neighbors(k))
    if set(received) != expected:
        raise ConfigError(
            f"node {k} expects data from {sorted(expected)}, got {sorted(received)}"
        )
    a = A.weights
    w = a[k, k] * own_psi
    for l in sorted(received):
        mask, values = received[l]
        mask = np.asarray(mask, dtype=bool)
        values = np.asarray(values)
        if values.shape != (int(mask.sum()),):
            raise ConfigError(
                f"link {l}->{k}: {mask.sum()} entries selected but {values.shape} received"
            )
        filled = own_psi.copy()
        filled[mask] = values
        w = w + a[l, k] * filled
    return w


def combine(psi, sel, link_noise, A: CombinationMatrix, links: LinkIndex):
    """Vectorised partial combination for every node.

    ``psi``: (N, M); ``sel``: (N, M) bool, diagonal of each source's
    selection; ``link_noise``: (n_links, M), row ``e`` perturbs link ``e``.
    """
    a = A.weights
    w = np.diag(a)[:, None] * psi
    if len(links) == 0:
        return w
    src, dst = links.sources, links.sinks
    K = sel[src]
    contrib = a[src, dst][:, None] * np.where(K, psi[src] + link_noise, psi[dst])
    np.add.at(w, dst, contrib)
    return w


def network_step(
    state: NetworkState,
    U: np.ndarray,
    d: np.ndarray,
    scheme: SelectionScheme,
    A: CombinationMatrix,
    link_profile: LinkNoiseProfile,
    lam: float,
    rng: np.random.Generator | None = None,
    selection: np.ndarray | None = None,
    link_noise: np.ndarray | None = None,
) -> NetworkState:
    """Adapt at every node, then combine the partially transmitted estimates.

    Selections and link noise are drawn from ``rng`` unless supplied.
    """
    N, M = state.n_nodes, state.M
    links = link_profile.links
    if U.shape != (N, M) or np.shape(d) != (N,):
        raise ConfigError(f"expected U of shape {(N, M)} and d of shape {(N,)}")
    if selection is None:
        selection = np.stack([select(scheme, k, state.iteration, rng) for k in range(N)])
    if link_noise is None:
        if rng is None:
            raise ConfigError("rng is required to draw link noise")
        link_noise = np.sqrt(link_profile.sigma2_psi)[:, None] * rng.standard_normal((len(links), M))

    P, psi = adapt(state.w, state.P, U, d, lam)
    w = combine(psi, selection, link_noise, A, links)
    return NetworkState(w, psi, P, state.iteration + 1)


def batch_ls_solve(dataset: BatchDataset, delta: float | None = None) -> np.ndarray:
    """Weighted LS solution of the stacked data.

    With ``delta`` the normal matrix gets ``delta * lam**n * I`` added, which
    is what an RLS run started from ``P = I / delta`` and zero estimate solves.
    """
    H, y, lw = dataset.H, dataset.y, dataset.lambda_weights
    Hh = H.conj().T
    normal = (Hh * lw) @ H
    if delta is not None:
        normal = normal + delta * dataset.lam ** dataset.n_samples * np.eye(H.shape[1])
    elif np.linalg.matrix_rank(normal) < H.shape[1]:
        raise DomainError("normal matrix is singular; pass delta to regularise")
    return np.linalg.solve(normal, (Hh * lw) @ y)


def error_vectors(state: NetworkState, w_o: GroundTruth) -> np.ndarray:
    """Stacked ``w_o - w_k`` over nodes, length ``N*M``."""
    if state.M != w_o.M:
        raise ConfigError("dimension mismatch between state and ground truth")
    return (w_o.w_o[None, :] - state.w).reshape(-1)


def links_for(A: CombinationMatrix) -> LinkIndex:
    return enumerate_links(A.topology)
