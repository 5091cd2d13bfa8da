"""Monte-Carlo oracles for the analysis moments ``E[B]``, ``E[kron(B.T, B.T)]`` and ``R_v``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceError
from .network_model import CombinationMatrix
from .selection import SchemeKind, build_partition
from .signal_model import LinkNoiseProfile
from .theory import (
    _block_form,
    link_noise_covariance,
    mean_matrix_Q,
    second_moment_Phi,
)

PHI_CHECK_MAX_NM = 12
CHUNK = 4096

# samplers: partition-based schemes plus the two subset samplers whose pair
# moments the analysis formulas reproduce exactly
SAMPLERS = ("sequential", "stochastic", "uniform-subset", "shared-subset")


def sample_selections(sampler: str, N: int, M: int, L: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent network-wide selection draws, shape ``(n, N, M)``.

    ``sequential`` draws one uniformly random phase of the round-robin per
    realisation and applies it to every node.
    """
    if sampler in ("sequential", "stochastic"):
        masks = build_partition(M, L).masks()
        shape = (n, 1) if sampler == "sequential" else (n, N)
        out = masks[rng.integers(len(masks), size=shape)]
        return np.broadcast_to(out, (n, N, M)).copy()
    if sampler in ("uniform-subset", "shared-subset"):
        k = 1 if sampler == "shared-subset" else N
        ranks = rng.random((n, k, M)).argsort(axis=-1).argsort(axis=-1)
        return np.broadcast_to(ranks < L, (n, N, M)).copy()
    raise ValueError(f"unknown sampler {sampler!r}")


def sample_transition_matrices(A: CombinationMatrix, sel: np.ndarray) -> np.ndarray:
    """Batch of realised ``B`` matrices, shape ``(n, NM, NM)``."""
    n, N, M = sel.shape
    form = _block_form(A)
    s = sel.astype(float)
    diag = (
        form.c0[None, :, None]
        + np.einsum("bl,nlm->nbm", form.csel, s)
        + np.einsum("bl,nlm->nbm", form.cuns, 1 - s)
    )
    B = np.zeros((n, N * M, N * M))
    t = np.arange(M)
    rows = (form.rows[:, None] * M + t).ravel()
    cols = (form.cols[:, None] * M + t).ravel()
    B[:, rows, cols] = diag.reshape(n, -1)
    return B


def mc_mean_B(A, sampler, L, M, draws, rng) -> np.ndarray:
    N = A.n_nodes
    total = np.zeros((N * M, N * M))
    done = 0
    while done < draws:
        n = min(CHUNK, draws - done)
        total += sample_transition_matrices(A, sample_selections(sampler, N, M, L, n, rng)).sum(axis=0)
        done += n
    return total / draws


def mc_phi(A, sampler, L, M, draws, rng) -> np.ndarray:
    N = A.n_nodes
    NM = N * M
    total = np.zeros((NM, NM, NM, NM))
    done = 0
    while done < draws:
        n = min(CHUNK, draws - done)
        Bt = np.swapaxes(sample_transition_matrices(A, sample_selections(sampler, N, M, L, n, rng)), 1, 2)
        # sum_n Bt[n,i,j] Bt[n,k,l], arranged as kron's (i,k),(j,l)
        total += np.tensordot(Bt, Bt, axes=([0], [0])).transpose(0, 2, 1, 3)
        done += n
    return total.reshape(NM * NM, NM * NM) / draws


def mc_link_noise(A, link_profile: LinkNoiseProfile, sampler, L, M, draws, rng):
    """Sample covariance of the aggregate received noise and its entrywise standard error."""
    N = A.n_nodes
    a = A.weights
    links = link_profile.links
    src, dst = links.sources, links.sinks
    coef = a[src, dst] * np.sqrt(link_profile.sigma2_psi)
    sink_of = np.zeros((len(links), N))
    sink_of[np.arange(len(links)), dst] = 1.0
    s1 = np.zeros((N * M, N * M))
    s2 = np.zeros_like(s1)
    done = 0
    while done < draws:
        n = min(CHUNK, draws - done)
        sel = sample_selections(sampler, N, M, L, n, rng)
        z = rng.standard_normal((n, len(links), M))
        x = np.einsum("ek,nem->nkm", sink_of, coef[None, :, None] * sel[:, src] * z).reshape(n, N * M)
        prod = x[:, :, None] * x[:, None, :]
        s1 += prod.sum(axis=0)
        s2 += (prod ** 2).sum(axis=0)
        done += n
    mean = s1 / draws
    var = np.maximum(s2 / draws - mean ** 2, 0.0)
    return mean, np.sqrt(var / draws)


@dataclass
class MomentCheck:
    name: str
    max_error: float
    threshold: float
    location: tuple[int, ...]
    draws: int
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.threshold)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name}: max error {self.max_error:.3e} "
            f"(threshold {self.threshold:.1e}) at {self.location}, {self.draws} draws {self.note}".rstrip()
        )


@dataclass
class MomentReport:
    checks: list[MomentCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "max_error": c.max_error,
                    "threshold": c.threshold,
                    "location": list(c.location),
                    "draws": c.draws,
                }
                for c in self.checks
            ],
        }


def _max_err(diff: np.ndarray) -> tuple[float, tuple[int, ...]]:
    idx = np.unravel_index(np.argmax(np.abs(diff)), diff.shape)
    return float(abs(diff[idx])), tuple(int(i) for i in idx)


def phi_sampler(kind) -> str:
    return "shared-subset" if SchemeKind(kind) is SchemeKind.SEQUENTIAL else "uniform-subset"


def first_moment_sampler(kind, L: int, M: int) -> str:
    """The scheme's own sampler when its entry frequencies equal ``L/M``, else the subset sampler."""
    if M % L == 0:
        return SchemeKind(kind).value
    return phi_sampler(kind)


def check_Q(A, kind, L, M, draws=100_000, rng=None, Q=None, threshold=5e-3, sampler=None) -> MomentCheck:
    rng = np.random.default_rng(0) if rng is None else rng
    Q = mean_matrix_Q(A, L / M, M) if Q is None else Q
    sampler = sampler or first_moment_sampler(kind, L, M)
    err, loc = _max_err(mc_mean_B(A, sampler, L, M, draws, rng) - Q)
    return MomentCheck("E[B] vs Q", err, threshold, loc, draws, f"({sampler} sampler)")


def check_Phi(A, kind, L, M, draws=200_000, rng=None, Phi=None, threshold=1e-2) -> MomentCheck:
    N = A.n_nodes
    if N * M > PHI_CHECK_MAX_NM:
        raise ResourceError(f"Phi oracle limited to N*M <= {PHI_CHECK_MAX_NM}, got {N * M}")
    rng = np.random.default_rng(1) if rng is None else rng
    Phi = second_moment_Phi(A, kind, L, M, dense=True) if Phi is None else Phi
    sampler = phi_sampler(kind)
    err, loc = _max_err(mc_phi(A, sampler, L, M, draws, rng) - Phi)
    return MomentCheck("E[kron(B.T,B.T)] vs Phi", err, threshold, loc, draws, f"({sampler} sampler)")


def check_link_noise(
    A, link_profile, kind, L, M, draws=100_000, rng=None, Rv=None, n_sigma=3.0, sampler=None
) -> MomentCheck:
    """Largest standardised deviation over the diagonal blocks; passes when within ``n_sigma``."""
    rng = np.random.default_rng(2) if rng is None else rng
    Rv = link_noise_covariance(A, link_profile, L / M, M) if Rv is None else Rv
    sampler = sampler or first_moment_sampler(kind, L, M)
    mean, se = mc_link_noise(A, link_profile, sampler, L, M, draws, rng)
    N = A.n_nodes
    in_block = np.kron(np.eye(N, dtype=bool), np.ones((M, M), dtype=bool))
    diff = np.where(in_block, mean - Rv, 0.0)
    z = np.where(se > 0, np.abs(diff) / np.where(se > 0, se, 1.0), np.where(np.abs(diff) > 1e-15, np.inf, 0.0))
    zmax, loc = _max_err(z)
    return MomentCheck("aggregate link-noise covariance vs Rv (sigmas)", zmax, n_sigma, loc, draws,
                       f"({sampler} sampler)")


def validate_moments(
    A: CombinationMatrix,
    link_profile: LinkNoiseProfile,
    kind,
    L: int,
    M: int,
    seed: int = 0,
    q_draws: int = 100_000,
    phi_draws: int = 200_000,
    noise_draws: int = 100_000,
    Q=None,
    Phi=None,
    Rv=None,
) -> MomentReport:
    """Run all three oracles. Supplying ``Q``/``Phi``/``Rv`` checks those matrices instead."""
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    return MomentReport([
        check_Q(A, kind, L, M, q_draws, rngs[0], Q=Q),
        check_Phi(A, kind, L, M, phi_draws, rngs[1], Phi=Phi),
        check_link_noise(A, link_profile, kind, L, M, noise_draws, rngs[2], Rv=Rv),
    ])
