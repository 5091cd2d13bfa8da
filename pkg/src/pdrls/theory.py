"""Mean and mean-square analysis of partial-diffusion RLS under noisy links.

Conventions: network vectors stack nodes, node ``k`` occupying rows
``k*M .. k*M+M-1``. ``vec`` stacks columns (Fortran order), so
``vec(U X W) = kron(W.T, U) @ vec(X)`` with numpy's ``kron``.

Every block of the random transition matrix ``B`` is diagonal, and entry
``t`` of block ``(p, q)`` is affine in the selection bits ``kappa_{l,t}``:

* diagonal block ``p``: ``a_pp + sum_{l in N_p \\ p} a_lp (1 - kappa_{l,t})``
* off-diagonal ``(p, q)``, ``q`` a neighbour: ``a_qp kappa_{q,t}``

(the diagonal form uses that column ``p`` of ``A`` sums to one). All
coefficients are nonnegative, so first and second moments of ``B`` follow
from the first and pairwise moments of the selection bits and stay
nonnegative in floating point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DomainError, ResourceError
from .network_model import CombinationMatrix
from .selection import SchemeKind, transmission_probability
from .signal_model import GroundTruth, LinkNoiseProfile, NodeProfile

log = logging.getLogger(__name__)

MAX_NM = 128
DENSE_EIG_LIMIT = 600


def vec(X) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, n: int) -> np.ndarray:
    return np.asarray(x).reshape(n, n, order="F")


def _check_size(N: int, M: int) -> None:
    if N * M > MAX_NM:
        raise ResourceError(
            f"N*M = {N * M} exceeds {MAX_NM}; the second-moment matrix would have {(N * M) ** 4:.3g} entries"
        )


def _check_rho(L: int, M: int) -> float:
    rho = transmission_probability(L, M)
    if M % L:
        log.warning("L=%d does not divide M=%d; analysis uses nominal rho = L/M", L, M)
    return rho


# ---------------------------------------------------------------------------
# selection moments

def pair_moments(L: int, M: int) -> dict[str, np.ndarray]:
    """Pairwise selection moments within one node, as ``M x M`` matrices.

    Keys ``ss``, ``su``, ``uu`` hold ``E[k_t1 k_t2]``, ``E[k_t1 (1-k_t2)]`` and
    ``E[(1-k_t1)(1-k_t2)]`` for a uniformly random ``L``-subset.
    """
    rho = transmission_probability(L, M)
    eye = np.eye(M, dtype=bool)
    if L == M:
        ss, su, uu = np.ones((M, M)), np.zeros((M, M)), np.zeros((M, M))
    else:
        ss = np.where(eye, rho, rho * (L - 1) / (M - 1))
        su = np.where(eye, 0.0, rho * (M - L) / (M - 1))
        uu = np.where(eye, 1 - rho, (M - L) * (M - L - 1) / (M * (M - 1)))
    return {"ss": ss, "su": su, "uu": uu}


def _independent_moments(rho: float, M: int) -> dict[str, np.ndarray]:
    one = np.ones((M, M))
    return {"ss": rho * rho * one, "su": rho * (1 - rho) * one, "uu": (1 - rho) ** 2 * one}


def _cross_node_moments(kind: SchemeKind, L: int, M: int) -> dict[str, np.ndarray]:
    # the sequential schedule is shared by all nodes
    if SchemeKind(kind) is SchemeKind.SEQUENTIAL:
        return pair_moments(L, M)
    return _independent_moments(transmission_probability(L, M), M)


def selection_second_moment(kind, t: int, p: int, q: int, L: int, M: int) -> np.ndarray:
    """``E[kappa_{t,p} K_q]`` as an ``M x M`` diagonal matrix (``t`` zero-based)."""
    if not 0 <= t < M:
        raise ConfigError(f"entry index {t} out of range for M={M}")
    S = pair_moments(L, M)["ss"] if p == q else _cross_node_moments(kind, L, M)["ss"]
    return np.diag(S[t])


# ---------------------------------------------------------------------------
# transition-matrix structure

@dataclass(frozen=True)
class _BlockForm:
    rows: np.ndarray  # sink node p of each nonzero block
    cols: np.ndarray  # source node q
    c0: np.ndarray  # constant coefficient
    csel: np.ndarray  # (n_blocks, N) coefficients of kappa_l
    cuns: np.ndarray  # (n_blocks, N) coefficients of 1 - kappa_l


def _block_form(A: CombinationMatrix) -> _BlockForm:
    a = A.weights
    topo = A.topology
    N = topo.n_nodes
    rows, cols, c0, csel, cuns = [], [], [], [], []
    for p in range(N):
        nb = topo.neighbors(p)
        rows.append(p), cols.append(p), c0.append(a[p, p])
        cs, cu = np.zeros(N), np.zeros(N)
        cu[nb] = a[nb, p]
        csel.append(cs), cuns.append(cu)
        for q in nb:
            rows.append(p), cols.append(q), c0.append(0.0)
            cs, cu = np.zeros(N), np.zeros(N)
            cs[q] = a[q, p]
            csel.append(cs), cuns.append(cu)
    return _BlockForm(np.array(rows), np.array(cols), np.array(c0), np.array(csel), np.array(cuns))


def sample_transition_matrix(A: CombinationMatrix, selection: np.ndarray) -> np.ndarray:
    """Realised ``B`` (dense ``NM x NM``) for selection diagonals ``selection`` of shape (N, M)."""
    sel = np.asarray(selection, dtype=float)
    N, M = sel.shape
    form = _block_form(A)
    B = np.zeros((N * M, N * M))
    diag = form.c0[:, None] + form.csel @ sel + form.cuns @ (1 - sel)
    t = np.arange(M)
    for b, (p, q) in enumerate(zip(form.rows, form.cols)):
        B[p * M + t, q * M + t] = diag[b]
    return B


def mean_matrix_Q(A: CombinationMatrix, rho: float, M: int) -> np.ndarray:
    """``E[B]``: diagonal blocks ``(1 - rho sum_{l != p} a_lp) I``, neighbour blocks ``rho a_qp I``."""
    if not 0 < rho <= 1:
        raise ConfigError(f"rho must lie in (0, 1], got {rho}")
    a = A.weights
    N = A.n_nodes
    off = a - np.diag(np.diag(a))
    mean_nodes = rho * off.T
    mean_nodes[np.diag_indices(N)] = np.diag(a) + (1 - rho) * off.sum(axis=0)
    return np.kron(mean_nodes, np.eye(M))


def second_moment_Phi(A: CombinationMatrix, kind, L: int, M: int, dense: bool = False):
    """``E[kron(B.T, B.T)]`` as a sparse CSR matrix (or dense array)."""
    N = A.n_nodes
    _check_size(N, M)
    rho = transmission_probability(L, M)
    same = pair_moments(L, M)
    cross = _cross_node_moments(kind, L, M)
    form = _block_form(A)
    c0, CS, CU = form.c0, form.csel, form.cuns
    mean_lin = rho * CS.sum(axis=1) + (1 - rho) * CU.sum(axis=1)

    val = (np.outer(c0, c0) + np.outer(c0, mean_lin) + np.outer(mean_lin, c0))[:, :, None, None] * np.ones((M, M))
    terms = (("ss", CS, CS, False), ("su", CS, CU, False), ("su", CU, CS, True), ("uu", CU, CU, False))
    for key, X, Y, transpose in terms:
        s_same = same[key].T if transpose else same[key]
        s_cross = cross[key].T if transpose else cross[key]
        dot = X @ Y.T
        rest = np.outer(X.sum(axis=1), Y.sum(axis=1)) - dot
        np.maximum(rest, 0.0, out=rest)  # exact value is a sum of nonnegative products
        val += dot[:, :, None, None] * s_same + rest[:, :, None, None] * s_cross

    NM = N * M
    t = np.arange(M)
    p, q = form.rows, form.cols
    r1 = q[:, None, None, None] * M + t[None, None, :, None]
    r2 = q[None, :, None, None] * M + t[None, None, None, :]
    c1 = p[:, None, None, None] * M + t[None, None, :, None]
    c2 = p[None, :, None, None] * M + t[None, None, None, :]
    shape = val.shape
    rows = np.broadcast_to(r1 * NM + r2, shape).ravel()
    cols = np.broadcast_to(c1 * NM + c2, shape).ravel()
    Phi = sp.csr_matrix((val.ravel(), (rows, cols)), shape=(NM * NM, NM * NM))
    return Phi.toarray() if dense else Phi


def gamma_matrix(profiles: Sequence[NodeProfile], lam: float) -> np.ndarray:
    return (1 - lam) * _block_diag([np.diag(1 / p.r_u) for p in profiles])


def noise_matrix_G(profiles: Sequence[NodeProfile], lam: float) -> np.ndarray:
    """Block diagonal ``(1 - lam)^2 sigma2_v,k R_u,k^{-1}``."""
    if not 0 < lam <= 1:
        raise ConfigError(f"forgetting factor must lie in (0, 1], got {lam}")
    return (1 - lam) ** 2 * _block_diag([p.sigma2_v * np.diag(1 / p.r_u) for p in profiles])


def link_noise_covariance(A: CombinationMatrix, link_profile: LinkNoiseProfile, rho: float, M: int) -> np.ndarray:
    """Covariance of the aggregate received link noise, block ``k`` = ``rho sum_l a_lk^2 s2_lk I``."""
    a = A.weights
    per_node = np.zeros(A.n_nodes)
    for (l, k), s2 in zip(link_profile.links, link_profile.sigma2_psi):
        per_node[k] += a[l, k] ** 2 * s2
    return np.kron(np.diag(rho * per_node), np.eye(M))


def _block_diag(blocks) -> np.ndarray:
    import scipy.linalg

    return scipy.linalg.block_diag(*blocks)


# ---------------------------------------------------------------------------
# model and predictions

@dataclass(frozen=True)
class TheoryModel:
    Q: np.ndarray
    Phi: sp.csr_matrix
    Gamma: np.ndarray
    G: np.ndarray
    Rv: np.ndarray
    lam: float
    rho: float
    N: int
    M: int
    kind: SchemeKind
    L: int

    @property
    def F(self) -> sp.csr_matrix:
        return (self.lam ** 2) * self.Phi

    @property
    def NM(self) -> int:
        return self.N * self.M


def build_theory(
    A: CombinationMatrix,
    profiles: Sequence[NodeProfile],
    link_profile: LinkNoiseProfile,
    kind,
    L: int,
    lam: float,
    M: int | None = None,
) -> TheoryModel:
    M = profiles[0].r_u.shape[0] if M is None else M
    N = A.n_nodes
    if len(profiles) != N:
        raise ConfigError(f"need {N} node profiles, got {len(profiles)}")
    if not 0 < lam <= 1:
        raise ConfigError(f"forgetting factor must lie in (0, 1], got {lam}")
    _check_size(N, M)
    rho = _check_rho(L, M)
    kind = SchemeKind(kind)
    return TheoryModel(
        Q=mean_matrix_Q(A, rho, M),
        Phi=second_moment_Phi(A, kind, L, M),
        Gamma=gamma_matrix(profiles, lam),
        G=noise_matrix_G(profiles, lam),
        Rv=link_noise_covariance(A, link_profile, rho, M),
        lam=float(lam),
        rho=rho,
        N=N,
        M=M,
        kind=kind,
        L=L,
    )


def spectral_radius(X) -> float:
    """Largest eigenvalue modulus; ARPACK for large sparse inputs."""
    n = X.shape[0]
    if sp.issparse(X) and n > DENSE_EIG_LIMIT:
        vals = spla.eigs(X.astype(float), k=min(6, n - 2), which="LM", tol=1e-14,
                         return_eigenvectors=False, v0=np.ones(n), maxiter=100 * n)
        return float(np.max(np.abs(vals)))
    dense = X.toarray() if sp.issparse(X) else np.asarray(X)
    return float(np.max(np.abs(np.linalg.eigvals(dense))))


@dataclass(frozen=True)
class StabilityReport:
    lam: float
    spectral_radius_mean: float
    spectral_radius_ms: float
    tol: float = 1e-8

    @property
    def mean_ok(self) -> bool:
        return abs(self.spectral_radius_mean - self.lam) <= self.tol

    @property
    def ms_ok(self) -> bool:
        return abs(self.spectral_radius_ms - self.lam ** 2) <= self.tol

    def as_dict(self) -> dict:
        return {
            "spectral_radius_mean": self.spectral_radius_mean,
            "spectral_radius_ms": self.spectral_radius_ms,
            "expected_mean": self.lam,
            "expected_ms": self.lam ** 2,
            "mean_ok": self.mean_ok,
            "ms_ok": self.ms_ok,
        }


def stability_checks(model: TheoryModel) -> StabilityReport:
    return StabilityReport(
        lam=model.lam,
        spectral_radius_mean=model.lam * spectral_radius(model.Q),
        spectral_radius_ms=model.lam ** 2 * spectral_radius(model.Phi),
    )


@dataclass(frozen=True)
class MsdPrediction:
    msd_ideal: float
    msd_noisy: float
    noise_penalty: float
    residual: float = 0.0
    transient: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "msd_ideal": self.msd_ideal,
            "msd_noisy": self.msd_noisy,
            "noise_penalty": self.noise_penalty,
            "msd_ideal_db": to_db(self.msd_ideal),
            "msd_noisy_db": to_db(self.msd_noisy),
            "noise_penalty_db": to_db(self.noise_penalty),
            "solve_residual": self.residual,
        }


def to_db(x, floor: float = -300.0):
    with np.errstate(divide="ignore"):
        out = np.maximum(10 * np.log10(np.asarray(x, dtype=float)), floor)
    return float(out) if np.ndim(out) == 0 else out


def _weight_vectors(model: TheoryModel) -> tuple[np.ndarray, np.ndarray]:
    """Row vectors ``vec(G)^T Phi`` and ``vec(Rv)^T``."""
    return model.Phi.T @ vec(model.G), vec(model.Rv)


def steady_state_msd(model: TheoryModel, residual_tol: float = 1e-10, refinements: int = 3) -> MsdPrediction:
    if model.lam >= 1:
        raise DomainError("theory undefined at λ=1 (singular system): I - F has unit spectral radius")
    NM = model.NM
    system = (sp.identity(NM * NM, format="csc") - model.F).tocsc()
    rhs = vec(np.eye(NM)) / model.N
    lu = spla.splu(system)
    sigma = lu.solve(rhs)
    for _ in range(refinements):
        r = rhs - system @ sigma
        if np.max(np.abs(r)) <= residual_tol * 1e-3:
            break
        sigma = sigma + lu.solve(r)
    residual = float(np.max(np.abs(rhs - system @ sigma)))
    if not residual <= residual_tol:
        raise DomainError(f"steady-state solve failed, residual {residual:.3g}")

    h_ideal, h_link = _weight_vectors(model)
    return MsdPrediction(
        msd_ideal=float(h_ideal @ sigma),
        msd_noisy=float((h_ideal + h_link) @ sigma),
        noise_penalty=float(h_link @ sigma),
        residual=residual,
    )


def transient_msd(model: TheoryModel, w_o: GroundTruth, iterations: int) -> np.ndarray:
    """Predicted network MSD for ``i = 0..iterations`` from the weighted variance recursion.

    Starts from zero estimates, so every node's initial error equals ``w_o``.
    """
    N, NM = model.N, model.NM
    w0 = np.tile(w_o.w_o, N)
    s = vec(np.eye(NM)) / N
    h = np.add(*_weight_vectors(model))
    F = model.F
    out = np.empty(iterations + 1)
    acc = 0.0
    out[0] = w0 @ unvec(s, NM) @ w0
    for i in range(1, iterations + 1):
        acc += h @ s
        s = F @ s
        out[i] = w0 @ unvec(s, NM) @ w0 + acc
    return out


def mean_recursion_predict(model: TheoryModel, mean0, iterations: int) -> np.ndarray:
    """Mean network error for ``i = 0..iterations``; row ``i`` is ``(lam Q)^i mean0``."""
    x = np.asarray(mean0, dtype=float)
    if x.shape != (model.NM,):
        raise ConfigError(f"initial mean error must have length {model.NM}")
    T = model.lam * model.Q
    out = np.empty((iterations + 1, model.NM))
    out[0] = x
    for i in range(1, iterations + 1):
        x = T @ x
        out[i] = x
    return out
