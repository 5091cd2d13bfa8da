"""Synthetic data model: regressors, measurements, link noise and LS stacks.

Randomness is organised as counter-keyed streams: every generator is built
from ``SeedSequence(master_seed, spawn_key=(...))`` so a draw depends only on
the master seed and the key tuple, never on what was drawn before elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .network_model import LinkIndex

# stream purposes; part of every spawn key
STREAM_GROUND_TRUTH = 0
STREAM_PROFILES = 1
STREAM_REGRESSORS = 2
STREAM_MEASUREMENT_NOISE = 3
STREAM_LINK_NOISE = 4
STREAM_SELECTION = 5


def make_rng(master_seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class GroundTruth:
    w_o: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w_o)
        if w.ndim != 1 or not np.any(w != 0):
            raise ConfigError("w_o must be a nonzero vector")
        object.__setattr__(self, "w_o", w)

    @property
    def M(self) -> int:
        return self.w_o.shape[0]


@dataclass(frozen=True)
class NodeProfile:
    r_u: np.ndarray
    sigma2_v: float

    def __post_init__(self):
        r_u = np.asarray(self.r_u, dtype=float)
        if r_u.ndim != 1 or np.any(r_u <= 0) or not np.all(np.isfinite(r_u)):
            raise ConfigError("regressor variances must be positive and finite")
        if not self.sigma2_v >= 0:
            raise ConfigError("measurement-noise variance must be nonnegative")
        object.__setattr__(self, "r_u", r_u)
        object.__setattr__(self, "sigma2_v", float(self.sigma2_v))

    @property
    def R_u(self) -> np.ndarray:
        return np.diag(self.r_u)


@dataclass(frozen=True)
class LinkNoiseProfile:
    """Per-directed-link noise variance, aligned with a :class:`LinkIndex`."""

    links: LinkIndex
    sigma2_psi: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma2_psi, dtype=float)
        if s.shape != (len(self.links),):
            raise ConfigError(f"need {len(self.links)} link variances, got {s.shape}")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ConfigError("link-noise variances must be nonnegative")
        object.__setattr__(self, "sigma2_psi", s)

    def variance(self, link: tuple[int, int]) -> float:
        return float(self.sigma2_psi[self.links.position(link)])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {lk: float(s) for lk, s in zip(self.links, self.sigma2_psi)}

    def scaled(self, factor: float) -> "LinkNoiseProfile":
        return LinkNoiseProfile(self.links, self.sigma2_psi * factor)


@dataclass(frozen=True)
class BatchDataset:
    """Newest-first stacks of one node's data and the exponential weighting."""

    y: np.ndarray
    H: np.ndarray
    lambda_weights: np.ndarray
    lam: float
    v: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.y.shape[0]


def draw_ground_truth(M: int, rng: np.random.Generator) -> GroundTruth:
    return GroundTruth(rng.standard_normal(M))


def generate_node_profiles(
    n_nodes: int,
    M: int,
    rng: np.random.Generator,
    r_u_range: tuple[float, float] = (0.5, 2.0),
    sigma2_v_range: tuple[float, float] = (1e-3, 1e-2),
) -> list[NodeProfile]:
    r_u = rng.uniform(*r_u_range, size=(n_nodes, M))
    s2 = rng.uniform(*sigma2_v_range, size=n_nodes)
    return [NodeProfile(r_u[k], s2[k]) for k in range(n_nodes)]


def generate_link_profile(
    links: LinkIndex,
    rng: np.random.Generator,
    sigma2_psi_range: tuple[float, float] = (1e-4, 1e-2),
) -> LinkNoiseProfile:
    return LinkNoiseProfile(links, rng.uniform(*sigma2_psi_range, size=len(links)))


def draw_regressor(profile: NodeProfile, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Zero-mean Gaussian row vector(s) with independent entries of variance ``r_u``."""
    shape = profile.r_u.shape if size is None else (size,) + profile.r_u.shape
    return rng.standard_normal(shape) * np.sqrt(profile.r_u)


def draw_measurement(u, w_o: GroundTruth, sigma2_v: float, rng: np.random.Generator):
    u = np.asarray(u)
    if u.shape[-1] != w_o.M:
        raise ConfigError(f"regressor length {u.shape[-1]} does not match M={w_o.M}")
    v = np.sqrt(sigma2_v) * rng.standard_normal(u.shape[:-1])
    return u @ w_o.w_o + v


def draw_link_noise(
    link: tuple[int, int],
    profile: LinkNoiseProfile,
    rng: np.random.Generator,
    M: int,
    size: int | None = None,
) -> np.ndarray:
    """Zero-mean white Gaussian vector(s) with covariance ``sigma2_psi[link] * I_M``."""
    s2 = profile.variance(link)
    shape = (M,) if size is None else (size, M)
    return np.sqrt(s2) * rng.standard_normal(shape)


def assemble_batch(history: Sequence[tuple], lam: float) -> BatchDataset:
    """Stack a chronological ``(d, u)`` history newest-first with weights ``1, lam, lam^2, ...``.

    A third tuple element, if present, is taken as the noise sample and
    stacked into ``v``.
    """
    if len(history) == 0:
        raise ConfigError("history must contain at least one sample")
    d = np.array([h[0] for h in history][::-1])
    H = np.array([np.asarray(h[1]) for h in history][::-1])
    v = np.array([h[2] for h in history][::-1]) if len(history[0]) > 2 else None
    return BatchDataset(
        y=d, H=H, lambda_weights=lam ** np.arange(len(history), dtype=float), lam=float(lam), v=v
    )


def profiles_to_dict(profiles: Sequence[NodeProfile], link_profile: LinkNoiseProfile) -> dict:
    return {
        "nodes": {
            str(k): {"r_u": p.r_u.tolist(), "sigma2_v": p.sigma2_v} for k, p in enumerate(profiles)
        },
        "links": [
            {"position": m, "source": l, "sink": k, "sigma2_psi": float(s)}
            for m, ((l, k), s) in enumerate(zip(link_profile.links, link_profile.sigma2_psi))
        ],
    }


def profiles_from_dict(data: Mapping, links: LinkIndex, n_nodes: int, M: int):
    nodes = data["nodes"]
    profiles = []
    for k in range(n_nodes):
        entry = nodes.get(str(k), nodes.get(k)) if isinstance(nodes, Mapping) else nodes[k]
        if entry is None:
            raise ConfigError(f"missing profile for node {k}")
        p = NodeProfile(np.asarray(entry["r_u"], dtype=float), entry["sigma2_v"])
        if p.r_u.shape != (M,):
            raise ConfigError(f"node {k}: r_u must have length {M}")
        profiles.append(p)
    raw = data["links"]
    if raw and isinstance(raw[0], Mapping):
        by_link = {(int(e["source"]), int(e["sink"])): float(e["sigma2_psi"]) for e in raw}
        if set(by_link) != set(links.links):
            raise ConfigError("link profile does not cover exactly the topology's links")
        s2 = [by_link[lk] for lk in links]
    else:
        s2 = raw
    return profiles, LinkNoiseProfile(links, np.asarray(s2, dtype=float))
