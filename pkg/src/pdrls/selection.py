"""Entry-selection schedules for partial diffusion.

Selection matrices are diagonal 0/1 matrices; they are carried around as
boolean vectors holding the diagonal.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


class SchemeKind(str, enum.Enum):
    SEQUENTIAL = "sequential"
    STOCHASTIC = "stochastic"
    UNIFORM_SUBSET = "uniform-subset"

    @classmethod
    def _missing_(cls, value):
        raise ConfigError(f"unknown selection scheme {value!r}; expected one of {[k.value for k in cls]}")


@dataclass(frozen=True)
class Partition:
    subsets: tuple[tuple[int, ...], ...]
    M: int

    def __len__(self) -> int:
        return len(self.subsets)

    def masks(self) -> np.ndarray:
        """``(B, M)`` boolean array, row ``b`` marks subset ``b``."""
        out = np.zeros((len(self.subsets), self.M), dtype=bool)
        for b, s in enumerate(self.subsets):
            out[b, list(s)] = True
        return out


def _check_lm(M: int, L: int) -> None:
    if not (isinstance(M, (int, np.integer)) and isinstance(L, (int, np.integer))):
        raise ConfigError("M and L must be integers")
    if M < 1 or not 1 <= L <= M:
        raise ConfigError(f"need 1 <= L <= M, got L={L}, M={M}")


def build_partition(M: int, L: int) -> Partition:
    """Contiguous split of ``0..M-1`` into ``ceil(M/L)`` blocks of at most ``L`` indices."""
    _check_lm(M, L)
    n_blocks = math.ceil(M / L)
    return Partition(
        tuple(tuple(range(b * L, min((b + 1) * L, M))) for b in range(n_blocks)), M
    )


def transmission_probability(L: int, M: int) -> float:
    _check_lm(M, L)
    return L / M


@dataclass(frozen=True)
class SelectionScheme:
    kind: SchemeKind
    L: int
    M: int

    def __post_init__(self):
        _check_lm(self.M, self.L)
        object.__setattr__(self, "kind", SchemeKind(self.kind))

    @property
    def partition(self) -> Partition:
        return build_partition(self.M, self.L)

    @property
    def rho(self) -> float:
        return transmission_probability(self.L, self.M)

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.M / self.L)


def select(scheme: SelectionScheme, node: int, iteration: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Diagonal of the selection matrix of ``node`` at ``iteration``.

    The sequential schedule ignores ``node`` and ``rng``; the random kinds
    consume one draw from ``rng`` per call.
    """
    if scheme.kind is SchemeKind.SEQUENTIAL:
        return scheme.partition.masks()[iteration % scheme.n_blocks].copy()
    if rng is None:
        raise ConfigError(f"{scheme.kind.value} selection needs a random generator")
    if scheme.kind is SchemeKind.STOCHASTIC:
        return scheme.partition.masks()[rng.integers(scheme.n_blocks)].copy()
    mask = np.zeros(scheme.M, dtype=bool)
    mask[rng.choice(scheme.M, size=scheme.L, replace=False)] = True
    return mask


def selection_schedule(
    scheme: SelectionScheme,
    n_nodes: int,
    iterations: int,
    rng: np.random.Generator | None = None,
    start: int = 0,
    phase: int = 0,
) -> np.ndarray:
    """Bulk selection diagonals, shape ``(iterations, n_nodes, M)``.

    ``phase`` shifts the sequential round-robin; the random kinds draw
    independently per node and iteration.
    """
    T, N, M = iterations, n_nodes, scheme.M
    if scheme.kind is SchemeKind.SEQUENTIAL:
        idx = (np.arange(start, start + T) + phase) % scheme.n_blocks
        masks = scheme.partition.masks()[idx]
        return np.broadcast_to(masks[:, None, :], (T, N, M)).copy()
    if rng is None:
        raise ConfigError(f"{scheme.kind.value} selection needs a random generator")
    if scheme.kind is SchemeKind.STOCHASTIC:
        return scheme.partition.masks()[rng.integers(scheme.n_blocks, size=(T, N))]
    # L smallest of M iid uniforms is a uniformly random L-subset
    keys = rng.random((T, N, M))
    ranks = keys.argsort(axis=-1).argsort(axis=-1)
    return ranks < scheme.L
