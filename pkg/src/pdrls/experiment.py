"""Monte-Carlo harness: seeded PDRLS runs, network MSD curves, theory comparison."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import signal_model as sm
from .errors import ConfigError
from .network_model import (
    CombinationMatrix,
    LinkIndex,
    Topology,
    build_uniform_combination,
    enumerate_links,
    generate_random_topology,
)
from .pdrls_core import adapt, combine, network_init
from .selection import SchemeKind, SelectionScheme, selection_schedule
from .theory import TheoryModel, build_theory, stability_checks, steady_state_msd, to_db

log = logging.getLogger(__name__)

TAIL_FRACTION = 0.1
SLOPE_FRACTION = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    topology: Mapping[str, Any] = field(
        default_factory=lambda: {"n_nodes": 5, "avg_degree": 2.0, "seed": 1}
    )
    M: int = 4
    L: int = 2
    scheme: str = "sequential"
    lam: float = 0.995
    delta: float = 0.01
    iterations: int = 3000
    n_runs: int = 50
    seed: int = 2024
    profiles: Mapping[str, Any] = field(default_factory=dict)
    link_noise_scale: float = 1.0
    per_run_wo: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind(self.scheme).value)
        object.__setattr__(self, "topology", dict(self.topology))
        object.__setattr__(self, "profiles", dict(self.profiles))
        if self.n_runs < 1 or self.iterations < 1:
            raise ConfigError("n_runs and iterations must be at least 1")
        if not 0 < self.lam <= 1:
            raise ConfigError(f"lambda must lie in (0, 1], got {self.lam}")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.link_noise_scale < 0:
            raise ConfigError("link_noise_scale must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        SelectionScheme(self.scheme, self.L, self.M)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


PRESETS = {
    "desk": ExperimentConfig(),
    "paper": ExperimentConfig(
        topology={"n_nodes": 10, "avg_degree": 2.0, "seed": 7},
        M=8,
        L=2,
        iterations=3000,
        n_runs=50,
    ),
}


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# resolving a config into concrete objects

@dataclass(frozen=True)
class Scenario:
    config: ExperimentConfig
    topology: Topology
    A: CombinationMatrix
    links: LinkIndex
    profiles: tuple[sm.NodeProfile, ...]
    link_profile: sm.LinkNoiseProfile  # already scaled by link_noise_scale
    w_o: sm.GroundTruth
    scheme: SelectionScheme

    @property
    def n_nodes(self) -> int:
        return self.topology.n_nodes

    def ground_truth(self, run: int) -> sm.GroundTruth:
        if self.config.per_run_wo:
            return sm.draw_ground_truth(
                self.config.M, sm.make_rng(self.config.seed, sm.STREAM_GROUND_TRUTH, run + 1)
            )
        return self.w_o

    def theory(self, lam: float | None = None) -> TheoryModel:
        return build_theory(
            self.A, self.profiles, self.link_profile, self.scheme.kind, self.scheme.L,
            self.config.lam if lam is None else lam, M=self.config.M,
        )


def build_topology(spec: Mapping[str, Any]) -> Topology:
    if "adjacency" in spec:
        return Topology(np.asarray(spec["adjacency"], dtype=bool))
    if "edges" in spec:
        return Topology.from_edges(int(spec["n_nodes"]), spec["edges"])
    try:
        return generate_random_topology(
            int(spec["n_nodes"]), float(spec.get("avg_degree", 2.0)), int(spec.get("seed", 0))
        )
    except KeyError as exc:
        raise ConfigError(f"topology spec missing {exc}") from None


def resolve(config: ExperimentConfig) -> Scenario:
    topo = build_topology(config.topology)
    if "weights" in config.topology:
        A = CombinationMatrix(np.asarray(config.topology["weights"], dtype=float), topo)
    else:
        A = build_uniform_combination(topo)
    links = enumerate_links(topo)
    prof = config.profiles
    if "nodes" in prof:
        profiles, link_profile = sm.profiles_from_dict(prof, links, topo.n_nodes, config.M)
    else:
        rng = sm.make_rng(int(prof.get("seed", config.seed)), sm.STREAM_PROFILES)
        profiles = sm.generate_node_profiles(
            topo.n_nodes, config.M, rng,
            tuple(prof.get("r_u_range", (0.5, 2.0))),
            tuple(prof.get("sigma2_v_range", (1e-3, 1e-2))),
        )
        link_profile = sm.generate_link_profile(
            links, rng, tuple(prof.get("sigma2_psi_range", (1e-4, 1e-2)))
        )
    w_o = sm.draw_ground_truth(config.M, sm.make_rng(config.seed, sm.STREAM_GROUND_TRUTH, 0))
    return Scenario(
        config=config,
        topology=topo,
        A=A,
        links=links,
        profiles=tuple(profiles),
        link_profile=link_profile.scaled(config.link_noise_scale),
        w_o=w_o,
        scheme=SelectionScheme(config.scheme, config.L, config.M),
    )


# ---------------------------------------------------------------------------
# simulation

def simulated_msd(w: np.ndarray, w_o: sm.GroundTruth) -> float:
    """Network MSD ``(1/N) sum_k |w_o - w_k|^2`` of stacked estimates ``w`` (N, M)."""
    err = w_o.w_o[None, :] - np.asarray(w)
    return float(np.mean(np.sum(np.abs(err) ** 2, axis=1)))


@dataclass(frozen=True)
class RunData:
    U: np.ndarray  # (T, N, M)
    d: np.ndarray  # (T, N)
    selection: np.ndarray  # (T, N, M) bool
    link_noise: np.ndarray  # (T, n_links, M)


def draw_run_data(scn: Scenario, run: int) -> RunData:
    cfg = scn.config
    T, N, M = cfg.iterations, scn.n_nodes, cfg.M
    seed = cfg.seed
    r_u = np.stack([p.r_u for p in scn.profiles])
    s2v = np.array([p.sigma2_v for p in scn.profiles])
    U = sm.make_rng(seed, sm.STREAM_REGRESSORS, run).standard_normal((T, N, M)) * np.sqrt(r_u)
    v = sm.make_rng(seed, sm.STREAM_MEASUREMENT_NOISE, run).standard_normal((T, N)) * np.sqrt(s2v)
    d = U @ scn.ground_truth(run).w_o + v
    sel = selection_schedule(scn.scheme, N, T, sm.make_rng(seed, sm.STREAM_SELECTION, run))
    noise = sm.make_rng(seed, sm.STREAM_LINK_NOISE, run).standard_normal((T, len(scn.links), M))
    noise *= np.sqrt(scn.link_profile.sigma2_psi)[:, None]
    return RunData(U, d, sel, noise)


@dataclass(frozen=True)
class RunResult:
    msd: np.ndarray
    diverged_at: int | None = None


def _simulate(scn: Scenario, data: RunData, w_o: sm.GroundTruth) -> RunResult:
    cfg = scn.config
    state = network_init(scn.n_nodes, cfg.M, cfg.delta)
    w, P = state.w, state.P
    T = cfg.iterations
    msd = np.empty(T)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(T):
            P, psi = adapt(w, P, data.U[i], data.d[i], cfg.lam)
            w = combine(psi, data.selection[i], data.link_noise[i], scn.A, scn.links)
            msd[i] = simulated_msd(w, w_o)
            if not np.isfinite(msd[i]):
                msd[i:] = np.inf
                log.warning("run diverged at iteration %d", i)
                return RunResult(msd, i)
    return RunResult(msd)


def run_single(config: ExperimentConfig | Scenario, run: int = 0) -> RunResult:
    scn = config if isinstance(config, Scenario) else resolve(config)
    return _simulate(scn, draw_run_data(scn, run), scn.ground_truth(run))


@dataclass
class MsdCurve:
    msd_linear: np.ndarray
    per_run: np.ndarray | None = None
    diverged: dict[int, int] = field(default_factory=dict)

    @property
    def msd_db(self) -> np.ndarray:
        return to_db(self.msd_linear)

    def __len__(self) -> int:
        return len(self.msd_linear)


def tail_mean(curve: np.ndarray, fraction: float = TAIL_FRACTION) -> float:
    n = max(1, int(round(len(curve) * fraction)))
    return float(np.mean(curve[-n:]))


def trailing_slope(curve_db: np.ndarray, fraction: float = SLOPE_FRACTION) -> tuple[float, float]:
    """OLS slope (dB/iteration) of the trailing window and its t-statistic."""
    n = max(3, int(round(len(curve_db) * fraction)))
    y = np.asarray(curve_db[-n:], dtype=float)
    x = np.arange(n, dtype=float)
    x -= x.mean()
    slope = float(x @ (y - y.mean()) / (x @ x))
    resid = y - y.mean() - slope * x
    se = np.sqrt(resid @ resid / (n - 2) / (x @ x))
    return slope, float(slope / se) if se > 0 else float("inf") * np.sign(slope)


@dataclass
class MonteCarloResult:
    curve: MsdCurve
    summary: dict


def monte_carlo(config: ExperimentConfig, keep_runs: bool = False) -> MonteCarloResult:
    scn = resolve(config)
    cfg = scn.config
    traces = np.empty((cfg.n_runs, cfg.iterations))
    diverged: dict[int, int] = {}
    for r in range(cfg.n_runs):
        res = run_single(scn, r)
        traces[r] = res.msd
        if res.diverged_at is not None:
            diverged[r] = res.diverged_at
    curve = MsdCurve(traces.mean(axis=0), traces if keep_runs else None, diverged)
    return MonteCarloResult(curve, _summarise(scn, traces, curve))


def _summarise(scn: Scenario, traces: np.ndarray, curve: MsdCurve) -> dict:
    cfg = scn.config
    summary: dict[str, Any] = {
        "n_runs": cfg.n_runs,
        "iterations": cfg.iterations,
        "diverged_runs": {str(r): i for r, i in sorted(curve.diverged.items())},
        "all_diverged": len(curve.diverged) == cfg.n_runs,
        "transmitted_entries": cfg.L * cfg.iterations * len(scn.links),
    }
    if summary["all_diverged"]:
        summary["steady_state"] = None
        return summary
    finite = np.array([r for r in range(cfg.n_runs) if r not in curve.diverged])
    tails = np.array([tail_mean(traces[r]) for r in finite])
    ss = tail_mean(curve.msd_linear)
    stderr = float(np.std(tails, ddof=1) / np.sqrt(len(tails))) if len(tails) > 1 else float("nan")
    slope, tstat = trailing_slope(curve.msd_db) if not curve.diverged else (float("nan"),) * 2
    summary["steady_state"] = {
        "msd_linear": ss,
        "msd_db": to_db(ss),
        "stderr_linear": stderr,
        "tail_fraction": TAIL_FRACTION,
        "trailing_slope_db_per_iter": slope,
        "trailing_slope_tstat": tstat,
        "non_converging": bool(slope > 0 and tstat > 3),
    }
    return summary


# ---------------------------------------------------------------------------
# theory vs simulation

def theory_summary(scn: Scenario, check_stability: bool = True) -> dict:
    model = scn.theory()
    out: dict[str, Any] = {"rho": model.rho}
    if check_stability:
        out["stability"] = stability_checks(model).as_dict()
    out.update(steady_state_msd(model).as_dict())
    return out


def compare_theory_sim(config: ExperimentConfig, sweep_L: Sequence[int] | None = None) -> dict:
    """Simulated steady state against the closed-form predictions, per ``L``."""
    rows = []
    for L in sweep_L or [config.L]:
        cfg = config.replace(L=int(L))
        scn = resolve(cfg)
        mc = monte_carlo(cfg)
        pred = steady_state_msd(scn.theory())
        ss = mc.summary["steady_state"]
        sim_db = ss["msd_db"] if ss else float("nan")
        rows.append({
            "L": int(L),
            "msd_sim_db": sim_db,
            "msd_ideal_db": to_db(pred.msd_ideal),
            "msd_noisy_db": to_db(pred.msd_noisy),
            "noise_penalty": pred.noise_penalty,
            "gap_db": sim_db - to_db(pred.msd_noisy),
            "sim_stderr_linear": ss["stderr_linear"] if ss else None,
        })
    return {"rows": rows}
