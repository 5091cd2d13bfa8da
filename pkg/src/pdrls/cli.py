"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 domain error,
4 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .errors import ConfigError, DomainError, PdrlsError, ValidationFailure
from .experiment import (
    PRESETS,
    ExperimentConfig,
    Scenario,
    compare_theory_sim,
    monte_carlo,
    resolve,
    theory_summary,
)
from .oracles import validate_moments
from .signal_model import profiles_to_dict
from .theory import steady_state_msd, to_db

log = logging.getLogger("pdrls")

MOMENTS_DEFAULT = {
    "topology": {"n_nodes": 3, "edges": [[0, 1], [1, 2]]},
    "M": 2,
    "L": 1,
    "scheme": "stochastic",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON experiment config")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="base config (default: desk)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--scheme", choices=["sequential", "stochastic", "uniform-subset"])
    common.add_argument("--entries", type=int, metavar="L", help="entries transmitted per iteration")
    common.add_argument("--lambda", dest="lam", type=float, metavar="F", help="forgetting factor")
    common.add_argument("--link-noise-scale", type=float, metavar="F")
    common.add_argument("--runs", type=int, metavar="N")
    common.add_argument("--iterations", type=int, metavar="N")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pdrls", description="Partial-diffusion RLS over noisy links.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo MSD learning curve")
    th = sub.add_parser("theory", parents=[common], help="closed-form steady-state MSD")
    th.add_argument("--sweep-entries", type=int, nargs="+", metavar="L")
    cmp_ = sub.add_parser("compare", parents=[common], help="theory against simulation")
    cmp_.add_argument("--sweep-entries", type=int, nargs="+", metavar="L")
    vm = sub.add_parser("validate-moments", parents=[common], help="Monte-Carlo moment oracles")
    vm.add_argument("--draws-scale", type=float, default=1.0, help="multiply all oracle draw counts")
    return p


def load_config(args: argparse.Namespace, base: dict | None = None) -> ExperimentConfig:
    data: dict[str, Any] = PRESETS[args.preset or "desk"].to_dict()
    if base and not args.preset:
        data.update(base)
    if args.config is not None:
        try:
            loaded = yaml.safe_load(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data.update(loaded)
    overrides = {
        "seed": args.seed,
        "scheme": args.scheme,
        "L": args.entries,
        "lam": args.lam,
        "link_noise_scale": args.link_noise_scale,
        "n_runs": args.runs,
        "iterations": args.iterations,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _prepare_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _echo(scn: Scenario) -> dict:
    return {
        "config": scn.config.to_dict(),
        "topology": {"n_nodes": scn.n_nodes, "edges": scn.topology.edges()},
        "combination_matrix": scn.A.weights,
        "w_o": scn.w_o.w_o,
        "profiles": profiles_to_dict(scn.profiles, scn.link_profile),
    }


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    scn = resolve(cfg)
    mc = monte_carlo(cfg)
    summary = _echo(scn)
    summary["simulation"] = mc.summary
    theory_cols: tuple[float, float] | None = None
    if cfg.lam < 1:
        th = theory_summary(scn)
        summary["theory"] = th
        theory_cols = (th["msd_ideal_db"], th["msd_noisy_db"])
    else:
        summary["theory"] = {"error": "theory undefined at λ=1 (singular system)"}

    header = ["iteration", "msd_linear", "msd_db"]
    if theory_cols:
        header += ["theory_ideal_db", "theory_noisy_db"]
    with open(out / "curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        db = mc.curve.msd_db
        for i, (lin, d) in enumerate(zip(mc.curve.msd_linear, db)):
            row = [str(i), _fmt(lin), _fmt(d)]
            if theory_cols:
                row += [_fmt(theory_cols[0]), _fmt(theory_cols[1])]
            w.writerow(row)
    _write_json(out / "summary.json", summary)

    ss = mc.summary["steady_state"]
    if ss is None:
        print("all runs diverged")
    else:
        print(f"steady-state MSD {ss['msd_db']:.3f} dB over {cfg.n_runs} runs"
              + (" (non-converging)" if ss["non_converging"] else ""))
    if mc.curve.diverged:
        print(f"diverged runs: {sorted(mc.curve.diverged)}")
    return 0


def cmd_theory(cfg: ExperimentConfig, out: Path, sweep: Sequence[int] | None) -> int:
    if cfg.lam >= 1:
        raise DomainError("theory undefined at λ=1 (singular system)")
    scn = resolve(cfg)
    payload = _echo(scn)
    payload["theory"] = theory_summary(scn)
    th = payload["theory"]
    print(f"spectral radius lam*Q   = {th['stability']['spectral_radius_mean']:.12f}")
    print(f"spectral radius lam^2*Phi = {th['stability']['spectral_radius_ms']:.12f}")
    print(f"msd_ideal {th['msd_ideal_db']:.4f} dB, msd_noisy {th['msd_noisy_db']:.4f} dB, "
          f"noise_penalty {th['noise_penalty']:.6g}")
    if sweep:
        rows = []
        for L in sweep:
            pred = steady_state_msd(resolve(cfg.replace(L=int(L))).theory())
            rows.append({"L": int(L), **pred.as_dict()})
        payload["sweep"] = rows
        print("L  msd_ideal_db  msd_noisy_db  noise_penalty")
        for r in rows:
            print(f"{r['L']:<2} {r['msd_ideal_db']:12.4f}  {r['msd_noisy_db']:12.4f}  {r['noise_penalty']:.6g}")
    _write_json(out / "theory.json", payload)
    return 0


def cmd_compare(cfg: ExperimentConfig, out: Path, sweep: Sequence[int] | None) -> int:
    if cfg.lam >= 1:
        raise DomainError("theory undefined at λ=1 (singular system)")
    scn = resolve(cfg)
    report = compare_theory_sim(cfg, sweep)
    payload = _echo(scn)
    payload["compare"] = report
    cols = ["L", "msd_sim_db", "msd_ideal_db", "msd_noisy_db", "gap_db", "noise_penalty"]
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in report["rows"]:
            w.writerow([str(r["L"])] + [_fmt(r[c]) for c in cols[1:]])
            print(f"L={r['L']}: sim {r['msd_sim_db']:.3f} dB, theory {r['msd_noisy_db']:.3f} dB "
                  f"(ideal {r['msd_ideal_db']:.3f} dB), gap {r['gap_db']:+.3f} dB")
    _write_json(out / "compare.json", payload)
    return 0


def cmd_validate_moments(cfg: ExperimentConfig, out: Path, draws_scale: float = 1.0) -> int:
    scn = resolve(cfg)
    report = validate_moments(
        scn.A, scn.link_profile, scn.scheme.kind, cfg.L, cfg.M, seed=cfg.seed,
        q_draws=int(100_000 * draws_scale), phi_draws=int(200_000 * draws_scale),
        noise_draws=int(100_000 * draws_scale),
    )
    for c in report.checks:
        print(c.line())
    _write_json(out / "moments.json", {"config": cfg.to_dict(), **report.as_dict()})
    if not report.passed:
        raise ValidationFailure("moment validation failed")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate-moments":
            cfg = load_config(args, base=MOMENTS_DEFAULT if args.config is None else None)
        else:
            cfg = load_config(args)
        resolve(cfg)  # validate everything before computing
        out = _prepare_out(args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "theory":
            return cmd_theory(cfg, out, args.sweep_entries)
        if args.command == "compare":
            return cmd_compare(cfg, out, args.sweep_entries)
        return cmd_validate_moments(cfg, out, args.draws_scale)
    except PdrlsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
