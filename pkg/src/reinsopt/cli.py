"""Command-line experiment harness: ``reinsopt {psi,table51,kfunction,rates,simulate}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .contracts import ContractEvaluator, program_from_intervals, psi_intervals, structure_label
from .errors import (
    AllInfeasible,
    ConfigError,
    DegenerateDerivative,
    InsufficientPoints,
    MomentDivergence,
    QuadratureFailure,
    StructureViolation,
)
from .optimizer import ApproximationKind, decay_slope, run_grid
from .pricing import ExponentialMarketPricing, GammaLaw, condition_check, k_function, kf_monte_carlo, solve_delta
from .severity import compound_moments, percentile, simulate_portfolio

log = logging.getLogger("reinsopt")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
OUT_ENV = "REINSOPT_OUT"

# Figure panels: regime overrides and (beta, lambda) overrides applied on top of the config
PSI_PANELS = {
    "default": ({}, {}),
    "no-positive": ({}, {"beta": 0.0, "lam": 0.0}),
    "full": ({}, {"lam": 1.0}),
    "b-layer": ({"gamma_re": 0.0, "omega": 2.0}, {}),
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Emitter:
    """Writes CSV/JSON outputs tagged with version, seed and config hash."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    @property
    def meta(self) -> dict:
        return {"version": __version__, "seed": self.cfg.run.seed, "config_hash": self.cfg.digest()}

    def csv(self, name: str, columns, rows) -> Path:
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# reinsopt {__version__} seed={self.cfg.run.seed} config={self.cfg.digest()}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.written.append(path)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        body = {"meta": self.meta, **payload}
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_clean(body), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        self.written.append(path)
        return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, ApproximationKind) else k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _psi_panel(cfg: ExperimentConfig, loss, regime_over: dict, run_over: dict):
    beta = run_over.get("beta", cfg.regime.beta)
    lam = run_over.get("lam", cfg.run.lam)
    regime = cfg.pricing(**regime_over)
    k = k_function(regime)
    ev = ContractEvaluator(k, loss, cfg.regime.epsilon, cfg.run.cdf, cfg.run.h)
    x = np.linspace(0.0, 1.25 * ev.x_eps, cfg.run.grid_points)
    psi = ev.psi(x, beta, lam)
    intervals = psi_intervals(ev, beta, lam)
    prog = program_from_intervals(intervals, ev.x_eps)
    report = {
        "beta": beta,
        "lambda": lam,
        "gamma_re": regime.gamma_re,
        "omega": getattr(regime, "omega", None),
        "x_eps": ev.x_eps,
        "psi_at_zero": float(ev.psi(0.0, beta, lam)),
        "positive_intervals": [list(iv) for iv in intervals],
        "program": {"b2": prog.b2, "a1": prog.a1, "a2": prog.a2},
        "structure": structure_label(prog, ev.x_eps),
    }
    return x, psi, report


def cmd_psi(cfg: ExperimentConfig, em: Emitter, panels: bool = False) -> dict:
    spec = cfg.spec()
    loss = simulate_portfolio(spec, cfg.run.m, cfg.run.seed)
    names = list(PSI_PANELS) if panels else ["default"]
    reports = {}
    for name in names:
        regime_over, run_over = PSI_PANELS[name] if panels else ({}, {})
        x, psi, report = _psi_panel(cfg, loss, regime_over, run_over)
        suffix = f"_{name}" if panels else ""
        em.csv(f"psi{suffix}.csv", ["x", "psi"], zip(x, psi))
        reports[name] = report
        log.info("psi %s: %s %s", name, report["structure"], report["positive_intervals"])
    payload = {"panels": reports} if panels else reports["default"]
    payload["cdf"] = cfg.run.cdf
    payload["m"] = cfg.run.m
    em.json("psi_panels.json" if panels else "psi_layers.json", payload)
    return payload


TABLE_COLUMNS = [
    "family",
    "expected_claims",
    "policy_count",
    "criterion_optimal",
    "d_exact",
    "d_gaussian",
    "d_np",
    "a1_optimal",
    "a1_exact",
    "a1_gaussian",
    "a1_np",
    "x_eps",
    "delta",
    "seed",
]


def _report_row(r):
    d = r.degradation_raw
    kinds = list(ApproximationKind)
    return [
        r.family,
        r.expected_claims,
        r.policy_count,
        r.criterion_optimal,
        *(d[k] for k in kinds),
        r.a1_optimal,
        *(r.a1(k) for k in kinds),
        r.x_eps,
        r.delta,
        r.seed,
    ]


def cmd_table51(cfg: ExperimentConfig, em: Emitter) -> list:
    if cfg.regime.variant != "expected_value":
        raise ConfigError("table51 needs the expected_value regime")
    p, g = cfg.portfolio, cfg.regime
    reports = run_grid(
        cfg.pricing(),
        cfg.run.families,
        cfg.run.expected_claims_grid,
        cfg.run.m,
        cfg.run.seed,
        g.epsilon,
        g.beta,
        p.mean_per_event,
        p.sd_per_event,
        p.claim_frequency,
        cfg.run.workers,
    )
    em.csv("table51.csv", TABLE_COLUMNS, (_report_row(r) for r in reports))
    for r in reports:
        log.info("%s J*mu=%g C=%.4f D=%s", r.family, r.expected_claims, r.criterion_optimal, r.degradation_raw)
    return reports


def cmd_kfunction(cfg: ExperimentConfig, em: Emitter) -> dict:
    regime = cfg.pricing()
    k = k_function(regime)
    u = np.linspace(0.0, 1.0, 1024)
    kv, wv = k(u), k.w(u)
    spec = cfg.spec()
    mc = kf_monte_carlo(
        lambda m, seed: simulate_portfolio(spec, m, seed).sample,
        regime.z_law if isinstance(regime, ExponentialMarketPricing) else GammaLaw(),
        regime.market_factor,
        regime.theta if isinstance(regime, ExponentialMarketPricing) else 1.0,
        cfg.run.m,
        np.array([0.0]),
        cfg.run.h,
        cfg.run.seed,
    )
    k_mc = mc.at_level(u)
    em.csv("kfunction.csv", ["u", "k", "w", "k_mc"], zip(u, kv, wv, k_mc))
    cond = condition_check(regime)
    delta = solve_delta(k, regime.gamma)
    report = {
        "k0": k.k0,
        "argmax": k.argmax,
        "k_max": k.maximum,
        "delta": delta,
        "w_nondecreasing": cond.w_nondecreasing,
        "k0_exceeds_gamma": cond.k0_exceeds_gamma,
        "condition_holds": cond.holds,
        "mc_sup_gap": float(np.max(np.abs(k_mc - kv))),
        "mc_m": cfg.run.m,
        "mc_k_at_zero": float(mc.k_star[0]),
    }
    em.json("kfunction.json", report)
    log.info("K(0)=%.6g delta=%s condition=%s", k.k0, delta, cond.holds)
    return report


def cmd_rates(cfg: ExperimentConfig, em: Emitter) -> dict:
    grid = cfg.run.expected_claims_grid
    if len(grid) < 3:
        raise ConfigError("need >=3 points in expected_claims_grid for a decay slope")
    p, g = cfg.portfolio, cfg.regime
    reports = run_grid(
        cfg.pricing(),
        [p.family],
        grid,
        cfg.run.m,
        cfg.run.seed,
        g.epsilon,
        g.beta,
        p.mean_per_event,
        p.sd_per_event,
        p.claim_frequency,
        cfg.run.workers,
    )
    slopes, errors = {}, {}
    for kind in ApproximationKind:
        try:
            slopes[kind.value] = decay_slope(reports, kind)
        except InsufficientPoints as exc:
            slopes[kind.value] = None
            errors[kind.value] = str(exc)
    payload = {
        "family": p.family,
        "expected_claims": list(grid),
        "slopes": slopes,
        "slope_errors": errors,
        "theory_exponents": {"exact": -1.5, "np": -1.0, "gaussian": -1.0},
        "zeta1": reports[0].zeta1,
        "zeta2": reports[0].zeta2,
        "cells": [
            {
                "expected_claims": r.expected_claims,
                "policy_count": r.policy_count,
                "criterion_optimal": r.criterion_optimal,
                "degradation_raw": r.degradation_raw,
                "within_noise": r.within_noise,
                "seed": r.seed,
            }
            for r in reports
        ],
    }
    em.json("rates.json", payload)
    log.info("slopes %s", slopes)
    return payload


def cmd_simulate(cfg: ExperimentConfig, em: Emitter) -> dict:
    spec = cfg.spec()
    loss = simulate_portfolio(spec, cfg.run.m, cfg.run.seed, cfg.run.workers)
    levels = np.array([0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.995, 0.999])
    em.csv("simulate_quantiles.csv", ["level", "quantile"], ((lv, percentile(loss, lv)) for lv in levels))
    try:
        moms = compound_moments(spec)
        theory = {"mean": moms.mean, "sd": math.sqrt(moms.variance), "skewness": moms.skewness, "kappa": moms.kappa}
    except (MomentDivergence, ValueError):
        theory = None
    report = {
        "family": spec.severity.family.value,
        "shape": spec.severity.shape,
        "policy_count": spec.policy_count,
        "expected_claims": spec.expected_claims,
        "m": loss.m,
        "sample": {"mean": loss.mean, "sd": math.sqrt(loss.variance), "skewness": loss.skewness},
        "theory": theory,
    }
    em.json("simulate.json", report)
    return report


COMMANDS = {
    "psi": cmd_psi,
    "table51": cmd_table51,
    "kfunction": cmd_kfunction,
    "rates": cmd_rates,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("--m", type=int, help="Monte Carlo sample size")
    common.add_argument("--workers", type=int, help="parallel cells / simulation threads")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="reinsopt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"reinsopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    psi = sub.add_parser("psi", parents=[common], help="psi_lambda curve and implied layers")
    psi.add_argument("--panels", action="store_true", help="run the four standard parameter panels")
    sub.add_parser("table51", parents=[common], help="optimal criteria and degradations per family and J mu")
    sub.add_parser("kfunction", parents=[common], help="K, W and the Monte Carlo K* on a grid")
    sub.add_parser("rates", parents=[common], help="degradation decay slopes and rate constants")
    sub.add_parser("simulate", parents=[common], help="aggregate-loss sample summary")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.run.out or os.environ.get(OUT_ENV) or "results"
        cfg = cfg.with_run(seed=args.seed, m=args.m, workers=args.workers, out=out)
        em = Emitter(cfg, Path(out))
        kwargs = {"panels": args.panels} if args.command == "psi" else {}
        COMMANDS[args.command](cfg, em, **kwargs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AllInfeasible, StructureViolation) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (QuadratureFailure, DegenerateDerivative, InsufficientPoints, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in em.written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
