"""Optimal lower attachment, large-portfolio approximations, degradations and their decay rates."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .contracts import ContractEvaluator, CriterionResult, LayerProgram
from .errors import AllInfeasible, DegenerateDerivative, InsufficientPoints
from .pricing import KFunction, PricingRegime, k_function, solve_delta
from .severity import (
    CompoundMoments,
    EmpiricalLoss,
    Family,
    PortfolioSpec,
    calibrate_shape,
    compound_moments,
    percentile,
    simulate_portfolio,
)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class ApproximationKind(str, enum.Enum):
    EXACT_PERCENTILE = "exact"
    GAUSSIAN = "gaussian"
    NORMAL_POWER = "np"


def golden_section(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def optimize_lower(
    k: KFunction,
    loss: EmpiricalLoss,
    gamma: float,
    beta: float,
    epsilon: float = 0.01,
    evaluator: ContractEvaluator | None = None,
    grid_points: int = 512,
) -> tuple[float, CriterionResult]:
    """Minimize the criterion of ``(0, a1, x_eps)`` over ``a1 in [0, x_eps]``.

    A coarse grid picks the bracket, golden section refines it to
    ``1e-6 x_eps``.  Infeasible attachments count as +inf.
    """
    ev = evaluator or ContractEvaluator(k, loss, epsilon)
    x_eps = ev.x_eps
    grid = np.linspace(0.0, x_eps, grid_points)
    vals = ev.one_layer_criterion(grid, gamma, beta)
    if not np.isfinite(vals).any():
        raise AllInfeasible("expected surplus is non-positive for every lower attachment")
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    a1, c = golden_section(lambda a: float(ev.one_layer_criterion(a, gamma, beta)), lo, hi, 1e-6 * max(x_eps, 1e-300))
    if vals[i] < c:
        a1 = float(grid[i])
    return a1, ev.criterion(LayerProgram.one_layer(a1, x_eps), gamma, beta)


def _no_reinsurance(delta, epsilon) -> bool:
    return delta is None or delta <= epsilon


def attach_exact_percentile(loss: EmpiricalLoss, delta, epsilon: float) -> LayerProgram:
    a2 = percentile(loss, 1.0 - epsilon)
    if _no_reinsurance(delta, epsilon):
        return LayerProgram.none(a2)
    a1 = 0.0 if delta >= 1.0 else percentile(loss, 1.0 - delta)
    return LayerProgram.one_layer(min(a1, a2), a2)


def _normal_attachments(moms: CompoundMoments, J: int, delta, epsilon: float, kappa: float):
    xi, sigma = moms.per_policy_mean, moms.per_policy_sd

    def p(x):
        return kappa * (x * x - 1.0) / 6.0

    phi_e = stats.norm.ppf(1.0 - epsilon)
    a2 = max(J * xi + math.sqrt(J) * sigma * phi_e + sigma * p(phi_e), 0.0)
    if _no_reinsurance(delta, epsilon):
        return LayerProgram.none(a2)
    if delta >= 1.0:
        return LayerProgram.one_layer(0.0, a2)
    phi_d = min(stats.norm.ppf(1.0 - delta), phi_e)
    a1 = J * xi + math.sqrt(J) * sigma * phi_d + sigma * p(phi_d)
    return LayerProgram.one_layer(a1, a2)


def attach_gaussian(moms: CompoundMoments, J: int, delta, epsilon: float) -> LayerProgram:
    """``a = J xi + sqrt(J) sigma phi`` at the ``1 - delta`` and ``1 - epsilon`` normal quantiles."""
    return _normal_attachments(moms, J, delta, epsilon, 0.0)


def attach_normal_power(moms: CompoundMoments, J: int, delta, epsilon: float) -> LayerProgram:
    """Gaussian attachments plus the skewness correction ``sigma kappa (phi^2 - 1) / 6``."""
    return _normal_attachments(moms, J, delta, epsilon, moms.kappa)


def zeta1(k: KFunction, moms: CompoundMoments, gamma: float, beta: float, delta: float, epsilon: float) -> float:
    """Leading constant of the exact-percentile degradation, ``D ~ zeta1 / J^1.5``.

    ``B1 = sigma^2 (int_{phi_d}^{phi_e} K{Phi(y)} dy + phi_d K(1 - delta))`` and
    ``zeta1 = -B1^2 / (2 sigma xi^3 (gamma - beta)^2 K'(1 - delta) phi(phi_d))``.
    """
    if not gamma > beta:
        raise ValueError("need gamma > beta")
    if delta is None:
        raise ValueError("zeta1 needs a delta root")
    kd = k.derivative(1.0 - delta)
    if kd >= -1e-12:
        raise DegenerateDerivative(f"K'(1 - delta) = {kd:.3g} is not negative")
    xi, sigma = moms.per_policy_mean, moms.per_policy_sd
    phi_d = stats.norm.ppf(1.0 - delta)
    phi_e = stats.norm.ppf(1.0 - epsilon)
    inner, _ = integrate.quad(lambda y: k(stats.norm.cdf(y)), phi_d, phi_e, epsabs=1e-10, epsrel=1e-12, limit=200)
    b1 = sigma**2 * (inner + phi_d * k(1.0 - delta))
    return -0.5 * b1**2 / (sigma * xi**3 * (gamma - beta) ** 2 * kd * stats.norm.pdf(phi_d))


def zeta2(k: KFunction, moms: CompoundMoments, gamma: float, beta: float, epsilon: float) -> float:
    """``sigma (gamma - K(1 - epsilon)) / (xi (gamma - beta)^2)``; Gaussian degradation is about ``zeta2 p(phi_e) / J``."""
    if not gamma > beta:
        raise ValueError("need gamma > beta")
    return moms.per_policy_sd * (gamma - k(1.0 - epsilon)) / (moms.per_policy_mean * (gamma - beta) ** 2)


@dataclass(frozen=True)
class DegradationReport:
    family: str
    expected_claims: float
    policy_count: int
    m: int
    seed: int
    delta: float | None
    x_eps: float
    a1_optimal: float
    criterion_optimal: float
    programs: dict = field(repr=False)
    criterion_approx: dict = field(default_factory=dict)
    degradation_raw: dict = field(default_factory=dict)
    zeta1: float | None = None
    zeta2: float | None = None

    @property
    def degradation(self) -> dict:
        """Degradations clamped at 0; the raw values stay in ``degradation_raw``."""
        return {k: max(v, 0.0) for k, v in self.degradation_raw.items()}

    @property
    def within_noise(self) -> dict:
        """True where the approximation measured better than the one-dimensional optimum."""
        return {k: v < 0 for k, v in self.degradation_raw.items()}

    def a1(self, kind) -> float:
        return self.programs[ApproximationKind(kind)].a1


def degradation_report(
    spec: PortfolioSpec,
    regime: PricingRegime,
    m: int,
    seed: int,
    epsilon: float = 0.01,
    beta: float = 0.0,
    loss: EmpiricalLoss | None = None,
) -> DegradationReport:
    """Optimal criterion and the degradation of the three approximations on one shared sample."""
    if loss is None:
        loss = simulate_portfolio(spec, m, seed)
    k = k_function(regime)
    gamma = regime.gamma
    delta = solve_delta(k, gamma)
    moms = compound_moments(spec)
    J = spec.policy_count
    ev = ContractEvaluator(k, loss, epsilon)
    a1_opt, best = optimize_lower(k, loss, gamma, beta, epsilon, evaluator=ev)

    programs = {
        ApproximationKind.EXACT_PERCENTILE: attach_exact_percentile(loss, delta, epsilon),
        ApproximationKind.GAUSSIAN: attach_gaussian(moms, J, delta, epsilon),
        ApproximationKind.NORMAL_POWER: attach_normal_power(moms, J, delta, epsilon),
    }
    crit = {kind: ev.criterion(prog, gamma, beta).value for kind, prog in programs.items()}
    try:
        z1 = zeta1(k, moms, gamma, beta, delta, epsilon)
    except (DegenerateDerivative, ValueError):
        z1 = None
    z2 = zeta2(k, moms, gamma, beta, epsilon) if gamma > beta else None
    return DegradationReport(
        family=spec.severity.family.value,
        expected_claims=spec.expected_claims,
        policy_count=J,
        m=loss.m,
        seed=seed,
        delta=delta,
        x_eps=ev.x_eps,
        a1_optimal=a1_opt,
        criterion_optimal=best.value,
        programs=programs,
        criterion_approx=crit,
        degradation_raw={kind: c - best.value for kind, c in crit.items()},
        zeta1=z1,
        zeta2=z2,
    )


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` on ``log x`` over points with ``y > 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 3:
        raise InsufficientPoints(f"need >=3 points with positive degradation, have {int(keep.sum())}")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def decay_slope(reports, kind) -> float:
    kind = ApproximationKind(kind)
    reports = sorted(reports, key=lambda r: r.expected_claims)
    return loglog_slope([r.expected_claims for r in reports], [r.degradation_raw[kind] for r in reports])


def cell_seed(master_seed: int, family, expected_claims: float) -> int:
    """Per-cell seed keyed on (family, J mu), independent of execution order and of which cells run."""
    key = (list(Family).index(Family(family)), int(round(expected_claims)))
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Cell:
    family: Family
    expected_claims: float


def _run_cell(args):
    cell, regime, m, master_seed, epsilon, beta, mean, sd, mu = args
    spec = PortfolioSpec.from_expected_claims(cell.expected_claims, mu, calibrate_shape(cell.family, mean, sd))
    seed = cell_seed(master_seed, cell.family, cell.expected_claims)
    return degradation_report(spec, regime, m, seed, epsilon, beta)


def run_grid(
    regime: PricingRegime,
    families,
    expected_claims,
    m: int,
    master_seed: int,
    epsilon: float = 0.01,
    beta: float = 0.0,
    mean_per_event: float = 10.0,
    sd_per_event: float = 15.0,
    claim_frequency: float = 0.05,
    workers: int = 1,
) -> list[DegradationReport]:
    """Degradation reports for every (family, expected claims) cell, row-major by family.

    Cell seeds depend only on the master seed and the cell's indices, so the
    output is the same for any ``workers``.
    """
    cells = [Cell(Family(f), float(jm)) for f in families for jm in expected_claims]
    jobs = [(c, regime, m, master_seed, epsilon, beta, mean_per_event, sd_per_event, claim_frequency) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]
