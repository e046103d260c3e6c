"""Claim severity laws, compound-Poisson portfolios and seeded aggregate-loss sampling.

All three severity families are parameterized so that ``mean_per_event`` is
the mean claim size and ``shape`` controls dispersion:

* Gamma: shape ``alpha``, scale ``mean / alpha``.
* Lognormal: ``log Y ~ N(alpha, 2 (log mean - alpha))``.
* Pareto (Lomax): tail index ``alpha``, scale ``mean * (alpha - 1)``.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from .errors import InfeasibleCalibration, MomentDivergence

# Claims drawn per simulation block; fixes the block layout independently of workers.
_CLAIMS_PER_BLOCK = 1 << 23
_MAX_BLOCK = 1 << 16


class Family(str, enum.Enum):
    GAMMA = "gamma"
    LOGNORMAL = "lognormal"
    PARETO = "pareto"


@dataclass(frozen=True)
class SeverityModel:
    family: Family
    mean_per_event: float
    shape: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.mean_per_event > 0:
            raise ValueError(f"mean_per_event must be positive, got {self.mean_per_event}")
        if not self.shape > 0:
            raise ValueError(f"shape must be positive, got {self.shape}")
        if self.family is Family.LOGNORMAL and not self.shape < math.log(self.mean_per_event):
            raise ValueError("lognormal shape (log-mean) must be below log(mean_per_event)")
        if self.family is Family.PARETO and not self.shape > 1:
            raise ValueError("Pareto shape must exceed 1 for a finite mean")

    @property
    def log_variance(self) -> float:
        """Variance of log Y (lognormal family only)."""
        return 2.0 * (math.log(self.mean_per_event) - self.shape)

    @property
    def pareto_scale(self) -> float:
        return self.mean_per_event * (self.shape - 1.0)

    def moment(self, order: int) -> float:
        return severity_moments(self, order)

    @property
    def sd(self) -> float:
        return math.sqrt(self.moment(2) - self.mean_per_event**2)

    @property
    def skewness(self) -> float:
        m1, m2, m3 = (self.moment(k) for k in (1, 2, 3))
        var = m2 - m1 * m1
        return (m3 - 3 * m1 * var - m1**3) / var**1.5

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        xi, a = self.mean_per_event, self.shape
        if self.family is Family.GAMMA:
            return rng.gamma(a, xi / a, size)
        if self.family is Family.LOGNORMAL:
            y = rng.standard_normal(size)
            y *= math.sqrt(self.log_variance)
            y += a
            return np.exp(y, out=y)
        y = rng.pareto(a, size)
        y *= self.pareto_scale
        return y

    def frozen(self):
        """Equivalent ``scipy.stats`` frozen distribution (used by tests and oracles)."""
        xi, a = self.mean_per_event, self.shape
        if self.family is Family.GAMMA:
            return stats.gamma(a, scale=xi / a)
        if self.family is Family.LOGNORMAL:
            return stats.lognorm(math.sqrt(self.log_variance), scale=math.exp(a))
        return stats.lomax(a, scale=self.pareto_scale)


def calibrate_shape(family: Family | str, mean_per_event: float, sd_per_event: float) -> SeverityModel:
    """Return the model of ``family`` with the requested mean and standard deviation."""
    family = Family(family)
    if not (mean_per_event > 0 and sd_per_event > 0):
        raise InfeasibleCalibration("mean and sd must both be positive")
    cv2 = (sd_per_event / mean_per_event) ** 2
    if family is Family.GAMMA:
        shape = 1.0 / cv2
    elif family is Family.LOGNORMAL:
        shape = math.log(mean_per_event) - 0.5 * math.log1p(cv2)
        if not shape > 0:
            raise InfeasibleCalibration(
                f"lognormal log-mean {shape:.4g} is not positive for mean={mean_per_event}, sd={sd_per_event}"
            )
    else:
        # sd = mean * sqrt(alpha / (alpha - 2))
        if cv2 <= 1.0:
            raise InfeasibleCalibration("Pareto calibration needs sd > mean (shape would not exceed 2)")
        shape = 2.0 * cv2 / (cv2 - 1.0)
    return SeverityModel(family, mean_per_event, shape)


def severity_moments(model: SeverityModel, order: int) -> float:
    """Closed-form raw moment ``E(Y**order)`` for ``order`` in {1, 2, 3}."""
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    xi, a = model.mean_per_event, model.shape
    if model.family is Family.GAMMA:
        return xi**order * math.prod(1.0 + i / a for i in range(order))
    if model.family is Family.LOGNORMAL:
        return math.exp(order * a + 0.5 * order * order * model.log_variance)
    if order >= a:
        raise MomentDivergence(f"Pareto moment of order {order} diverges for shape {a}")
    b = model.pareto_scale
    return b**order * math.factorial(order) / math.prod(a - i for i in range(1, order + 1))


@dataclass(frozen=True)
class PortfolioSpec:
    policy_count: int
    claim_frequency: float
    severity: SeverityModel

    def __post_init__(self):
        if int(self.policy_count) != self.policy_count or self.policy_count < 1:
            raise ValueError(f"policy_count must be a positive integer, got {self.policy_count}")
        if not self.claim_frequency >= 0:
            raise ValueError(f"claim_frequency must be non-negative, got {self.claim_frequency}")

    @classmethod
    def from_expected_claims(cls, expected_claims: float, claim_frequency: float, severity: SeverityModel):
        return cls(round(expected_claims / claim_frequency), claim_frequency, severity)

    @property
    def expected_claims(self) -> float:
        return self.policy_count * self.claim_frequency

    @property
    def per_policy_mean(self) -> float:
        return self.claim_frequency * self.severity.mean_per_event

    @property
    def per_policy_variance(self) -> float:
        return self.claim_frequency * self.severity.moment(2)


@dataclass(frozen=True)
class CompoundMoments:
    """Moments of the portfolio total; ``skewness == kappa / sqrt(policy_count)``."""

    mean: float
    variance: float
    skewness: float
    kappa: float
    policy_count: int

    @property
    def per_policy_mean(self) -> float:
        return self.mean / self.policy_count

    @property
    def per_policy_sd(self) -> float:
        return math.sqrt(self.variance / self.policy_count)


def compound_moments(spec: PortfolioSpec) -> CompoundMoments:
    # k-th cumulant of a compound Poisson total is (J mu) E(Y^k)
    lam = spec.expected_claims
    if not lam > 0:
        raise ValueError("compound moments need a positive expected claim count")
    m1, m2, m3 = (spec.severity.moment(k) for k in (1, 2, 3))
    skew = m3 / (math.sqrt(lam) * m2**1.5)
    return CompoundMoments(
        mean=lam * m1,
        variance=lam * m2,
        skewness=skew,
        kappa=math.sqrt(spec.policy_count) * skew,
        policy_count=spec.policy_count,
    )


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalLoss:
    """Sorted Monte Carlo sample of the aggregate loss."""

    sample: np.ndarray
    seed: int | None = None
    spec: PortfolioSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.array(self.sample, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("an empirical loss needs a one-dimensional sample of size >= 2")
        if np.any(x[1:] < x[:-1]):
            x.sort()
        object.__setattr__(self, "sample", _readonly(x))

    @property
    def m(self) -> int:
        return self.sample.size

    def percentile(self, level: float) -> float:
        return percentile(self, level)

    def cdf(self, x):
        """Right-continuous empirical distribution function."""
        return np.searchsorted(self.sample, x, side="right") / self.m

    @cached_property
    def mean(self) -> float:
        return float(self.sample.mean())

    @cached_property
    def variance(self) -> float:
        return float(self.sample.var(ddof=1))

    @cached_property
    def skewness(self) -> float:
        return float(stats.skew(self.sample))

    def kernel_cdf(self, h: float = 0.2):
        from .pricing import KernelCDF

        return KernelCDF(self.sample, h)


def percentile(loss: EmpiricalLoss, level: float) -> float:
    """Order statistic number ``round(level * m)`` (1-based), clamped to ``[1, m]``."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    i = min(max(int(math.floor(level * loss.m + 0.5)), 1), loss.m)
    return float(loss.sample[i - 1])


def _block_layout(expected_claims: float, m: int) -> list[tuple[int, int]]:
    size = max(1, min(_MAX_BLOCK, int(_CLAIMS_PER_BLOCK // max(expected_claims, 1.0))))
    return [(start, min(size, m - start)) for start in range(0, m, size)]


def _simulate_block(spec: PortfolioSpec, seed: int, index: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    counts = rng.poisson(spec.expected_claims, n)
    out = np.zeros(n)
    hit = counts > 0
    if not hit.any():
        return out
    sev = spec.severity
    if sev.family is Family.GAMMA:
        # a sum of k iid Gamma(a, s) claims is Gamma(k a, s)
        out[hit] = rng.gamma(counts[hit] * sev.shape, sev.mean_per_event / sev.shape)
        return out
    claims = sev.sample(rng, int(counts.sum()))
    starts = np.concatenate(([0], np.cumsum(counts[hit])[:-1]))
    out[hit] = np.add.reduceat(claims, starts)
    return out


def simulate_portfolio(spec: PortfolioSpec, m: int, seed: int, workers: int = 1) -> EmpiricalLoss:
    """Draw ``m`` aggregate losses ``sum_{i<=N} Y_i`` with ``N ~ Poisson(J mu)``.

    Replications are split into fixed blocks, each with its own
    ``SeedSequence(seed, spawn_key=(block,))`` stream, so the result depends
    on ``(spec, m, seed)`` only and not on ``workers``.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    seed = int(seed)
    layout = _block_layout(spec.expected_claims, m)
    jobs = [(spec, seed, i, n) for i, (_, n) in enumerate(layout)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda job: _simulate_block(*job), jobs))
    else:
        parts = [_simulate_block(*job) for job in jobs]
    return EmpiricalLoss(np.sort(np.concatenate(parts)), seed=seed, spec=spec)


def cornish_fisher_normalized(kappa: float, policy_count: int, epsilon: float) -> float:
    """Normalized upper ``epsilon`` percentile ``phi + p(phi) / sqrt(J)``, ``p(x) = kappa (x^2 - 1) / 6``."""
    z = stats.norm.ppf(1.0 - epsilon)
    return float(z + kappa * (z * z - 1.0) / 6.0 / math.sqrt(policy_count))


def cornish_fisher_percentile(moms: CompoundMoments, policy_count: int, epsilon: float) -> float:
    """Money-scale normal-power percentile ``J xi + sqrt(J) sigma phi + sigma p(phi)``."""
    xi, sigma = moms.per_policy_mean, moms.per_policy_sd
    x0 = cornish_fisher_normalized(moms.kappa, policy_count, epsilon)
    return policy_count * xi + math.sqrt(policy_count) * sigma * x0
