"""Reinsurance premium principles and the K function.

A regime prices an indemnity ``I`` as ``E{I(X) M(Z)}``.  With ``U = F(X)`` the
pricing kernel conditional on the loss level is ``W(u) = E{M(Z) | U = u}`` and

    K(u) = int_u^1 {W(v) - 1} dv,

so that the reinsurer's expected margin is ``int K{F(t)} dI(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Union

import numpy as np
from scipy import integrate, interpolate, optimize, signal, special, stats

from .errors import QuadratureFailure

_TINY = 1e-300


@dataclass(frozen=True)
class GammaLaw:
    """Gamma distribution given by mean and standard deviation."""

    mean: float = 1.0
    sd: float = 0.3

    def __post_init__(self):
        if not (self.mean > 0 and self.sd > 0):
            raise ValueError("GammaLaw needs positive mean and sd")

    @property
    def shape(self) -> float:
        return (self.mean / self.sd) ** 2

    @property
    def scale(self) -> float:
        return self.sd**2 / self.mean

    def ppf(self, v):
        return special.gammaincinv(self.shape, v) * self.scale

    def isf(self, q):
        return special.gammainccinv(self.shape, q) * self.scale

    def pdf(self, z):
        return stats.gamma.pdf(z, self.shape, scale=self.scale)

    def mgf(self, omega: float) -> float:
        if omega * self.scale >= 1.0:
            raise ValueError(f"E(exp(omega Z)) is infinite for omega >= {1 / self.scale:.6g}")
        return (1.0 - omega * self.scale) ** (-self.shape)


@dataclass(frozen=True)
class ExpectedValuePricing:
    """Fixed reinsurance loading: ``M(Z) = 1 + gamma_re``."""

    gamma_re: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("primary loading gamma must be positive")
        if not self.gamma_re >= 0:
            raise ValueError("gamma_re must be non-negative")

    def market_factor(self, z):
        return np.full(np.shape(z), 1.0 + self.gamma_re)


@dataclass(frozen=True)
class ExponentialMarketPricing:
    """``M(Z) = (1 + gamma_re) exp(omega Z) / E exp(omega Z)`` with (U, V) Clayton-coupled."""

    gamma_re: float
    omega: float
    theta: float
    gamma: float
    z_law: GammaLaw = GammaLaw()

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("primary loading gamma must be positive")
        if not self.gamma_re >= 0:
            raise ValueError("gamma_re must be non-negative")
        if not self.omega >= 0:
            raise ValueError("omega must be non-negative")
        if not self.theta > 0:
            raise ValueError("Clayton theta must be positive")
        self.z_law.mgf(self.omega)

    def market_factor(self, z):
        z = np.asarray(z, dtype=float)
        return (1.0 + self.gamma_re) * np.exp(self.omega * z) / self.z_law.mgf(self.omega)


PricingRegime = Union[ExpectedValuePricing, ExponentialMarketPricing]


def _clayton_log_conditional(u, y, theta):
    # log V for V = (1 + u^-theta (y^(-theta/(1+theta)) - 1))^(-1/theta), evaluated in logs
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    lt = -theta * np.log(u) + np.log(np.expm1(-theta / (1.0 + theta) * np.log(y)))
    return -np.logaddexp(0.0, lt) / theta


def clayton_conditional(u, y, theta: float):
    """Clayton conditional inverse: the V paired with U = u when the conditional cdf equals y."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if not theta > 0:
        raise ValueError("theta must be positive")
    if np.any((u <= 0) | (u >= 1)) or np.any((y <= 0) | (y >= 1)):
        raise ValueError("u and y must lie strictly inside (0, 1)")
    v = np.exp(_clayton_log_conditional(u, y, theta))
    return v if v.ndim else float(v)


def clayton_sample(m: int, theta: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    u = rng.random(m)
    y = rng.random(m)
    np.clip(u, _TINY, None, out=u)
    np.clip(y, _TINY, None, out=y)
    return u, np.exp(_clayton_log_conditional(u, y, theta))


def _copula_z(u, y, theta, z_law: GammaLaw):
    """Z = G^-1(V) for the Clayton-conditional V, using the upper tail where V is close to 1."""
    lv = _clayton_log_conditional(u, y, theta)
    v = np.exp(lv)
    q = -np.expm1(lv)
    return np.where(v < 0.5, z_law.ppf(v), z_law.isf(q))


def w_function(regime: PricingRegime, u):
    """Pricing kernel ``W(u) = E{M(Z) | U = u}``."""
    if isinstance(regime, ExpectedValuePricing):
        w = np.full(np.shape(u), 1.0 + regime.gamma_re)
        return w if w.ndim else float(w)
    u_arr = np.clip(np.asarray(u, dtype=float), _TINY, 1.0)
    if regime.omega == 0:
        w = np.full(u_arr.shape, 1.0 + regime.gamma_re)
        return w if w.ndim else float(w)

    def integrand(y, uu):
        return regime.market_factor(_copula_z(uu, y, regime.theta, regime.z_law))

    if u_arr.ndim == 0:
        val, err = integrate.quad(integrand, 0.0, 1.0, args=(float(u_arr),), epsabs=0.0, epsrel=1e-8, limit=200)
        if err > 1e-8 * abs(val) + 1e-12:
            raise QuadratureFailure(f"W({float(u_arr)}) quadrature error {err:.3g}")
        return float(val)
    val, err = integrate.quad_vec(lambda y: integrand(y, u_arr), 0.0, 1.0, epsabs=1e-13, epsrel=1e-9, norm="max")
    if err > 1e-8 * np.max(np.abs(val)):
        raise QuadratureFailure(f"W quadrature error {err:.3g}")
    return val


class KFunction:
    """K(u), W(u) and K'(u) = -(W(u) - 1) on [0, 1], with cached root/maximum queries."""

    def __init__(self, k: Callable, w: Callable, name: str = ""):
        self._k = k
        self._w = w
        self.name = name

    def __call__(self, u):
        r = self._k(np.asarray(u, dtype=float))
        return r if np.ndim(r) else float(r)

    def w(self, u):
        r = self._w(np.asarray(u, dtype=float))
        return r if np.ndim(r) else float(r)

    def derivative(self, u):
        r = 1.0 - self._w(np.asarray(u, dtype=float))
        return r if np.ndim(r) else float(r)

    @cached_property
    def k0(self) -> float:
        return self(0.0)

    @cached_property
    def argmax(self) -> float:
        """Location of the maximum of K (0 when K is decreasing)."""
        grid = np.linspace(0.0, 1.0, 4097)
        vals = self(grid)
        i = int(np.argmax(vals))
        if i == 0 and self.w(0.0) >= 1.0:
            return 0.0
        if i == len(grid) - 1:
            return 1.0
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        # K' = 1 - W changes sign at the maximum
        if self.w(lo) < 1.0 < self.w(hi):
            return float(optimize.brentq(lambda u: self.w(u) - 1.0, lo, hi, xtol=1e-15))
        return float(grid[i])

    @cached_property
    def maximum(self) -> float:
        return self(self.argmax)

    def delta(self, gamma: float):
        return solve_delta(self, gamma)

    @classmethod
    def linear(cls, gamma_re: float) -> "KFunction":
        def k(u):
            return gamma_re * (1.0 - u)

        def w(u):
            return np.full(np.shape(u), 1.0 + gamma_re)

        return cls(k, w, name=f"expected-value(gamma_re={gamma_re})")


def _market_nodes(n: int) -> np.ndarray:
    # Chebyshev-clustered at both ends plus log-spaced nodes where W varies on a log(u) scale
    t = np.linspace(0.0, 1.0, n + 1)
    cheb = 0.5 * (1.0 - np.cos(np.pi * t))
    return np.unique(np.concatenate([cheb[1:], np.logspace(-20, -4, 161)]))


def _market_k(regime: ExponentialMarketPricing, n: int) -> KFunction:
    nodes = _market_nodes(n)
    w_nodes = w_function(regime, nodes)
    # small quadrature noise must not break monotone interpolation of a monotone W
    w_interp = interpolate.PchipInterpolator(nodes, w_nodes - 1.0, extrapolate=False)
    anti = w_interp.antiderivative()
    u_lo = nodes[0]
    total = float(anti(1.0))
    w_lo = float(w_nodes[0])

    def k(u):
        u = np.clip(u, 0.0, 1.0)
        inner = total - anti(np.maximum(u, u_lo))
        return np.where(u < u_lo, inner + (u_lo - u) * (w_lo - 1.0), inner)

    def w(u):
        u = np.clip(u, 0.0, 1.0)
        return 1.0 + np.where(u < u_lo, w_lo - 1.0, w_interp(np.maximum(u, u_lo)))

    return KFunction(k, w, name=repr(regime))


def expected_market_factor(regime: PricingRegime) -> float:
    """E{M(Z)} by direct integration against the law of Z (no copula involved)."""
    if isinstance(regime, ExpectedValuePricing):
        return 1.0 + regime.gamma_re
    law = regime.z_law
    log_norm = math.log1p(regime.gamma_re) - math.log(law.mgf(regime.omega))

    def integrand(z):
        return math.exp(log_norm + regime.omega * z + stats.gamma.logpdf(z, law.shape, scale=law.scale))

    val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)


@lru_cache(maxsize=32)
def k_function(regime: PricingRegime, grid_size: int = 1024) -> KFunction:
    """Build the K function of ``regime``; closed form for expected-value pricing.

    The market regime caches W on ``grid_size`` Chebyshev nodes (plus log-spaced
    nodes near 0), interpolates monotonically, and integrates the interpolant
    exactly.  K(0) is checked against ``E{M(Z)} - 1``.
    """
    if isinstance(regime, ExpectedValuePricing) or regime.omega == 0:
        return KFunction.linear(regime.gamma_re)
    kf = _market_k(regime, grid_size)
    direct = expected_market_factor(regime) - 1.0
    if abs(kf.k0 - direct) > 1e-6:
        raise QuadratureFailure(f"K(0)={kf.k0:.10g} disagrees with E(M)-1={direct:.10g}")
    return kf


def solve_delta(k: KFunction, gamma: float):
    """delta in (0, 1] with K(1 - delta) = gamma on the decreasing branch, or None.

    None means K stays below gamma right of its maximum: reinsurance is too
    expensive at every attachment.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    u0 = k.argmax
    if k(u0) < gamma:
        return None
    if k(u0) == gamma:
        return 1.0 - u0
    root = optimize.brentq(lambda u: k(u) - gamma, u0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(k(root) - gamma) >= 1e-10:
        raise QuadratureFailure(f"delta root residual {k(root) - gamma:.3g}")
    return 1.0 - root


@dataclass(frozen=True)
class ConditionReport:
    w_nondecreasing: bool
    k0: float
    gamma: float

    @property
    def k0_exceeds_gamma(self) -> bool:
        return self.k0 > self.gamma

    @property
    def holds(self) -> bool:
        return self.w_nondecreasing and self.k0_exceeds_gamma


def condition_check(regime: PricingRegime, grid_points: int = 10_000) -> ConditionReport:
    """Check W non-decreasing (on a grid) and K(0) > gamma."""
    kf = k_function(regime)
    w = kf.w(np.linspace(0.0, 1.0, grid_points))
    return ConditionReport(
        w_nondecreasing=bool(np.all(np.diff(w) >= -1e-9)),
        k0=kf.k0,
        gamma=regime.gamma,
    )


class KernelCDF:
    """Gaussian-kernel smoothed cdf ``F*(x) = mean(Phi((x - X_i) / (h s)))`` with s the sample sd.

    Small problems are evaluated exactly; large ones through linear binning on
    a grid of spacing bandwidth/256 and an FFT convolution.
    """

    _EXACT_LIMIT = 4_000_000

    def __init__(self, sample, h: float = 0.2):
        self.sample = np.sort(np.asarray(sample, dtype=float))
        self.h = h
        self.bandwidth = h * float(np.std(self.sample, ddof=1))

    def _exact(self, x):
        out = np.empty(x.size)
        step = max(1, self._EXACT_LIMIT // self.sample.size)
        for i in range(0, x.size, step):
            z = (x[i : i + step, None] - self.sample[None, :]) / self.bandwidth
            out[i : i + step] = special.ndtr(z).mean(axis=1)
        return out

    @cached_property
    def _table(self):
        b = self.bandwidth
        lo = self.sample[0] - 9.0 * b
        hi = self.sample[-1] + 9.0 * b
        n = min(int(math.ceil((hi - lo) / (b / 256.0))) + 1, 1 << 21)
        grid = np.linspace(lo, hi, n)
        d = grid[1] - grid[0]
        pos = (self.sample - lo) / d
        i = np.minimum(pos.astype(np.int64), n - 2)
        frac = pos - i
        weights = np.bincount(i, 1.0 - frac, minlength=n) + np.bincount(i + 1, frac, minlength=n)
        lags = np.arange(-(n - 1), n) * (d / b)
        conv = signal.fftconvolve(weights, special.ndtr(lags), mode="full")[n - 1 : 2 * n - 1]
        return grid, np.clip(conv / self.sample.size, 0.0, 1.0)

    def __call__(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if self.bandwidth == 0:
            out = np.searchsorted(self.sample, x_arr, side="right") / self.sample.size
        elif x_arr.size * self.sample.size <= self._EXACT_LIMIT:
            out = self._exact(x_arr)
        else:
            grid, table = self._table
            out = np.interp(x_arr, grid, table, left=0.0, right=1.0)
        return out if np.ndim(x) else float(out[0])


@dataclass(frozen=True, eq=False)
class CopulaMcEstimate:
    x: np.ndarray
    f_star: np.ndarray
    k_star: np.ndarray
    m: int
    h: float
    seed: int
    u_sorted: np.ndarray
    tail_sums: np.ndarray

    def at_level(self, u):
        """K* evaluated directly at quantile levels ``u``."""
        idx = np.searchsorted(self.u_sorted, np.asarray(u, dtype=float), side="right")
        return self.tail_sums[idx] / self.m


def kf_monte_carlo(
    loss_sampler: Callable[[int, int], np.ndarray],
    z_law: GammaLaw,
    market_factor: Callable,
    theta: float,
    m: int,
    x_grid,
    h: float = 0.2,
    seed: int = 0,
) -> CopulaMcEstimate:
    """Monte Carlo estimate of K{F(x)} through a kernel cdf and Clayton-coupled market draws.

    ``loss_sampler(m, seed)`` returns m draws of the aggregate loss.  The
    returned ``k_star`` is ``mean((M(Z_i) - 1) * [U_i > F*(x)])`` on ``x_grid``.
    """
    if m < 1000:
        raise ValueError("m must be at least 1000")
    x_sample = np.asarray(loss_sampler(m, seed), dtype=float)
    fk = KernelCDF(x_sample, h)
    u = np.clip(fk(x_sample), _TINY, 1.0 - 1e-16)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC0]))
    y = np.clip(rng.random(m), _TINY, None)
    z = _copula_z(u, y, theta, z_law)
    excess = np.asarray(market_factor(z), dtype=float) - 1.0

    order = np.argsort(u, kind="stable")
    u_sorted = u[order]
    tail = np.concatenate((np.cumsum(excess[order][::-1])[::-1], [0.0]))
    x_grid = np.asarray(x_grid, dtype=float)
    f_star = fk(x_grid)
    idx = np.searchsorted(u_sorted, f_star, side="right")
    return CopulaMcEstimate(
        x=x_grid,
        f_star=np.atleast_1d(f_star),
        k_star=tail[idx] / m,
        m=m,
        h=h,
        seed=int(seed),
        u_sorted=u_sorted,
        tail_sums=tail,
    )
