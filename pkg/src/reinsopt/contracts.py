"""Layer contracts, the risk-over-surplus criterion and the psi_lambda crossing analysis."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import StructureViolation
from .pricing import KernelCDF, KFunction
from .severity import EmpiricalLoss, percentile

UNSTABLE_SURPLUS = 1e-12


@dataclass(frozen=True)
class LayerProgram:
    """Ground-up layer ``[0, b2]`` plus the layer ``[a1, a2]``; ``b2 = 0`` is a one-layer contract."""

    b2: float
    a1: float
    a2: float

    def __post_init__(self):
        for name in ("b2", "a1", "a2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 <= self.b2 <= self.a1 <= self.a2:
            raise ValueError(f"need 0 <= b2 <= a1 <= a2, got ({self.b2}, {self.a1}, {self.a2})")

    @classmethod
    def none(cls, x_eps: float) -> "LayerProgram":
        return cls(0.0, x_eps, x_eps)

    @classmethod
    def one_layer(cls, a1: float, a2: float) -> "LayerProgram":
        return cls(0.0, min(max(a1, 0.0), a2), a2)

    @property
    def is_empty(self) -> bool:
        return self.b2 == 0.0 and self.a1 == self.a2

    @property
    def has_b_layer(self) -> bool:
        return self.b2 > 0.0


def indemnity(prog: LayerProgram, x):
    x = np.asarray(x, dtype=float)
    r = np.minimum(x, prog.b2) + np.clip(x - prog.a1, 0.0, prog.a2 - prog.a1)
    return r if r.ndim else float(r)


def var_retained(prog: LayerProgram, x_eps: float) -> float:
    """Retained Value at Risk ``x_eps - I(x_eps)``."""
    return float(x_eps - indemnity(prog, x_eps))


@dataclass(frozen=True)
class CriterionResult:
    var_retained: float
    expected_surplus: float
    reinsurer_margin: float
    criterion: float | None
    unstable: bool = False

    @property
    def feasible(self) -> bool:
        return self.expected_surplus > 0

    @property
    def value(self) -> float:
        """Criterion, or +inf for infeasible programs (for minimization)."""
        return self.criterion if self.criterion is not None else np.inf


class ContractEvaluator:
    """Evaluates margins and criteria of many programs against one loss sample.

    With the empirical cdf, ``S(x) = int_0^x K{F_m(t)} dt`` is piecewise linear
    between order statistics and is tabulated exactly once, so every margin is
    two lookups.  With the kernel cdf the integral is a trapezoid rule refined
    until the relative change drops below 1e-4.
    """

    def __init__(self, k: KFunction, loss: EmpiricalLoss, epsilon: float = 0.01, cdf: str = "empirical", h: float = 0.2):
        if cdf not in ("empirical", "kernel"):
            raise ValueError(f"cdf must be 'empirical' or 'kernel', got {cdf!r}")
        self.k = k
        self.loss = loss
        self.epsilon = epsilon
        self.cdf_kind = cdf
        self.h = h
        self.x_eps = percentile(loss, 1.0 - epsilon)
        self.mean = loss.mean

    @cached_property
    def _kernel(self) -> KernelCDF:
        return KernelCDF(self.loss.sample, self.h)

    def cdf(self, x):
        if self.cdf_kind == "kernel":
            return self._kernel(x)
        return self.loss.cdf(x)

    def k_of_x(self, x):
        return self.k(np.clip(self.cdf(x), 0.0, 1.0))

    @cached_property
    def _table(self):
        xs = self.loss.sample
        m = xs.size
        # K at the cdf level holding on [X_(i), X_(i+1))
        k_levels = self.k(np.arange(1, m + 1) / m)
        s = np.empty(m)
        s[0] = self.k0 * max(xs[0], 0.0)
        np.cumsum(np.diff(xs) * k_levels[:-1], out=s[1:])
        s[1:] += s[0]
        return xs, k_levels, s

    @cached_property
    def k0(self) -> float:
        return self.k(0.0)

    def integral_k(self, x):
        """``int_0^x K{F(t)} dt`` for the chosen cdf."""
        if self.cdf_kind == "kernel":
            return self._trapezoid(0.0, float(x))
        xs, k_levels, s = self._table
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(xs, x, side="right")
        j = np.maximum(i - 1, 0)
        above = s[j] + (x - xs[j]) * k_levels[j]
        r = np.where(i == 0, self.k0 * np.maximum(x, 0.0), above)
        return r if r.ndim else float(r)

    def _trapezoid(self, lo: float, hi: float, n: int = 2048, rtol: float = 1e-4) -> float:
        if hi <= lo:
            return 0.0
        prev = None
        while True:
            t = np.linspace(lo, hi, n + 1)
            val = float(np.trapezoid(self.k_of_x(t), t))
            if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
                return val
            if n >= 1 << 20:
                return val
            prev, n = val, 2 * n

    def margin(self, prog: LayerProgram) -> float:
        """Expected reinsurer margin ``pi(I) - E{I(X)} = int K{F(t)} dI(t)``."""
        if self.cdf_kind == "kernel":
            return self._trapezoid(0.0, prog.b2) + self._trapezoid(prog.a1, prog.a2)
        return float(self.integral_k(prog.b2) + self.integral_k(prog.a2) - self.integral_k(prog.a1))

    def surplus(self, prog: LayerProgram, gamma: float, beta: float) -> float:
        return gamma * self.mean - self.margin(prog) - beta * var_retained(prog, self.x_eps)

    def criterion(self, prog: LayerProgram, gamma: float, beta: float) -> CriterionResult:
        var = var_retained(prog, self.x_eps)
        marg = self.margin(prog)
        g = gamma * self.mean - marg - beta * var
        if g <= 0:
            return CriterionResult(var, g, marg, None)
        unstable = g <= UNSTABLE_SURPLUS * gamma * abs(self.mean)
        return CriterionResult(var, g, marg, var / g, unstable)

    def one_layer_criterion(self, a1, gamma: float, beta: float):
        """Vectorized criterion of ``(0, a1, x_eps)`` programs; +inf where infeasible."""
        a1 = np.clip(np.asarray(a1, dtype=float), 0.0, self.x_eps)
        marg = self.integral_k(self.x_eps) - self.integral_k(a1)
        g = gamma * self.mean - marg - beta * a1
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(g > 0, a1 / g, np.inf)

    def psi(self, x, beta: float, lam: float):
        x = np.asarray(x, dtype=float)
        r = -self.k_of_x(x) + (beta + lam) * (x < self.x_eps)
        return r if np.ndim(r) else float(r)


def reinsurer_margin(prog: LayerProgram, k: KFunction, loss: EmpiricalLoss, cdf: str = "empirical") -> float:
    return ContractEvaluator(k, loss, cdf=cdf).margin(prog)


def expected_surplus(
    prog: LayerProgram, k: KFunction, loss: EmpiricalLoss, gamma: float, beta: float, epsilon: float = 0.01
) -> float:
    """``gamma E(X) - margin - beta VaR`` with VaR measured at the empirical ``1 - epsilon`` percentile."""
    return ContractEvaluator(k, loss, epsilon).surplus(prog, gamma, beta)


def criterion(
    prog: LayerProgram, k: KFunction, loss: EmpiricalLoss, gamma: float, beta: float, epsilon: float = 0.01
) -> CriterionResult:
    return ContractEvaluator(k, loss, epsilon).criterion(prog, gamma, beta)


def psi_lambda(k: KFunction, loss: EmpiricalLoss, x, beta: float, lam: float, epsilon: float = 0.01, cdf: str = "empirical"):
    """``psi(x) = -K{F(x)} + (beta + lambda) [x < x_eps]``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return ContractEvaluator(k, loss, epsilon, cdf).psi(x, beta, lam)


def psi_intervals(ev: ContractEvaluator, beta: float, lam: float, grid_points: int = 4097, rtol: float = 1e-8):
    """Maximal sub-intervals of ``[0, x_eps]`` where psi is positive, ends located by bisection."""
    x_eps = ev.x_eps
    xs = np.linspace(0.0, x_eps, grid_points)
    inside = xs.copy()
    inside[-1] = np.nextafter(x_eps, 0.0)
    pos = ev.psi(inside, beta, lam) > 0
    tol = rtol * max(x_eps, 1.0)

    def locate(lo, hi, lo_positive):
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if (ev.psi(mid, beta, lam) > 0) == lo_positive:
                lo = mid
            else:
                hi = mid
        return float(0.5 * (lo + hi))

    out = []
    start = 0.0 if pos[0] else None
    for i in range(1, grid_points):
        if pos[i] and not pos[i - 1]:
            start = locate(xs[i - 1], xs[i], False)
        elif pos[i - 1] and not pos[i]:
            out.append((start, locate(xs[i - 1], xs[i], True)))
            start = None
    if start is not None:
        out.append((start, x_eps))
    return out


def layers_from_psi(
    k: KFunction,
    loss: EmpiricalLoss,
    beta: float,
    lam: float,
    epsilon: float = 0.01,
    cdf: str = "empirical",
    grid_points: int = 4097,
) -> LayerProgram:
    """Indemnity ``I(x) = int_0^x [psi(y) > 0] dy`` as a layer program.

    Raises StructureViolation when the positive set is not one of: empty, one
    interval ending at x_eps, or a ground-up interval plus one ending at x_eps.
    """
    ev = ContractEvaluator(k, loss, epsilon, cdf)
    return program_from_intervals(psi_intervals(ev, beta, lam, grid_points), ev.x_eps)


def program_from_intervals(intervals, x_eps: float) -> LayerProgram:
    if not intervals:
        return LayerProgram.none(x_eps)
    if len(intervals) > 2:
        raise StructureViolation(f"{len(intervals)} positive intervals: {intervals}")
    if len(intervals) == 2 and intervals[0][0] != 0.0:
        raise StructureViolation(f"two positive intervals but the first does not start at 0: {intervals}")
    upper = intervals[-1]
    if upper[1] != x_eps:
        if len(intervals) == 1 and upper[0] == 0.0:
            return LayerProgram(upper[1], x_eps, x_eps)
        raise StructureViolation(f"upper layer ends at {upper[1]} instead of x_eps={x_eps}")
    if len(intervals) == 1:
        return LayerProgram(0.0, upper[0], x_eps)
    return LayerProgram(intervals[0][1], upper[0], x_eps)


def structure_label(prog: LayerProgram, x_eps: float) -> str:
    """One of: none, one-layer, two-layer, full, b-layer-only."""
    if prog.is_empty:
        return "none"
    if prog.b2 == 0.0 and prog.a1 == 0.0 and prog.a2 == x_eps:
        return "full"
    if prog.has_b_layer:
        return "two-layer" if prog.a1 < prog.a2 else "b-layer-only"
    return "one-layer"
