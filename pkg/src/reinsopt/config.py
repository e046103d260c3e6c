"""INI experiment configuration.

Three sections, every key optional::

    [portfolio]
    family = gamma            ; gamma | lognormal | pareto
    expected_claims = 50      ; J mu (or give policy_count instead)
    claim_frequency = 0.05
    mean_per_event = 10
    sd_per_event = 15

    [regime]
    variant = expected_value  ; expected_value | exponential_market
    gamma = 0.1
    gamma_re = 0.2
    beta = 0.0
    epsilon = 0.01
    omega = 0.1               ; exponential_market only
    theta = 10
    z_mean = 1.0
    z_sd = 0.3

    [run]
    m = 100000
    seed = 2019
    out = results
    workers = 1
    families = gamma, lognormal, pareto
    expected_claims_grid = 5, 50, 500, 5000
    lambda = 0.1
    cdf = empirical           ; empirical | kernel
    h = 0.2
    grid_points = 1001
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .pricing import ExpectedValuePricing, ExponentialMarketPricing, GammaLaw, PricingRegime
from .severity import Family, PortfolioSpec, calibrate_shape


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _families(text: str) -> tuple[str, ...]:
    return tuple(Family(t.strip().lower()).value for t in text.split(",") if t.strip())


@dataclass(frozen=True)
class PortfolioConfig:
    family: str = "gamma"
    expected_claims: float | None = 50.0
    policy_count: int | None = None
    claim_frequency: float = 0.05
    mean_per_event: float = 10.0
    sd_per_event: float = 15.0

    def build(self, expected_claims: float | None = None, family: str | None = None) -> PortfolioSpec:
        sev = calibrate_shape(family or self.family, self.mean_per_event, self.sd_per_event)
        if expected_claims is None and self.policy_count is not None:
            return PortfolioSpec(self.policy_count, self.claim_frequency, sev)
        jm = expected_claims if expected_claims is not None else self.expected_claims
        return PortfolioSpec.from_expected_claims(jm, self.claim_frequency, sev)


@dataclass(frozen=True)
class RegimeConfig:
    variant: str = "expected_value"
    gamma: float = 0.1
    gamma_re: float = 0.2
    beta: float = 0.0
    epsilon: float = 0.01
    omega: float = 0.1
    theta: float = 10.0
    z_mean: float = 1.0
    z_sd: float = 0.3

    def build(self, **overrides) -> PricingRegime:
        c = dataclasses.replace(self, **overrides)
        if c.variant == "expected_value":
            return ExpectedValuePricing(c.gamma_re, c.gamma)
        return ExponentialMarketPricing(c.gamma_re, c.omega, c.theta, c.gamma, GammaLaw(c.z_mean, c.z_sd))


@dataclass(frozen=True)
class RunConfig:
    m: int = 100_000
    seed: int = 2019
    out: str | None = None
    workers: int = 1
    families: tuple[str, ...] = ("gamma", "lognormal", "pareto")
    expected_claims_grid: tuple[float, ...] = (5.0, 50.0, 500.0, 5000.0)
    lam: float = 0.1
    cdf: str = "empirical"
    h: float = 0.2
    grid_points: int = 1001


@dataclass(frozen=True)
class ExperimentConfig:
    portfolio: PortfolioConfig = field(default_factory=PortfolioConfig)
    regime: RegimeConfig = field(default_factory=RegimeConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def spec(self, expected_claims: float | None = None, family: str | None = None) -> PortfolioSpec:
        return self.portfolio.build(expected_claims, family)

    def pricing(self, **overrides) -> PricingRegime:
        return self.regime.build(**overrides)

    def with_run(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        cfg = dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Short hash of the resolved configuration (output directory excluded)."""
        d = self.as_dict()
        d["run"].pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> None:
        p, g, r = self.portfolio, self.regime, self.run
        try:
            Family(p.family)
            if p.expected_claims is None and p.policy_count is None:
                raise ValueError("portfolio needs expected_claims or policy_count")
            if p.expected_claims is not None and not p.expected_claims > 0:
                raise ValueError("expected_claims must be positive")
            if not p.claim_frequency > 0:
                raise ValueError("claim_frequency must be positive")
            self.spec()
            if g.variant not in ("expected_value", "exponential_market"):
                raise ValueError(f"unknown regime variant {g.variant!r}")
            if not 0 < g.epsilon < 1:
                raise ValueError("epsilon must lie in (0, 1)")
            if not g.beta >= 0:
                raise ValueError("beta must be non-negative")
            self.pricing()
            if r.m < 2:
                raise ValueError("m must be at least 2")
            if not 0 <= r.seed < 2**64:
                raise ValueError("seed must be an unsigned 64-bit integer")
            if r.workers < 1:
                raise ValueError("workers must be at least 1")
            if not r.families:
                raise ValueError("families must not be empty")
            if any(not x > 0 for x in r.expected_claims_grid):
                raise ValueError("expected_claims_grid values must be positive")
            if r.lam < 0:
                raise ValueError("lambda must be non-negative")
            if r.cdf not in ("empirical", "kernel"):
                raise ValueError("cdf must be empirical or kernel")
            if not r.h > 0:
                raise ValueError("h must be positive")
            if r.grid_points < 3:
                raise ValueError("grid_points must be at least 3")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_PARSERS = {
    "portfolio": {
        "family": ("family", lambda s: Family(s.strip().lower()).value),
        "expected_claims": ("expected_claims", float),
        "policy_count": ("policy_count", int),
        "claim_frequency": ("claim_frequency", float),
        "mean_per_event": ("mean_per_event", float),
        "sd_per_event": ("sd_per_event", float),
    },
    "regime": {
        "variant": ("variant", lambda s: s.strip().lower()),
        "gamma": ("gamma", float),
        "gamma_re": ("gamma_re", float),
        "beta": ("beta", float),
        "epsilon": ("epsilon", float),
        "omega": ("omega", float),
        "theta": ("theta", float),
        "z_mean": ("z_mean", float),
        "z_sd": ("z_sd", float),
    },
    "run": {
        "m": ("m", int),
        "seed": ("seed", int),
        "out": ("out", str.strip),
        "workers": ("workers", int),
        "families": ("families", _families),
        "expected_claims_grid": ("expected_claims_grid", _floats),
        "lambda": ("lam", float),
        "cdf": ("cdf", lambda s: s.strip().lower()),
        "h": ("h", float),
        "grid_points": ("grid_points", int),
    },
}


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    unknown = set(parser.sections()) - set(_PARSERS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    blocks = {}
    for section, keys in _PARSERS.items():
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in keys:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                name, conv = keys[key]
                try:
                    values[name] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
        blocks[section] = values
    if "policy_count" in blocks["portfolio"] and "expected_claims" not in blocks["portfolio"]:
        blocks["portfolio"]["expected_claims"] = None
    cfg = ExperimentConfig(
        PortfolioConfig(**blocks["portfolio"]), RegimeConfig(**blocks["regime"]), RunConfig(**blocks["run"])
    )
    cfg.validate()
    return cfg


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
        cfg.validate()
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
