"""Optimal reinsurance layers under a Value-at-Risk over expected-surplus criterion."""

__version__ = "0.1.0"

from .contracts import LayerProgram, criterion, expected_surplus, indemnity, layers_from_psi, psi_lambda, var_retained
from .optimizer import ApproximationKind, degradation_report, optimize_lower
from .pricing import ExpectedValuePricing, ExponentialMarketPricing, GammaLaw, k_function, solve_delta
from .severity import Family, PortfolioSpec, calibrate_shape, compound_moments, simulate_portfolio

__all__ = [
    "ApproximationKind",
    "ExpectedValuePricing",
    "ExponentialMarketPricing",
    "Family",
    "GammaLaw",
    "LayerProgram",
    "PortfolioSpec",
    "calibrate_shape",
    "compound_moments",
    "criterion",
    "degradation_report",
    "expected_surplus",
    "indemnity",
    "k_function",
    "layers_from_psi",
    "optimize_lower",
    "psi_lambda",
    "simulate_portfolio",
    "solve_delta",
    "var_retained",
]
