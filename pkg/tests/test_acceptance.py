"""Acceptance criteria; each test records one PASS/FAIL line printed at the end of the session.

Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
Criteria 3 to 5 use the m = 10^6 grid (marked slow, several minutes on one core).
"""

import json
import math
import sys

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE
from reinsopt.cli import main
from reinsopt.contracts import ContractEvaluator, LayerProgram, indemnity, psi_intervals
from reinsopt.optimizer import decay_slope, loglog_slope, optimize_lower
from reinsopt.pricing import (
    ExpectedValuePricing,
    ExponentialMarketPricing,
    KFunction,
    _copula_z,
    clayton_sample,
    k_function,
    solve_delta,
)
from reinsopt.severity import PortfolioSpec, calibrate_shape, simulate_portfolio

FAMILIES = ("gamma", "lognormal", "pareto")

# reference criterion and degradations (exact, gaussian, np) per (family, J mu)
REFERENCE = {
    ("gamma", 5.0): (21.52, 15.3, 20.2, 16.3),
    ("gamma", 50.0): (12.46, 0.100, 0.982, 0.100),
    ("gamma", 500.0): (10.68, 2.33e-3, 8.54e-2, 2.24e-3),
    ("gamma", 5000.0): (10.21, 6.84e-5, 8.48e-3, 5.58e-5),
    ("lognormal", 5.0): (20.33, 8.65, 20.0, 32.5),
    ("lognormal", 50.0): (12.39, 9.09e-2, 1.64, 1.18e-2),
    ("lognormal", 500.0): (10.68, 2.29e-3, 0.167, 3.06e-3),
    ("lognormal", 5000.0): (10.21, 6.66e-5, 1.57e-2, 1.08e-4),
    ("pareto", 5.0): (20.30, 8.77, 19.1, 21.7),
    ("pareto", 50.0): (12.37, 9.02e-2, 1.56, 9.90e-2),
    ("pareto", 500.0): (10.67, 2.27e-3, 0.164, 2.09e-3),
    ("pareto", 5000.0): (10.21, 6.62e-5, 1.75e-2, 5.11e-5),
}
KINDS = ("exact", "gaussian", "np")


def record(label, title, ok, detail):
    ACCEPTANCE[label] = (title, bool(ok), detail)
    print(f"criterion {label} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def test_criterion_1_delta():
    d = solve_delta(KFunction.linear(0.2), 0.1)
    record("1", "delta identity", abs(d - 0.5) < 1e-10, f"delta={d!r}")


def test_criterion_2_calibration():
    targets = {"gamma": (0.444, 3.00), "lognormal": (1.710, 7.88), "pareto": (3.600, 5.78)}
    misses, parts = [], []
    for fam, (shape, skew) in targets.items():
        m = calibrate_shape(fam, 10, 15)
        parts.append(f"{fam} shape={m.shape:.4f} skew={m.skewness:.3f}")
        if abs(m.shape - shape) > 0.01 * shape:
            misses.append(f"{fam} shape")
        if abs(m.skewness - skew) > 0.01 * skew:
            misses.append(f"{fam} skewness {m.skewness:.3f} vs {skew}")
    record("2", "severity calibration", not misses, "; ".join(parts) + (f" | off: {misses}" if misses else ""))


def _criterion_check(table, tol):
    worst, misses = 0.0, []
    for cell, pub in REFERENCE.items():
        rel = table[cell].criterion_optimal / pub[0] - 1
        worst = max(worst, abs(rel))
        if abs(rel) > tol:
            misses.append(f"{cell[0]}/{cell[1]:g} {table[cell].criterion_optimal:.3f} vs {pub[0]}")
    return not misses, f"worst relative gap {worst:.4f} (tol {tol})" + (f" | off: {misses}" if misses else "")


@pytest.mark.slow
def test_criterion_3_criterion_column(table_full):
    record("3", "criterion column m=1e6", *_criterion_check(table_full, 0.008))


def test_criterion_3_ci_variant(table_ci):
    record("3-ci", "criterion column m=1e5", *_criterion_check(table_ci, 0.025))


@pytest.mark.slow
def test_criterion_4_degradations(table_full):
    misses, ratios = [], []
    for fam in FAMILIES:
        for jm in (500.0, 5000.0):
            r = table_full[(fam, jm)]
            d = r.degradation_raw
            got = [d[k] for k in ("exact", "gaussian", "np")]
            for kind, g, pub in zip(KINDS, got, REFERENCE[(fam, jm)][1:]):
                ratio = g / pub
                ratios.append(ratio)
                if not 0.5 <= ratio <= 2.0:
                    misses.append(f"{fam}/{jm:g} {kind} {g:.3g} vs {pub:.3g}")
            if not got[1] > max(got[0], got[2]):
                misses.append(f"{fam}/{jm:g} ordering")
    detail = f"ratio range [{min(ratios):.2f}, {max(ratios):.2f}]" + (f" | off: {misses}" if misses else "")
    record("4", "degradations within factor 2", not misses, detail)


@pytest.mark.slow
def test_criterion_5_decay_rates(table_full):
    reports = [table_full[("gamma", jm)] for jm in (50.0, 500.0, 5000.0)]
    s = {k: decay_slope(reports, k) for k in KINDS}
    bounds = {"exact": (-1.9, -1.2), "np": (-1.9, -1.2), "gaussian": (-1.3, -0.75)}
    pub_exact = loglog_slope([50, 500, 5000], [REFERENCE[("gamma", j)][1] for j in (50.0, 500.0, 5000.0)])
    pub_gauss = loglog_slope([50, 500, 5000], [REFERENCE[("gamma", j)][2] for j in (50.0, 500.0, 5000.0)])
    ok = all(lo <= s[k] <= hi for k, (lo, hi) in bounds.items())
    ok &= abs(pub_exact + 1.58) < 0.01 and abs(pub_gauss + 1.03) < 0.01
    detail = ", ".join(f"{k}={v:.3f}" for k, v in s.items()) + f"; reference rows exact={pub_exact:.3f} gaussian={pub_gauss:.3f}"
    record("5", "decay slopes (gamma)", ok, detail)


def test_criterion_6_properties():
    fails = []
    rng = np.random.default_rng(2019)

    # feasibility of randomized programs
    for _ in range(2000):
        b2, a1, a2 = np.sort(rng.uniform(0, 100, 3))
        prog = LayerProgram(b2, a1, a2)
        x, y = np.sort(rng.uniform(0, 120, 2))
        ix, iy = indemnity(prog, x), indemnity(prog, y)
        if not (0 <= ix <= x and 0 <= iy - ix <= y - x + 1e-12):
            fails.append("feasibility")
            break

    market = ExponentialMarketPricing(0.2, 0.1, 10.0, 0.1)
    k = k_function(market)
    u = np.linspace(0, 1, 10_001)
    if k(u).min() < -1e-9 or k(1.0) != 0.0:
        fails.append("K >= 0, K(1) = 0")
    v = np.linspace(0.005, 0.995, 100)
    if np.max(np.abs((k(v + 1e-5) - k(v - 1e-5)) / 2e-5 - k.derivative(v))) >= 1e-5:
        fails.append("K' finite differences")

    spec = PortfolioSpec.from_expected_claims(50, 0.05, calibrate_shape("gamma", 10, 15))
    x = simulate_portfolio(spec, 2 * 10**5, 61).sample
    uu = np.clip(stats.rankdata(x) / (x.size + 1), 1e-300, None)
    mz = market.market_factor(_copula_z(uu, np.clip(rng.random(x.size), 1e-300, None), 10.0, market.z_law))
    for _ in range(10):
        a1, a2 = np.sort(rng.uniform(0, 1200, 2))
        d = indemnity(LayerProgram(0.0, a1, a2), x) * (mz - 1.2)
        if d.mean() < -3 * d.std() / math.sqrt(x.size):
            fails.append("price bound")
            break

    loss = simulate_portfolio(spec, 10**5, 62)
    ev = ContractEvaluator(k, loss)
    for beta, lam in ((0.06, 0.1), (0.0, 0.0), (0.06, 1.0), (0.02, 0.05)):
        if len(psi_intervals(ev, beta, lam)) > 2:
            fails.append("psi crossings")

    lin = KFunction.linear(0.2)
    spec500 = PortfolioSpec.from_expected_claims(500, 0.05, calibrate_shape("gamma", 10, 15))
    loss500 = simulate_portfolio(spec500, 10**5, 63)
    ev500 = ContractEvaluator(lin, loss500)
    a1, best = optimize_lower(lin, loss500, 0.1, 0.0, evaluator=ev500)
    grid = ev500.one_layer_criterion(np.linspace(0, ev500.x_eps, 100_001), 0.1, 0.0)
    if best.value > grid.min() * (1 + 1e-6):
        fails.append("optimizer vs grid")
    if any(ev500.criterion(LayerProgram(b2, a1, ev500.x_eps), 0.1, 0.0).value <= best.value for b2 in np.linspace(0, a1, 65)[1:]):
        fails.append("b-layer suppression")

    for theta in (1.0, 5.0, 10.0):
        cu, cv = clayton_sample(10**6, theta, np.random.default_rng(int(theta)))
        if abs(stats.kendalltau(cu, cv).statistic - theta / (theta + 2)) >= 0.002:
            fails.append(f"kendall tau theta={theta:g}")

    if simulate_portfolio(spec, 10**4, 5).sample.tobytes() != simulate_portfolio(spec, 10**4, 5).sample.tobytes():
        fails.append("determinism")

    record("6", "property suite", not fails, "all properties hold" if not fails else f"failed: {fails}")


def test_criterion_7_psi_panels(tmp_path):
    from pathlib import Path

    ini = Path(__file__).resolve().parents[1] / "configs" / "figure22.ini"
    assert main(["psi", "--panels", "--config", str(ini), "--out", str(tmp_path), "--quiet"]) == 0
    panels = json.loads((tmp_path / "psi_panels.json").read_text())["panels"]
    got = {name: p["structure"] for name, p in panels.items()}
    want = {"default": "one-layer", "no-positive": "none", "full": "full", "b-layer": "two-layer"}
    ok = got == want
    ok &= panels["default"]["program"]["a2"] == pytest.approx(panels["default"]["x_eps"])
    ok &= panels["b-layer"]["positive_intervals"][0][0] == 0.0
    ok &= all(panels[n]["program"]["b2"] == 0.0 for n in ("default", "no-positive", "full"))
    record("7", "psi regimes", ok, ", ".join(f"{n}={s}" for n, s in got.items()))


def test_criterion_8_monte_carlo_k(tmp_path):
    m = 10**5
    ini = tmp_path / "k.ini"
    ini.write_text(f"[run]\nm = {m}\n")
    assert main(["kfunction", "--config", str(ini), "--out", str(tmp_path), "--quiet"]) == 0
    gap = json.loads((tmp_path / "kfunction.json").read_text())["mc_sup_gap"]
    record("8", "Monte Carlo K*", gap < 5 / math.sqrt(m), f"sup gap {gap:.2e} < {5 / math.sqrt(m):.2e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
