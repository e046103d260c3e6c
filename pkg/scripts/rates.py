"""Log-log decay slopes of the three degradations for one family, with the rate constants.

    python scripts/rates.py --family gamma --m 1000000
"""

import argparse
import json
from pathlib import Path

from reinsopt.optimizer import decay_slope, run_grid
from reinsopt.pricing import ExpectedValuePricing


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", default="gamma")
    ap.add_argument("--m", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--out", default="results/rates")
    args = ap.parse_args()

    grid = [50, 500, 5000]
    reports = run_grid(ExpectedValuePricing(0.2, 0.1), [args.family], grid, args.m, args.seed)
    slopes = {k: decay_slope(reports, k) for k in ("exact", "gaussian", "np")}
    for r in reports:
        print(f"J mu={r.expected_claims:>6g}  " + "  ".join(f"{k}={v:.3g}" for k, v in r.degradation_raw.items()))
    # exact ~ zeta1 / J^1.5, gaussian ~ zeta2 p(phi_e) / J
    print("slopes", {k: round(v, 3) for k, v in slopes.items()}, "theory exact -1.5, gaussian/np -1")
    print(f"zeta1={reports[0].zeta1:.6g} zeta2={reports[0].zeta2:.6g}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"rates_{args.family}.json").write_text(json.dumps({"slopes": slopes, "m": args.m, "seed": args.seed}, indent=2) + "\n")


if __name__ == "__main__":
    main()
