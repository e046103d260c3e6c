"""psi_lambda curves for the four parameter panels, plotted if matplotlib is available.

    python scripts/figure22.py --out results/figure22
"""

import argparse
import json
from pathlib import Path

from reinsopt.cli import main as cli_main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "figure22.ini"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/figure22")
    ap.add_argument("--m", type=int, default=10**5)
    args = ap.parse_args()
    code = cli_main(["psi", "--panels", "--config", str(CONFIG), "--m", str(args.m), "--out", args.out, "--quiet"])
    if code:
        raise SystemExit(code)
    out = Path(args.out)
    panels = json.loads((out / "psi_panels.json").read_text())["panels"]
    for name, p in panels.items():
        print(f"{name:<12} {p['structure']:<11} intervals={[[round(a, 1), round(b, 1)] for a, b in p['positive_intervals']]}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    import numpy as np

    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, name in zip(axes.flat, panels):
        x, psi = np.loadtxt(out / f"psi_{name}.csv", delimiter=",", skiprows=2, unpack=True)
        ax.plot(x, psi)
        ax.axhline(0, color="k", lw=0.5)
        ax.axvline(panels[name]["x_eps"], color="grey", ls=":")
        ax.set_title(f"{name}: {panels[name]['structure']}")
    fig.tight_layout()
    fig.savefig(out / "psi_panels.png", dpi=120)


if __name__ == "__main__":
    main()
