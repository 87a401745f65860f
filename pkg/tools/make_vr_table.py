#!/usr/bin/env python3
"""Generate the persisted quantile table of the conditional VR limit law.

For each t on a log grid, draws N = 10^6 samples of

    1 + (chi2_5 / (3 t))^{3/2} U / 4 - chi2_5 / (4 t)

with a fixed seed and stores the quantiles at a fixed level grid as CSV
(columns t, quantile_level, value) under src/isomat/data/.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from isomat.sphericity import vr_conditional_limit_sample  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "src" / "isomat" / "data"

T_GRID = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
LEVELS = np.concatenate([
    [0.001, 0.005], np.arange(0.01, 1.0, 0.01).round(2), [0.995, 0.999]
])
N = 1_000_000
SEED = 20240817


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / "vr_conditional_quantiles.csv"
    with open(path, "w", newline="") as fh:
        fh.write("t,quantile_level,value\n")
        for i, t in enumerate(T_GRID):
            rng = np.random.default_rng([SEED, i])
            draws = vr_conditional_limit_sample(t, rng, size=N)
            qs = np.quantile(draws, LEVELS)
            for lvl, q in zip(LEVELS, qs):
                fh.write(f"{t:.17g},{lvl:.3f},{q:.17g}\n")
    print("wrote", path)


if __name__ == "__main__":
    main()
