"""Regenerate tests/golden/normality_oracle.json from scipy.stats.

Inputs are rebuilt from (seed, n, dist) with numpy's PCG64, so only the
reference statistics and a checksum of each input are stored.
"""
import json
from pathlib import Path

import numpy as np
from scipy import stats

SIZES = (20, 48, 500, 3840)
PER_SIZE = 100
DISTS = ("normal", "exponential", "uniform", "lognormal", "student_t5")
OUT = Path(__file__).resolve().parents[1] / "tests" / "golden" / "normality_oracle.json"


def make_input(seed: int, n: int, dist: str) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if dist == "normal":
        return rng.normal(25.0, 0.3, n)
    if dist == "exponential":
        return rng.exponential(1.0, n)
    if dist == "uniform":
        return rng.uniform(0.0, 1.0, n)
    if dist == "lognormal":
        return rng.lognormal(0.0, 0.5, n)
    return rng.standard_t(5, n)


def main():
    cases = []
    for n in SIZES:
        for i in range(PER_SIZE):
            seed = 1000 * n + i
            dist = DISTS[i % len(DISTS)]
            x = make_input(seed, n, dist)
            k2, k2p = stats.normaltest(x)
            w, wp = stats.shapiro(x)
            ad = stats.anderson(x, "norm")
            cases.append({
                "seed": seed, "n": n, "dist": dist, "checksum": float(x.sum()),
                "k2": float(k2), "k2_p": float(k2p), "w": float(w), "w_p": float(wp),
                "a2": float(ad.statistic),
            })
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"generator": "numpy PCG64 default_rng(seed)", "cases": cases}, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
