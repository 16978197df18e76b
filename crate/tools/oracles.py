"""Freeze reference values from scipy / statsmodels for the Rust test suites.

The Rust tests regenerate every dataset from the same SplitMix64 stream, so
the fixture stores seeds, a checksum of the generated inputs, and expected
outputs only.

    python3 tools/oracles.py
"""

import json
import math
from pathlib import Path

import numpy as np
import statsmodels.api as sm
from scipy import stats

MASK = (1 << 64) - 1
ROOT = Path(__file__).resolve().parent.parent
TARGETS = [
    ROOT / "crates" / "core" / "tests" / "fixtures" / "oracles.json",
    ROOT / "crates" / "cli" / "tests" / "fixtures" / "oracles.json",
]
SCALES = [1.0, 10.0, 0.1, 100.0, 0.5, 3.0]


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self):
        # Irwin-Hall(12) - 6: exact IEEE arithmetic, reproducible bit for bit.
        s = 0.0
        for _ in range(12):
            s += self.uniform()
        return s - 6.0

    def exponential(self):
        return -math.log(1.0 - self.uniform())


def sigmoid(eta):
    return 1.0 / (1.0 + math.exp(-eta))


def logistic_dataset(k):
    rng = SplitMix64(1000 + k)
    p = 1 + k % 6
    n = 200
    x = [[(rng.normal() + 0.3 * j) * SCALES[j] for j in range(p)] for _ in range(n)]
    beta = [(rng.uniform() * 2.0 - 1.0) / SCALES[j] for j in range(p)]
    b0 = rng.uniform() - 0.5
    y = []
    for row in x:
        eta = b0
        for j in range(p):
            eta += row[j] * beta[j]
        y.append(rng.uniform() < sigmoid(eta))
    return np.array(x), np.array(y, dtype=float)


def logit_fit(x, y):
    res = sm.Logit(y, sm.add_constant(x, has_constant="add")).fit(method="newton", tol=1e-14, maxiter=200, disp=0)
    n = len(y)
    r2 = (1.0 - math.exp(2.0 * (res.llnull - res.llf) / n)) / (1.0 - math.exp(2.0 * res.llnull / n))
    return res, r2


def checksum(values):
    return float(np.sum(np.asarray(values, dtype=float)))


def shapiro_sample(s):
    rng = SplitMix64(5000 + s)
    n = [10, 50, 500][s % 3]
    dist = ["normal", "uniform", "exponential"][(s // 3) % 3]
    draw = {"normal": rng.normal, "uniform": rng.uniform, "exponential": rng.exponential}[dist]
    return n, dist, [draw() for _ in range(n)]


def main():
    out = {"generator": "splitmix64; uniform=(u64>>11)*2^-53; normal=sum of 12 uniforms - 6"}

    logistic = []
    for k in range(20):
        x, y = logistic_dataset(k)
        res, r2 = logit_fit(x, y)
        assert res.mle_retvals["converged"], k
        logistic.append(
            {
                "seed": 1000 + k,
                "p": x.shape[1],
                "x_sum": checksum(x),
                "positives": int(y.sum()),
                "coef": res.params.tolist(),
                "se": res.bse.tolist(),
                "loglik": res.llf,
                "loglik_null": res.llnull,
                "nagelkerke_r2": r2,
            }
        )
    out["logistic"] = logistic

    shapiro = []
    for s in range(50):
        n, dist, v = shapiro_sample(s)
        w, p = stats.shapiro(v)
        shapiro.append({"seed": 5000 + s, "n": n, "dist": dist, "sum": checksum(v), "w": float(w), "p": float(p)})
    out["shapiro"] = shapiro

    rng = SplitMix64(7000)
    xs, ys = [], []
    for _ in range(200):
        xs.append(rng.normal())
        ys.append(rng.normal())
    pr = stats.pearsonr(xs, ys)
    sr = stats.spearmanr(xs, ys)
    rng = SplitMix64(7001)
    tx, ty = [], []
    for _ in range(60):
        a = math.floor(rng.uniform() * 5.0)
        tx.append(float(a))
        ty.append(float(a + math.floor(rng.uniform() * 4.0)))
    tr = stats.spearmanr(tx, ty)
    out["correlation"] = {
        "independent": {
            "seed": 7000,
            "x_sum": checksum(xs),
            "pearson_r": float(pr.statistic),
            "pearson_p": float(pr.pvalue),
            "spearman_r": float(sr.statistic),
            "spearman_p": float(sr.pvalue),
        },
        "tied": {"seed": 7001, "x_sum": checksum(tx), "spearman_r": float(tr.statistic), "spearman_p": float(tr.pvalue)},
    }

    seed = 8000
    while True:
        rng = SplitMix64(seed)
        x = np.array([[rng.normal() for _ in range(5)] for _ in range(200)])
        y = np.array([float(rng.uniform() < sigmoid(1.5 * row[2] - 0.2)) for row in x])
        pvals = []
        coefs = []
        for j in range(5):
            res, _ = logit_fit(x[:, [j]], y)
            pvals.append(float(res.pvalues[1]))
            coefs.append(float(res.params[1]))
        selected = [j for j in range(5) if pvals[j] < 0.10]
        if selected == [2]:
            break
        seed += 1
    out["screen"] = {"seed": seed, "x_sum": checksum(x), "positives": int(y.sum()), "p": pvals, "coef": coefs, "selected": selected}

    text = json.dumps(out, indent=1) + "\n"
    for t in TARGETS:
        t.parent.mkdir(parents=True, exist_ok=True)
        t.write_text(text)
        print("wrote", t)


if __name__ == "__main__":
    main()
