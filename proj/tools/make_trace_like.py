"""Write data/trace_like.csv: a synthetic acute-MI registry shaped like the
TRACE study data (1878 patients, follow-up up to about 8.5 years).

Effects of chf and vf fade with time; diabetes, age and sex act
proportionally. The file is regenerated byte-identically from the seed.
"""

import csv
import math
import pathlib

import numpy as np

N = 1878
SEED = 20240611
STEP = 0.01
HORIZON = 8.5


def main() -> None:
    rng = np.random.default_rng(SEED)
    age = np.clip(rng.normal(67.0, 11.0, N), 25.0, 96.0)
    sex = rng.binomial(1, 0.35, N)
    diabetes = rng.binomial(1, 0.07, N)
    chf = rng.binomial(1, 0.42, N)
    vf = rng.binomial(1, 0.07, N)
    wmi = np.round(np.clip(rng.normal(1.4, 0.45, N), 0.2, 2.0), 1)

    grid = np.arange(0.0, HORIZON, STEP) + STEP / 2
    base = 0.06 + 0.25 * np.exp(-grid / 0.15)
    chf_eff = 0.35 + 1.0 * np.exp(-grid / 1.5)
    vf_eff = -0.2 + 2.2 * np.exp(-grid / 0.1)

    times = np.empty(N)
    status = np.empty(N, dtype=int)
    for i in range(N):
        lp = 0.340 * diabetes[i] + 0.055 * (age[i] - 67.0) - 0.1 * sex[i] - 0.9 * (wmi[i] - 1.4)
        h = base * np.exp(lp + chf[i] * chf_eff + vf[i] * vf_eff)
        cum = np.cumsum(h) * STEP
        e = -math.log(rng.uniform())
        k = int(np.searchsorted(cum, e))
        if k < len(grid):
            prev = cum[k - 1] if k else 0.0
            t = k * STEP + (e - prev) / h[k]
        else:
            t = math.inf
        c = rng.uniform(5.0, HORIZON)
        times[i], status[i] = (t, 1) if t <= c else (c, 0)

    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "trace_like.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "time", "status", "wmi", "chf", "age", "sex", "diabetes", "vf"])
        for i in range(N):
            w.writerow([i + 1, f"{max(times[i], 0.001):.3f}", status[i], wmi[i], chf[i], f"{age[i]:.1f}",
                        sex[i], diabetes[i], vf[i]])


if __name__ == "__main__":
    main()
