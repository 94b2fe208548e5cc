"""
Mean-square displacement and correlations
=========================================

Ensemble MSD for three horizons and the flight correlations along one long
orbit.  Budgets are small so the script finishes in a few minutes; the
acceptance suite uses larger ones.
"""

# %%
import os

import numpy as np

import windtree as w
from windtree import stats as S

K = int(os.environ.get("K_TRAJ", 2000))
N_MAX = int(os.environ.get("N_MAX", 2000))

# %%
for name in ("canonical", "lorentz", "tail"):
    c = S.msd(w.preset(name), K, N_MAX, seed=3)
    ranking = ", ".join(f"{f.model} (aic {f.aic:.1f})" for f in c.fits)
    print(f"{name:10s} MSD/n at n={c.n[-1]}: {c.msd[-1] / c.n[-1]:.3f}   {ranking}")
    print("           |<x_n - x_0>| / se max:", float(np.max(np.abs(c.mean_disp) / c.mean_disp_se)))

# %%
p = w.preset("tail")
print("D11 + D22 from the corridor widths:", S.reference_diffusion(p))

# %%
# correlations along one orbit, flights longer than R zeroed
cc = S.correlation(p, 4_000_000, 10_000, seed=1, R=1e3, fit_range=(1e2, 1e4))
print("C(0) =", cc.c[0], " C(1..4) =", cc.c[1:5])
for N in (10, 100, 1000, 10000):
    print(f"S({N}) = {cc.partial_sum[N - 1]:.4f}")
print("fit S(N) = alpha + c (ln N)^2:", cc.fit.params, "R^2", cc.fit.r2)

# %%
# neutral runs along the type II corridors: counts fall like 1/n
r = S.neutral_run_stats(p, 2_000_000, L=5.0, seed=2)
print("run counts", r.counts, "ratios", np.round(r.ratios, 3), "spread", r.max_spread)

# %%
# continuous time: the clock runs eta times faster than the collision count
ct = S.ctime_rescale(p, 200, 1e4, seed=4)
print("eta_hat", ct.eta_hat, "coef ratio", ct.coef_ratio, "1/eta_hat", 1 / ct.eta_hat)
