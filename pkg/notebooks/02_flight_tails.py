"""
Free-flight tails
=================

One flight from each of N Liouville samples, binned per corridor class.  The
tail of every open corridor decays like c / L**2.  We compare the fitted
prefactors with the line-measure count of long chords inside each corridor.
"""

# %%
import os

import numpy as np

import windtree as w
from windtree import stats as S

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)
N = int(os.environ.get("N_FLIGHTS", 2_000_000))

# %%
p = w.preset("tail")
h = S.flight_tail(p, N, max_len=1e4, seed=1)
print("samples", h.n_total, "censored", h.n_censored, "mean length", h.mean_length())
print("mean free path prediction", w.geometry_summary(p)["mean_free_path_prediction"])

# %%
cro = S.crofton_prefactors(p)
ref = S.reference_prefactors(p)
for label in ("Horizontal", "Vertical", "ObliquePlus", "ObliqueMinus"):
    f = S.fit_powerlaw_ccdf(h, label, 10, 100)
    print(f"{label:13s} beta={f.params['beta']:.3f}+-{f.stderr['beta']:.3f} "
          f"c={f.params['c']:.4f}+-{f.stderr['c']:.4f}  line-measure={cro[label]:.4f}")
print("published constants:", ref)

# %%
# one orientation only: half of the line-measure value
f = S.fit_powerlaw_ccdf(h, "Horizontal", 10, 100, orientation=1)
print("Horizontal, +x only: c =", f.params["c"], "vs", cro["Horizontal"] / 2)

# %%
# truncated second moment grows like slope * ln R
m = S.truncated_second_moment(hist=h, fit_range=(1e2, 1e4))
print("slope", m.fit.params["slope"], "R^2", m.fit.r2,
      "line-measure slope", 2 * sum(cro.values()), "published", S.reference_moment_slope(p))

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    for label in ("Horizontal", "Vertical", "ObliquePlus", "ObliqueMinus"):
        e, c = h.ccdf(label)
        ok = c > 0
        ax.loglog(e[ok], c[ok], label=label)
    e = np.logspace(1, 3)
    ax.loglog(e, cro["Horizontal"] / e ** 2, "k--", label="line measure, axis")
    ax.set_xlabel("L")
    ax.set_ylabel("P(length >= L, class)")
    ax.legend()
    fig.savefig(os.path.join(OUT, "tails.png"), dpi=120)
except ImportError:
    pass
