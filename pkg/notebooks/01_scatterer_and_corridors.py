"""
Scatterer geometry and open corridors
=====================================

Builds the grown rhombus for a few parameter sets, checks the arclength
parameterisation and lists the corridors that stay open for a disk of
radius r.  Run with ``python3 notebooks/01_scatterer_and_corridors.py``;
figures go to ``notebooks/out/`` when matplotlib is available.
"""

# %%
import math
import os

import numpy as np

import windtree as w
from windtree.corridors import exact_width

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

# %% [markdown]
# The moving disk of radius r is traded for a point particle and a scatterer
# grown by r: four flat sides of length a joined by four circular arcs.

# %%
for name in ("tail", "canonical", "lorentz"):
    p = w.preset(name)
    b = w.build_scatterer(p)
    g = w.geometry_summary(p)
    kinds = "".join("F" if c.kind == w.BoundaryKind.FLAT else "D" for c in b.components)
    print(f"{name:10s} pieces={kinds:10s} perimeter={b.total_len:.6f} "
          f"area={g['area']:.6f} mfp={g['mean_free_path_prediction']:.6f}")

# %%
# boundary_point is 1-Lipschitz and its inverse recovers s
p = w.preset("tail")
b = w.build_scatterer(p)
s = np.linspace(0, b.total_len, 2001)[:-1]
pts = np.array([w.boundary_point(b, x)[0] for x in s])
back = np.array([w.boundary_arclength(b, q) for q in pts])
print("max |s - s(point(s))| =", np.abs(back - s).max())

# %% [markdown]
# Corridors: for a lattice direction d the rows of scatterers are 1/|d| apart
# and each row blocks twice the support of the rhombus in the normal direction.

# %%
for name in ("tail", "canonical"):
    p = w.preset(name)
    print(name, w.classify_regime(p).value)
    for c in w.enumerate_corridors(p, 64):
        print("   ", c.label.ljust(12), c.ctype.value.ljust(3), f"{c.width_math:.5f} -> {c.width_eff:.5f}")

# %%
# widths of all reduced directions up to |q| <= 12 for the tail preset
p = w.preset("tail")
rows = []
for q in range(1, 13):
    for pp in range(0, q + 1):
        if math.gcd(pp, q) == 1:
            rows.append((pp, q, exact_width(p, (pp, q)) - 2 * p.r))
rows.sort(key=lambda t: -t[2])
for pp, q, wd in rows[:8]:
    print(f"({pp},{q})  width_eff={wd:+.5f}")

# %%
# the bound below which type I obliques can appear, as the denominator grows
bounds = [w.type1_suppression_sup(n) for n in range(3, 201)]
print("sup at 200:", bounds[-1], " limit sqrt2/4:", math.sqrt(2) / 4)

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for i in range(-1, 3):
        for j in range(-1, 3):
            ax.fill(pts[:, 0] + i, pts[:, 1] + j, color="0.6")
    ax.set_aspect("equal")
    ax.set_xlim(-1, 2)
    ax.set_ylim(-1, 2)
    ax.set_title("grown scatterers, tail preset")
    fig.savefig(os.path.join(OUT, "scatterers.png"), dpi=120)
except ImportError:
    pass
