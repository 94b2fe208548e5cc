"""The thirteen acceptance checks, runnable from tests and from ``windtree report``.

Each check returns a plain dict::

    {"id": 6, "name": ..., "passed": bool, "checks": {label: {...}}, "note": ...}

where every entry of ``checks`` records the measured value, the target and
whether it is within tolerance.  Monte Carlo budgets are multiplied by
``scale``; at ``scale=1`` they are the full budgets.
"""
from __future__ import annotations

import contextlib
import io
import math
import os
import tempfile
import time
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats as sps

from . import _engine as eng
from . import stats as S
from .corridors import (
    axis_corridors,
    enumerate_corridors,
    exact_width,
    oblique_type2,
    type1_suppression_sup,
)
from .dynamics import Billiard, PhasePoint, liouville_uniforms
from .geometry import (
    Arc,
    ModelParams,
    ParameterError,
    Segment,
    boundary_point,
    build_scatterer,
    geometry_summary,
)
from .oracle import brute_force_hit
from .presets import preset

# published constants for the "tail" preset, with the tolerances attached to them
AXIS_PREFACTOR = 0.046287
OBLIQUE_PREFACTOR = 0.0065758
MOMENT_SLOPE = 0.21146
SUPPRESSION_200 = 0.35178
MEAN_FREE_PATH = 1.44765


def _check(value, target, ok: bool, **extra) -> dict:
    d = {"value": value, "target": target, "ok": bool(ok)}
    d.update(extra)
    return d


def _result(cid: int, name: str, checks: Dict[str, dict], note: str = "") -> dict:
    return {"id": cid, "name": name, "passed": all(c["ok"] for c in checks.values()),
            "checks": checks, "note": note}


def _budget(n: float, scale: float, floor: int = 1) -> int:
    return max(floor, int(round(n * scale)))


# ----------------------------------------------------------------------------


def c1_geometry(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    """Perimeter and C1 junctions for 100 random valid configurations."""
    rng = np.random.default_rng(seed)
    worst_perim = worst_pos = worst_norm = 0.0
    n_cfg = 0
    while n_cfg < 100:
        th = rng.uniform(0.05, math.pi / 4)
        a = rng.uniform(0.01, 0.6)
        r = rng.uniform(0.0, 0.2)
        if a * math.cos(th) + r > 0.5:
            continue
        p = ModelParams.windtree(a=a, r=r, theta=th)
        b = build_scatterer(p)
        worst_perim = max(worst_perim, abs(sum(c.length for c in b.components) - (4 * a + 2 * math.pi * r)))
        comps = b.components
        for k in range(len(comps)):
            c0, c1 = comps[k], comps[(k + 1) % len(comps)]
            e_pt, e_n = c0.at(c0.length)
            s_pt, s_n = c1.at(0.0)
            worst_pos = max(worst_pos, float(np.linalg.norm(e_pt - s_pt)))
            worst_norm = max(worst_norm, float(np.linalg.norm(e_n - s_n)))
        n_cfg += 1
    tol = 1e-9
    return _result(1, "geometry exactness", {
        "perimeter": _check(worst_perim, 0.0, worst_perim <= tol, tol=tol),
        "C0 junctions": _check(worst_pos, 0.0, worst_pos <= tol, tol=tol),
        "C1 junctions": _check(worst_norm, 0.0, worst_norm <= tol, tol=tol),
    })


def c2_corridors(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    p = preset("tail")
    h, v = axis_corridors(p)
    o = oblique_type2(p, 1, 1)
    d_o = o[0].width_eff if o else float("nan")
    closed_h = 1 - 2 * p.a * math.cos(p.theta) - 2 * p.r
    closed_o = math.sqrt(2) / 4 - 2 * p.r
    n_open = len(enumerate_corridors(p, 200))
    return _result(2, "corridor golden values", {
        "d_h_eff": _check(h.width_eff, 0.4, abs(h.width_eff - closed_h) <= 1e-12 and abs(h.width_eff - 0.4) <= 1e-12),
        "d_v_eff": _check(v.width_eff, 0.4, abs(v.width_eff - 0.4) <= 1e-12),
        "d_o_eff": _check(d_o, closed_o, abs(d_o - closed_o) <= 1e-12
                          and abs(exact_width(p, (1, 1)) - 2 * p.r - d_o) <= 1e-12),
        "open corridors (max_denom=200)": _check(n_open, 4, n_open == 4),
    })


def c3_suppression(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    vals = [type1_suppression_sup(n) for n in range(2, 201)]
    mono = all(b >= a for a, b in zip(vals, vals[1:]))
    v = vals[-1]
    return _result(3, "type I suppression bound", {
        "below sqrt(2)/4": _check(v, math.sqrt(2) / 4, v < math.sqrt(2) / 4),
        "monotone in bound": _check(mono, True, mono),
        "value at 200": _check(v, SUPPRESSION_200, abs(v - SUPPRESSION_200) <= 1e-5, tol=1e-5),
    })


def c4_map(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    """Engine against the brute-force oracle; time reversal round trips."""
    rng = np.random.default_rng(seed)
    names = ("tail", "canonical", "lorentz")
    n_oracle = _budget(1000, scale, 10)
    cell_bad = 0
    worst_s = 0.0
    for i in range(n_oracle):
        p = preset(names[i % len(names)])
        bil = Billiard(p, 1e4)
        T = bil.total_len
        s = rng.random() * T
        phi = math.asin(2 * rng.random() - 1)
        hit, _ = bil.next_collision(PhasePoint((0, 0), s, phi))
        cell, s_ref, _ = brute_force_hit(p, (0, 0), s, phi)
        if cell != hit.cell:
            cell_bad += 1
            continue
        ds = abs(s_ref - hit.s)
        worst_s = max(worst_s, min(ds, T - ds))
    n_rev = _budget(10_000, scale, 10)
    worst_rev = 0.0
    for name in names:
        p = preset(name)
        bil = Billiard(p, 1e6)
        u = liouville_uniforms(seed, 0, n_rev // len(names) + 1)
        s0, p0 = np.empty(len(u)), np.empty(len(u))
        for k in range(len(u)):
            s0[k], p0[k] = eng.liouville_sample(bil.kp, u[k, 0], u[k, 1])
        st, ci, cj, s1, p1 = eng.map_batch(bil.kp, bil.cw, s0, p0, 1e6)
        st2, ci2, cj2, s2, p2 = eng.map_batch(bil.kp, bil.cw, s1, -p1, 1e6)
        ok = (st == eng.OK) & (st2 == eng.OK)
        T = bil.total_len
        ds = np.abs(s2 - s0)[ok]
        ds = np.minimum(ds, T - ds)
        dp = np.abs(-p2 - p0)[ok]
        same_cell = np.all((ci2 == -ci)[ok] & (cj2 == -cj)[ok])
        worst_rev = max(worst_rev, float(max(ds.max(), dp.max())) if same_cell else math.inf)
    return _result(4, "map correctness", {
        f"oracle cell mismatches ({n_oracle} states)": _check(cell_bad, 0, cell_bad == 0),
        "oracle max |ds|": _check(worst_s, 0.0, worst_s <= 1e-9, tol=1e-9),
        f"reversal round trip ({n_rev} states)": _check(worst_rev, 0.0, worst_rev <= 1e-9, tol=1e-9),
    })


def c5_measure(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    p = preset("tail")
    bil = Billiard(p, 1e6)
    N = _budget(1_000_000, scale, 1000)
    u = liouville_uniforms(seed, 0, N)
    out = eng.sample_flights(bil.kp, bil.cw, u, 1e6)
    ok = out[0] == eng.OK
    s1, p1 = out[9][ok], out[10][ok]
    crit = 1.63 / math.sqrt(ok.sum())
    ks_s = sps.kstest(s1 / bil.total_len, "uniform").statistic
    ks_p = sps.kstest((np.sin(p1) + 1) / 2, "uniform").statistic
    return _result(5, "measure preservation", {
        "KS s": _check(float(ks_s), crit, ks_s < crit),
        "KS sin(phi)": _check(float(ks_p), crit, ks_p < crit),
    })


_TAIL_CACHE: Dict[tuple, S.TailHistogram] = {}


def _tail(seed: int, N: int, workers) -> S.TailHistogram:
    key = (seed, N)
    if key not in _TAIL_CACHE:
        _TAIL_CACHE[key] = S.flight_tail(preset("tail"), N, 1e4, seed, workers)
    return _TAIL_CACHE[key]


def c6_axis_tail(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    p = preset("tail")
    h = _tail(seed, _budget(1e7, scale, 100_000), workers)
    f = S.fit_powerlaw_ccdf(h, "Horizontal", 10, 100)
    beta, c = f.params["beta"], f.params["c"]
    cro = S.crofton_prefactors(p)["Horizontal"]
    return _result(6, "axis tail law", {
        "beta (Horizontal)": _check(beta, 2.0, 1.85 <= beta <= 2.15, range=[1.85, 2.15], stderr=f.stderr["beta"]),
        "prefactor (Horizontal)": _check(c, AXIS_PREFACTOR, abs(c / AXIS_PREFACTOR - 1) <= 0.30,
                                         rel_tol=0.30, stderr=f.stderr["c"], line_measure=cro),
    }, note="line-measure prediction for both orientations: %.6g" % cro)


def c7_oblique_tail(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    p = preset("tail")
    h = _tail(seed, _budget(1e8, scale, 100_000), workers)
    f = S.fit_powerlaw_ccdf(h, ("ObliquePlus", "ObliqueMinus"), 10, 100)
    beta, c = f.params["beta"], f.params["c"]
    cro = S.crofton_prefactors(p)
    return _result(7, "type II tail law", {
        "beta (oblique pooled)": _check(beta, 2.0, 1.7 <= beta <= 2.3, range=[1.7, 2.3], stderr=f.stderr["beta"]),
        "prefactor (oblique pooled)": _check(c, OBLIQUE_PREFACTOR, abs(c / OBLIQUE_PREFACTOR - 1) <= 0.35,
                                             rel_tol=0.35, stderr=f.stderr["c"],
                                             line_measure=cro["ObliquePlus"] + cro["ObliqueMinus"]),
    })


def c8_moment(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    h = _tail(seed, _budget(1e7, scale, 100_000), workers)
    m = S.truncated_second_moment(hist=h, fit_range=(1e2, 1e4))
    slope, r2 = m.fit.params["slope"], m.fit.r2
    return _result(8, "truncated second moment", {
        "R^2": _check(r2, 0.99, r2 >= 0.99),
        "slope": _check(slope, MOMENT_SLOPE, abs(slope / MOMENT_SLOPE - 1) <= 0.15, rel_tol=0.15,
                        stderr=m.fit.stderr["slope"]),
    })


def c9_neutral(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    r = S.neutral_run_stats(preset("tail"), _budget(1e7, scale, 100_000), L=5.0, n_max=4,
                            seed=seed, workers=workers, min_events=200)
    checks = {}
    for n in (2, 3):
        ratio = r.ratios[n - 1]
        checks[f"P{n}/P1"] = _check(ratio, 1.0 / n, bool(np.isfinite(ratio)) and abs(ratio * n - 1) <= 0.30,
                                    events=int(r.counts[n - 1]), rel_tol=0.30)
    checks["within-run spread"] = _check(r.max_spread, 0.0, r.max_spread < 1e-10, tol=1e-10)
    return _result(9, "neutral-run law", checks,
                   note="exit flights within [|r0|, |r0|+1): %.4f" % r.exit_in_range_fraction)


def c10_correlation(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    M = _budget(1e8, scale, 1_000_000)
    jmax = min(100_000, M // 10)
    c = S.correlation(preset("tail"), M, jmax, seed, R=1e3, fit_range=(1e2, 1e5))
    f = c.fit
    pv = S.pair_symmetry(preset("tail"), 1, _budget(100_000, scale, 2000), seed)
    return _result(10, "correlation growth", {
        "R^2 of (ln N)^2 fit": _check(f.r2, 0.95, f.r2 >= 0.95, fit_range=list(f.fit_range)),
        "c > 0": _check(f.params["c"], 0.0, f.params["c"] > 0, stderr=f.stderr["c"]),
        "pair symmetry KS p (n=1)": _check(pv, 0.01, pv > 0.01),
    }, note="M=%d, j_max=%d, R=1e3" % (c.M, jmax))


def c11_regimes(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    K = _budget(1e4, scale, 100)
    n_max = 10_000
    want = {"finite": "constant", "lorentz": "c*ln(n)", "tail": "c*ln(n)^2"}
    checks = {}
    for name, model in want.items():
        try:
            curve = S.msd(preset(name), K, n_max, seed, workers=workers)
        except ParameterError as e:
            checks[name] = _check(f"{type(e).__name__}: {e}", model, False)
            continue
        best = curve.best
        extra = {"c": best.params["c"], "aic": {f.model: f.aic for f in curve.fits}}
        ok = best.model == model and best.params["c"] > 0
        if name == "tail":
            D = S.reference_diffusion(preset("tail"))
            extra["D11+D22"] = D
        checks[name] = _check(best.model, model, ok, **extra)
    return _result(11, "regime discrimination", checks, note="K=%d, n_max=%d" % (K, n_max))


def c12_ctime(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    p = preset("tail")
    K = _budget(2000, scale, 50)
    r = S.ctime_rescale(p, K, 1e5, seed, workers=workers)
    pred = geometry_summary(p)["mean_free_path_prediction"]
    target = 1.0 / r.eta_hat
    return _result(12, "continuous time", {
        "eta_hat": _check(r.eta_hat, pred, abs(r.eta_hat / pred - 1) <= 0.01, rel_tol=0.01),
        "coef ratio * eta_hat": _check(r.coef_ratio / target, 1.0, 0.8 <= r.coef_ratio / target <= 1.2,
                                       range=[0.8, 1.2], coef_ratio=r.coef_ratio),
    }, note="K=%d, t_max=1e5" % K)


def c13_determinism(seed: int = 0, scale: float = 1.0, workers=None) -> dict:
    from .cli import run
    N = _budget(300_000, min(scale, 1.0), 70_000)
    cases = [
        ["tail", "--preset", "tail", "--n", str(N), "--json"],
        ["msd", "--preset", "canonical", "--k", "200", "--n", "200", "--json"],
    ]
    outputs = {}
    with tempfile.TemporaryDirectory() as tmp:
        for w in (1, 2, 1):
            blobs = []
            for i, case in enumerate(cases):
                path = os.path.join(tmp, f"out{i}.csv")
                buf = io.StringIO()
                with contextlib.redirect_stdout(buf):
                    code = run(case + ["--seed", str(seed), "--workers", str(w), "--out", path])
                with open(path, "rb") as fh:
                    blobs.append((code, fh.read(), buf.getvalue().encode()))
            outputs.setdefault(w, []).append(blobs)
    first = outputs[1][0]
    same_rerun = outputs[1][0] == outputs[1][1]
    same_workers = outputs[2][0] == first
    return _result(13, "determinism", {
        "rerun byte-identical": _check(same_rerun, True, same_rerun),
        "workers 1 vs 2 byte-identical": _check(same_workers, True, same_workers),
    })


CRITERIA: List[Callable[..., dict]] = [
    c1_geometry, c2_corridors, c3_suppression, c4_map, c5_measure, c6_axis_tail,
    c7_oblique_tail, c8_moment, c9_neutral, c10_correlation, c11_regimes, c12_ctime,
    c13_determinism,
]


def summary_line(res: dict) -> str:
    parts = []
    for label, c in res["checks"].items():
        v = c["value"]
        vs = "%.6g" % v if isinstance(v, float) else str(v)
        parts.append(f"{label}={vs}{'' if c['ok'] else ' (target %s)' % c['target']}")
    status = "PASS" if res["passed"] else "FAIL"
    return f"criterion {res['id']:2d} {res['name']}: {status}  " + "; ".join(parts)


def run_all(seed: int = 0, scale: float = 1.0, workers=None, only: Optional[List[int]] = None,
            echo: Optional[Callable[[str], None]] = None) -> List[dict]:
    out = []
    for fn in CRITERIA:
        cid = int(fn.__name__[1:].split("_")[0])
        if only and cid not in only:
            continue
        t0 = time.perf_counter()
        res = fn(seed=seed, scale=scale, workers=workers)
        if echo:
            echo(summary_line(res) + "  [%.1fs]" % (time.perf_counter() - t0))
        out.append(res)
    return out
