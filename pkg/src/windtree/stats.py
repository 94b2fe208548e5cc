"""Monte Carlo estimators for free-flight tails, correlations and diffusion.

Every estimator is a deterministic function of ``(params, budget, seed)``.
Independent samples are indexed and drawn from :func:`liouville_uniforms`, and
work is cut into fixed blocks (see :mod:`windtree._blocks`), so the worker
count never changes a result.

Second moments of the free-flight vector diverge logarithmically, so moment and
correlation estimators take an explicit truncation radius ``R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from . import _engine as eng
from ._blocks import BLOCK, block_ranges, map_reduce, map_blocks
from .corridors import CorridorType, axis_corridors, enumerate_corridors, exact_width
from .dynamics import Billiard, CorridorClass, liouville_uniforms
from .geometry import ModelParams, build_scatterer, geometry_summary

__all__ = [
    "CLASS_LABELS",
    "InsufficientData",
    "FitResult",
    "TailHistogram",
    "flight_tail",
    "fit_powerlaw_ccdf",
    "truncated_second_moment",
    "MomentCurve",
    "NeutralRunResult",
    "neutral_run_stats",
    "CorrCurve",
    "correlation",
    "pair_symmetry",
    "MsdAccumulator",
    "MsdCurve",
    "ensemble_displacements",
    "msd",
    "select_msd_model",
    "CtimeResult",
    "ctime_rescale",
    "reference_prefactors",
    "crofton_prefactors",
    "reference_moment_slope",
    "reference_diffusion",
]

CLASS_LABELS = ("None", "Horizontal", "Vertical", "ObliquePlus", "ObliqueMinus")
OBLIQUE = (CorridorClass.OBLIQUE_PLUS, CorridorClass.OBLIQUE_MINUS)
ENSEMBLE_BLOCK = 64
ORBIT_BLOCK = 1 << 20
WALL_TOL = 1e-9


class InsufficientData(RuntimeError):
    pass


@dataclass
class FitResult:
    model: str
    params: Dict[str, float]
    stderr: Dict[str, float]
    fit_range: Tuple[float, float]
    r2: float
    aic: float
    n_points: int

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "stderr": self.stderr,
            "fit_range": list(self.fit_range),
            "r2": self.r2,
            "aic": self.aic,
            "n_points": self.n_points,
        }


def _classes(classes) -> Tuple[int, ...]:
    if classes is None:
        return tuple(range(1, 5))
    if isinstance(classes, (int, np.integer, CorridorClass)):
        return (int(classes),)
    if isinstance(classes, str):
        classes = (classes,)
    out = []
    for c in classes:
        out.append(CLASS_LABELS.index(c) if isinstance(c, str) else int(c))
    return tuple(out)


# ----------------------------------------------------------------------------
# free-flight tails


def log_edges(max_len: float, per_decade: int = 20) -> np.ndarray:
    """``[0, 1, 10**(1/k), ...]`` up to the first edge at or above ``max_len``."""
    kmax = int(math.ceil(per_decade * math.log10(max_len) - 1e-9))
    return np.concatenate([[0.0], 10.0 ** (np.arange(kmax + 1) / per_decade)])


def default_moment_grid(max_len: float) -> np.ndarray:
    kmax = int(math.floor(10 * math.log10(max_len) + 1e-9))
    return 10.0 ** (np.arange(kmax + 1) / 10)


@dataclass
class TailHistogram:
    """Log-binned free-flight lengths per corridor class.

    ``counts[c, j]`` counts flights of class ``c`` with length in
    ``[edges[j], edges[j+1])``.  ``counts_pos`` is the subset travelling in the
    positive orientation of the corridor axis and ``counts_flat`` the subset
    launched from a flat component.  Censored flights (longer than
    ``max_len``) are kept per class in ``censored``.  ``moment_sum[g]`` is the
    sum of ``L**2`` over flights with ``L < moment_R[g]``.
    """

    edges: np.ndarray
    counts: np.ndarray
    counts_pos: np.ndarray
    counts_flat: np.ndarray
    censored: np.ndarray
    n_total: int
    sum_len: float
    moment_R: np.ndarray
    moment_sum: np.ndarray
    moment_sum4: np.ndarray
    max_len: float

    @classmethod
    def empty(cls, max_len: float, moment_R=None) -> "TailHistogram":
        edges = log_edges(max_len)
        nb = len(edges) - 1
        R = default_moment_grid(max_len) if moment_R is None else np.asarray(moment_R, float)
        z = lambda: np.zeros((5, nb), np.int64)  # noqa: E731
        return cls(edges, z(), z(), z(), np.zeros(5, np.int64), 0, 0.0, R,
                   np.zeros(len(R)), np.zeros(len(R)), float(max_len))

    @classmethod
    def from_flights(cls, lengths, classes, max_len: float, censored=None, positive=None,
                     flat_start=None, moment_R=None) -> "TailHistogram":
        h = cls.empty(max_len, moment_R)
        h.add(lengths, classes, censored, positive, flat_start)
        return h

    def add(self, lengths, classes, censored=None, positive=None, flat_start=None) -> None:
        L = np.asarray(lengths, float)
        cl = np.asarray(classes, np.int64)
        if cl.ndim == 0:
            cl = np.full(L.shape, int(cl))
        cens = np.zeros(L.shape, bool) if censored is None else np.asarray(censored, bool)
        pos = np.zeros(L.shape, bool) if positive is None else np.asarray(positive, bool)
        flat = np.zeros(L.shape, bool) if flat_start is None else np.asarray(flat_start, bool)
        nb = len(self.edges) - 1
        ok = ~cens
        b = np.clip(np.searchsorted(self.edges, L[ok], side="right") - 1, 0, nb - 1)
        idx = cl[ok] * nb + b
        self.counts += np.bincount(idx, minlength=5 * nb).reshape(5, nb)
        self.counts_pos += np.bincount(idx[pos[ok]], minlength=5 * nb).reshape(5, nb)
        self.counts_flat += np.bincount(idx[flat[ok]], minlength=5 * nb).reshape(5, nb)
        self.censored += np.bincount(cl[cens], minlength=5)
        self.n_total += int(L.size)
        Lok = np.sort(L[ok])
        self.sum_len += float(Lok.sum())
        c2 = np.concatenate([[0.0], np.cumsum(Lok ** 2)])
        c4 = np.concatenate([[0.0], np.cumsum(Lok ** 4)])
        k = np.searchsorted(Lok, self.moment_R, side="left")
        self.moment_sum += c2[k]
        self.moment_sum4 += c4[k]

    def merge(self, other: "TailHistogram") -> "TailHistogram":
        if not (np.array_equal(self.edges, other.edges) and np.array_equal(self.moment_R, other.moment_R)):
            raise ValueError("histograms have different binning")
        return TailHistogram(
            self.edges, self.counts + other.counts, self.counts_pos + other.counts_pos,
            self.counts_flat + other.counts_flat, self.censored + other.censored,
            self.n_total + other.n_total, self.sum_len + other.sum_len, self.moment_R,
            self.moment_sum + other.moment_sum, self.moment_sum4 + other.moment_sum4,
            self.max_len,
        )

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    def _select(self, classes, orientation: Optional[int], flat_only: bool):
        cs = list(_classes(classes))
        if flat_only:
            base = self.counts_flat[cs]
        else:
            base = self.counts[cs]
        if orientation is None:
            sel = base
            cens = self.censored[cs].sum()
        elif orientation > 0:
            sel = self.counts_pos[cs] if not flat_only else base
            cens = 0
        else:
            sel = self.counts[cs] - self.counts_pos[cs]
            cens = 0
        return sel.sum(axis=0), int(cens)

    def ccdf(self, classes=None, orientation: Optional[int] = None, flat_only: bool = False):
        """Empirical ``P(L >= edge)`` at every positive bin edge.

        ``classes`` defaults to all corridor classes (1-4); use ``0`` for
        unclassified flights.  Censored flights count as longer than every
        edge.
        """
        cnt, cens = self._select(classes, orientation, flat_only)
        tail = np.cumsum(cnt[::-1])[::-1] + cens
        return self.edges[1:-1].copy(), tail[1:] / max(self.n_total, 1)

    def all_ccdf(self):
        cnt = self.counts.sum(axis=0)
        tail = np.cumsum(cnt[::-1])[::-1] + self.n_censored
        return self.edges[1:-1].copy(), tail[1:] / max(self.n_total, 1)

    def mean_length(self) -> float:
        n = self.n_total - self.n_censored
        return self.sum_len / n if n else math.nan

    def rows(self) -> List[tuple]:
        """CSV rows ``(class, bin_lo, bin_hi, count, ccdf)``."""
        out = []
        for c in range(5):
            cnt = self.counts[c]
            tail = (np.cumsum(cnt[::-1])[::-1] + self.censored[c]) / max(self.n_total, 1)
            for j in range(len(cnt)):
                out.append((CLASS_LABELS[c], self.edges[j], self.edges[j + 1], int(cnt[j]), float(tail[j])))
        return out


def _tail_block(params: ModelParams, seed: int, start: int, count: int, max_len: float,
                moment_R: np.ndarray) -> TailHistogram:
    bil = Billiard(params, max_len)
    u = liouville_uniforms(seed, start, count)
    st, dx, dy, L, k0, k1, cl, *_ = eng.sample_flights(bil.kp, bil.cw, u, max_len)
    pos = _positive_orientation(cl, dx, dy)
    return TailHistogram.from_flights(L, cl, max_len, st == eng.ESCAPED, pos, k0 == eng.FLAT, moment_R)


def _positive_orientation(cl, dx, dy):
    return np.select(
        [cl == 1, cl == 2, cl == 3, cl == 4],
        [dx > 0, dy > 0, dx + dy > 0, dx - dy > 0],
        default=False,
    )


def flight_tail(params: ModelParams, n_samples: int, max_len: float = 1e4, seed: int = 0,
                workers: Optional[int] = None, moment_R=None) -> TailHistogram:
    """One free flight from each of ``n_samples`` Liouville samples, histogrammed."""
    R = default_moment_grid(max_len) if moment_R is None else np.asarray(moment_R, float)
    args = [(params, seed, s, c, max_len, R) for s, c in block_ranges(int(n_samples))]
    return map_reduce(_tail_block, args, TailHistogram.merge, workers)


def _poisson_loglinear(x, n, iters: int = 100):
    """Poisson regression ``n ~ Poisson(exp(A + B x))`` by iteratively reweighted least squares.

    Starts from least squares on ``log n`` weighted by ``n``; the final
    covariance is the inverse Fisher information, inflated by the Pearson
    dispersion when it exceeds one.
    """
    X = np.column_stack([np.ones_like(x), x])
    pos = n > 0
    coef, *_ = np.linalg.lstsq(X[pos] * np.sqrt(n[pos])[:, None], np.log(n[pos]) * np.sqrt(n[pos]), rcond=None)
    for _ in range(iters):
        eta = X @ coef
        mu = np.exp(eta)
        z = eta + (n - mu) / mu
        new, *_ = np.linalg.lstsq(X * np.sqrt(mu)[:, None], z * np.sqrt(mu), rcond=None)
        done = np.max(np.abs(new - coef)) < 1e-12
        coef = new
        if done:
            break
    mu = np.exp(X @ coef)
    chi2 = float(np.sum((n - mu) ** 2 / mu))
    dof = max(len(x) - 2, 1)
    cov = np.linalg.inv((X * mu[:, None]).T @ X) * max(1.0, chi2 / dof)
    y = np.log(n[pos])
    resid = y - (X @ coef)[pos]
    w = n[pos]
    ss_tot = float(np.sum(w * (y - np.sum(w * y) / np.sum(w)) ** 2))
    r2 = 1.0 - float(np.sum(w * resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return coef, cov, chi2, r2


def fit_powerlaw_ccdf(h: TailHistogram, classes=None, Lmin: float = 10.0, Lmax: Optional[float] = None,
                      orientation: Optional[int] = None, flat_only: bool = False) -> FitResult:
    """Fit ``CCDF(L) = c * L**-beta`` from log-binned counts in ``[Lmin, Lmax]``.

    For a pure power law the count in ``[e, rho*e)`` is ``N c e**-beta (1 -
    rho**-beta)``, so ``log(count)`` is linear in ``log(e)`` with slope
    ``-beta``.  Bin counts are independent Poisson variables; the line is
    fitted by Poisson maximum likelihood (iteratively reweighted least
    squares, whose first pass weights ``log(count)`` by the count itself).
    Empty bins inside the range are kept.
    """
    if Lmax is None:
        Lmax = h.max_len / 10.0
    cnt, _ = h._select(classes, orientation, flat_only)
    lo, hi = h.edges[:-1], h.edges[1:]
    sel = (lo >= Lmin * (1 - 1e-9)) & (hi <= Lmax * (1 + 1e-9)) & (lo > 0)
    nonempty = int((sel & (cnt > 0)).sum())
    if nonempty < 5:
        raise InsufficientData(f"only {nonempty} nonempty bins in [{Lmin}, {Lmax}]")
    x = np.log(lo[sel])
    coef, cov, chi2, r2 = _poisson_loglinear(x, cnt[sel].astype(float))
    beta = -coef[1]
    rho = hi[sel][0] / lo[sel][0]
    g = 1.0 - rho ** (-beta)
    c = math.exp(coef[0]) / (h.n_total * g)
    # delta method: d log c / dA = 1, d log c / d beta = -rho**-beta ln(rho) / g
    dbeta = -(rho ** (-beta)) * math.log(rho) / g
    J = np.array([1.0, -dbeta])  # w.r.t. (A, slope) with beta = -slope
    var_logc = float(J @ cov @ J)
    return FitResult(
        "powerlaw_ccdf",
        {"beta": float(beta), "c": float(c)},
        {"beta": float(math.sqrt(cov[1, 1])), "c": float(c * math.sqrt(var_logc))},
        (float(Lmin), float(Lmax)),
        float(r2),
        chi2 + 4.0,
        int(sel.sum()),
    )


@dataclass
class MomentCurve:
    """Truncated second moment ``<|r|^2 1{|r| < R}>`` on a grid of ``R``."""

    R: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    fit: FitResult


def truncated_second_moment(params: Optional[ModelParams] = None, n_samples: int = 0,
                            R_grid=None, seed: int = 0, max_len: float = 1e4,
                            hist: Optional[TailHistogram] = None, fit_range=(1e2, 1e4),
                            workers: Optional[int] = None) -> MomentCurve:
    """Truncated second moment and its linear fit against ``ln R``.

    Pass ``hist`` to reuse a tail run; otherwise ``n_samples`` flights are
    drawn.  The reported slope stderr comes from the sampling variance of the
    increment between the two ends of the fit range.
    """
    if hist is None:
        hist = flight_tail(params, n_samples, max_len, seed, workers, moment_R=R_grid)
    elif R_grid is not None and not np.array_equal(np.asarray(R_grid, float), hist.moment_R):
        raise ValueError("R_grid must match the histogram's moment grid")
    N = hist.n_total
    R = hist.moment_R
    m = hist.moment_sum / N
    var = np.maximum(hist.moment_sum4 / N - m ** 2, 0.0) / N
    lo, hi = fit_range
    sel = (R >= lo * (1 - 1e-9)) & (R <= hi * (1 + 1e-9))
    if sel.sum() < 3:
        raise InsufficientData("fewer than 3 grid points in the fit range")
    x = np.log(R[sel])
    y = m[sel]
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    i0, i1 = np.flatnonzero(sel)[[0, -1]]
    # increment over [R_lo, R_hi) is a sum over disjoint flights
    inc2 = (hist.moment_sum4[i1] - hist.moment_sum4[i0]) / N
    inc = (hist.moment_sum[i1] - hist.moment_sum[i0]) / N
    se_slope = math.sqrt(max(inc2 - inc ** 2, 0.0) / N) / (x[-1] - x[0])
    fit = FitResult("linear_lnR", {"slope": float(coef[1]), "intercept": float(coef[0])},
                    {"slope": float(se_slope)}, (float(lo), float(hi)), float(r2),
                    float(len(x) * math.log(max(np.mean(resid ** 2), 1e-300)) + 4.0), int(len(x)))
    return MomentCurve(R, m, np.sqrt(var), fit)


# ----------------------------------------------------------------------------
# reference constants


def _z(params: ModelParams) -> float:
    return 2.0 * build_scatterer(params).total_len


def _oblique_width_eff(params: ModelParams) -> float:
    return exact_width(params, (1, 1)) - 2 * params.r


def reference_prefactors(params: ModelParams) -> Dict[str, float]:
    """Published asymptotic tail constants: ``d_h^2/Z``, ``d_v^2/Z``, ``a d_o^2/Z``."""
    Z = _z(params)
    h, v = axis_corridors(params)
    out = {"Horizontal": max(h.width_eff, 0) ** 2 / Z, "Vertical": max(v.width_eff, 0) ** 2 / Z}
    if params.is_windtree:
        out["Oblique"] = params.a * max(_oblique_width_eff(params), 0) ** 2 / Z
    return out


def crofton_prefactors(params: ModelParams) -> Dict[str, float]:
    """Line-measure count of long flights per corridor class, both orientations.

    Lines at a small angle ``psi`` crossing one period ``ell`` of a corridor
    wall have measure ``ell * psi dpsi``, and each is a flight of length about
    ``d / psi``.  Summing both walls and both orientations gives ``2 ell d^2 /
    Z`` for the coefficient of ``L**-2``.
    """
    Z = _z(params)
    out = {}
    for d, lab in (((1, 0), "Horizontal"), ((0, 1), "Vertical"), ((1, 1), "ObliquePlus"), ((1, -1), "ObliqueMinus")):
        w = exact_width(params, d) - 2 * params.r
        out[lab] = 2.0 * math.hypot(*d) * max(w, 0.0) ** 2 / Z
    return out


def reference_moment_slope(params: ModelParams) -> float:
    """``(4 a d_o^2 + 2 d_h^2 + 2 d_v^2) / Z`` (published constants)."""
    Z = _z(params)
    h, v = axis_corridors(params)
    do = max(_oblique_width_eff(params), 0.0) if params.is_windtree else 0.0
    a = params.a if params.is_windtree else 0.0
    return (4 * a * do ** 2 + 2 * max(h.width_eff, 0) ** 2 + 2 * max(v.width_eff, 0) ** 2) / Z


def reference_diffusion(params: ModelParams) -> float:
    """``D11 + D22 = 4 a d_o^2 / |dS'|`` for the square-rhombus regime."""
    do = max(_oblique_width_eff(params), 0.0)
    return 4 * params.a * do ** 2 / build_scatterer(params).total_len


# ----------------------------------------------------------------------------
# orbits: neutral runs and correlations


_NO_START = np.zeros(0)


def _orbit(params: ModelParams, seed: int, index: int, n: int, max_len: float):
    bil = Billiard(params, max_len)
    u = liouville_uniforms(seed, index, 1)[0]
    s, phi = eng.liouville_sample(bil.kp, u[0], u[1])
    if eng.near_junction(bil.kp, s):
        s, phi = eng.liouville_sample(bil.kp, u[2], u[3])
    st, done, dx, dy, kind, cls, *_ = eng.orbit_flights(bil.kp, bil.cw, s, phi, int(n), max_len, _NO_START)
    return st, done, dx[:done], dy[:done], kind[: done + 1], cls[:done]


def _orbit_pieces(params: ModelParams, seed: int, index: int, n: int, max_len: float, piece: int):
    """Yield ``(dx, dy, cls)`` for consecutive pieces of one orbit."""
    bil = Billiard(params, max_len)
    u = liouville_uniforms(seed, index, 1)[0]
    s, phi = eng.liouville_sample(bil.kp, u[0], u[1])
    if eng.near_junction(bil.kp, s):
        s, phi = eng.liouville_sample(bil.kp, u[2], u[3])
    left = int(n)
    start = _NO_START
    while left > 0:
        k = min(piece, left)
        st, done, dx, dy, _, cls, s, phi, start = eng.orbit_flights(bil.kp, bil.cw, s, phi, k, max_len, start)
        yield dx[:done], dy[:done], cls[:done]
        if st != eng.OK:
            return
        left -= k


def _runs(mask: np.ndarray, cls: np.ndarray):
    """Maximal runs of consecutive ``mask`` entries with equal class: (start, length)."""
    m = mask.astype(np.int8)
    brk = np.ones(len(m), bool)
    brk[1:] = (cls[1:] != cls[:-1]) | (m[:-1] == 0)
    starts = np.flatnonzero(mask & brk)
    out = []
    for s in starts:
        e = s
        while e + 1 < len(m) and mask[e + 1] and cls[e + 1] == cls[s]:
            e += 1
        out.append((int(s), int(e - s + 1)))
    return out


@dataclass
class NeutralRunResult:
    """Counts of windows of ``n`` consecutive long flat-to-flat flights.

    ``counts[n-1]`` counts windows of ``n`` consecutive flights, each longer
    than ``L`` in the same oblique corridor, whose ``n + 1`` endpoints all lie
    on the flat sides forming the two walls of that corridor (so each flight
    crosses exactly one corridor width).  ``ratios[n-1] = counts[n-1] / counts[0]`` (NaN when
    fewer than ``min_events`` windows were seen).
    """

    L: float
    n_collisions: int
    counts: np.ndarray
    ratios: np.ndarray
    max_spread: float
    exit_deltas: np.ndarray
    min_events: int

    @property
    def exit_in_range_fraction(self) -> float:
        d = self.exit_deltas
        return float(np.mean((d >= -1e-9) & (d < 1.0))) if len(d) else math.nan


def _neutral_block(params, seed, index, n, max_len, L, n_max):
    st, done, dx, dy, kind, cls = _orbit(params, seed, index, n, max_len)
    length = np.hypot(dx, dy)
    cw = Billiard(params, max_len).cw
    h = math.sqrt(0.5)
    # transverse displacement; wall-to-wall flights cross exactly one corridor width
    across = np.where(cls == CorridorClass.OBLIQUE_PLUS, np.abs(h * (dx - dy)), np.abs(h * (dx + dy)))
    width = np.where(cls == CorridorClass.OBLIQUE_PLUS, cw[4], cw[5])
    wall = np.abs(across - width) < WALL_TOL
    good = np.isin(cls, OBLIQUE) & (length > L) & (kind[:-1] == eng.FLAT) & (kind[1:] == eng.FLAT) & wall
    counts = np.zeros(n_max, np.int64)
    spread = 0.0
    exits = []
    for s, m in _runs(good, cls):
        for k in range(1, min(m, n_max) + 1):
            counts[k - 1] += m - k + 1
        if m >= 2:
            seg = length[s: s + m]
            spread = max(spread, float(seg.max() - seg.min()))
        if s + m < done:
            exits.append(length[s + m] - length[s + m - 1])
    return counts, spread, np.array(exits), done


def _neutral_merge(a, b):
    return a[0] + b[0], max(a[1], b[1]), np.concatenate([a[2], b[2]]), a[3] + b[3]


def neutral_run_stats(params: ModelParams, n_collisions: int, L: float = 5.0, n_max: int = 4,
                      seed: int = 0, max_len: float = 1e6, n_orbits: Optional[int] = None,
                      min_events: int = 50, workers: Optional[int] = None) -> NeutralRunResult:
    """Frequencies of neutral runs along type II corridors.

    The budget is split over ``n_orbits`` independent orbits (default: one per
    ``2**20`` collisions).  Also returns the largest length spread inside a
    run and, for each run, the excess length of the flight that leaves it.
    """
    if n_orbits is None:
        n_orbits = max(1, int(math.ceil(n_collisions / ORBIT_BLOCK)))
    per = int(math.ceil(n_collisions / n_orbits))
    args = [(params, seed, j, per, max_len, L, n_max) for j in range(n_orbits)]
    counts, spread, exits, total = map_reduce(_neutral_block, args, _neutral_merge, workers)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(counts >= min_events, counts / counts[0], np.nan) if counts[0] else np.full(n_max, np.nan)
    return NeutralRunResult(float(L), int(total), counts, ratios, spread, exits, min_events)


def _cross_sum(a: np.ndarray, x: np.ndarray, jmax: int) -> np.ndarray:
    """``sum_i a[i] . x[i+j]`` for ``j = 0..jmax`` (rows are vectors, ``len(x) >= len(a)``)."""
    size = 1 << int(math.ceil(math.log2(len(x) + len(a))))
    out = np.zeros(jmax + 1)
    for col in range(a.shape[1]):
        fa = np.fft.rfft(a[:, col], size)
        fx = np.fft.rfft(x[:, col], size)
        out += np.fft.irfft(np.conj(fa) * fx, size)[: jmax + 1]
    return out


@dataclass
class CorrCurve:
    """Flight-vector correlations along one long orbit.

    ``c[j]`` estimates ``<(r(X), r(T^j X))>`` with flights of length ``>= R``
    zeroed; ``c_o`` restricts to pairs classified in the same oblique corridor.
    ``partial_sum[N-1] = sum_{k=1..N} c[k]``.
    """

    lags: np.ndarray
    c: np.ndarray
    stderr: np.ndarray
    partial_sum: np.ndarray
    c_o: np.ndarray
    R: float
    M: int
    fit: Optional[FitResult]

    def rows(self) -> List[tuple]:
        ps = np.concatenate([[0.0], self.partial_sum])
        return [(int(j), float(self.c[j]), float(self.stderr[j]), float(ps[j])) for j in self.lags]


def fit_log_squared(N: np.ndarray, S: np.ndarray, lo: float, hi: float) -> FitResult:
    """Fit ``S(N) = alpha + c (ln N)^2`` by least squares on a log grid of ``N``."""
    grid = np.unique(np.round(np.logspace(math.log10(lo), math.log10(hi), 40)).astype(int))
    grid = grid[(grid >= 1) & (grid <= len(S))]
    if len(grid) < 5:
        raise InsufficientData("fit range does not cover enough lags")
    x = np.log(grid) ** 2
    y = S[grid - 1]
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    aic = len(x) * math.log(max(float(resid @ resid) / len(x), 1e-300)) + 4.0
    return FitResult("alpha+c*lnN^2", {"c": float(coef[1]), "alpha": float(coef[0])},
                     {"c": float(math.sqrt(cov[1, 1])), "alpha": float(math.sqrt(cov[0, 0]))},
                     (float(grid[0]), float(grid[-1])), float(r2), float(aic), int(len(x)))


def correlation(params: ModelParams, M: int, j_max: int, seed: int = 0, R: float = 1e3,
                max_len: float = 1e6, piece: int = 1 << 22, fit_range=(1e2, 1e5)) -> CorrCurve:
    """Time-average correlation of truncated flight vectors along one orbit.

    The orbit is generated in pieces of ``piece`` collisions; pairs ``(i,
    i + j)`` are charged to the piece holding ``i``, using the first ``j_max``
    flights of the next piece.  Standard errors are batch means over pieces.
    """
    if M <= j_max + 1:
        raise InsufficientData("orbit length must exceed j_max")
    if piece <= j_max:
        raise ValueError("piece must exceed j_max")

    def prep(dx, dy, cls):
        r = np.column_stack([dx, dy])
        r *= (np.hypot(dx, dy) < R)[:, None]
        return r, cls

    tot = np.zeros(j_max + 1)
    tot_o = np.zeros(j_max + 1)
    batches = []
    Mn = 0
    pending = None

    def flush(cur, nxt):
        r, cls = cur
        if nxt is None:
            x, xc = r, cls
        else:
            x = np.concatenate([r, nxt[0][:j_max]])
            xc = np.concatenate([cls, nxt[1][:j_max]])
        s = _cross_sum(r, x, j_max)
        so = np.zeros(j_max + 1)
        for k in OBLIQUE:
            so += _cross_sum(r * (cls == k)[:, None], x * (xc == k)[:, None], j_max)
        npairs = np.minimum(len(r), len(x) - np.arange(j_max + 1))
        return s, so, npairs

    for dx, dy, cls in _orbit_pieces(params, seed, 0, M, max_len, piece):
        cur = prep(dx, dy, cls)
        Mn += len(dx)
        if pending is not None:
            s, so, npairs = flush(pending, cur)
            tot += s
            tot_o += so
            batches.append(s / npairs)
        pending = cur
    if pending is not None:
        s, so, npairs = flush(pending, None)
        tot += s
        tot_o += so
        if np.all(npairs > 0):
            batches.append(s / npairs)
    if Mn <= j_max + 1:
        raise InsufficientData(f"orbit censored after {Mn} collisions")
    denom = Mn - np.arange(j_max + 1)
    c = tot / denom
    c_o = tot_o / denom
    stderr = np.full(j_max + 1, np.nan)
    if len(batches) >= 2:
        b = np.array(batches)
        stderr = b.std(axis=0, ddof=1) / math.sqrt(len(b))
    partial = np.cumsum(c[1:])
    fit = None
    hi = min(fit_range[1], j_max)
    if hi > fit_range[0]:
        fit = fit_log_squared(np.arange(1, j_max + 1), partial, fit_range[0], hi)
    return CorrCurve(np.arange(j_max + 1), c, stderr, partial, c_o, float(R), int(Mn), fit)


TIE_TOL = 1e-9


def pair_symmetry(params: ModelParams, n: int, K: int = 100_000, seed: int = 0,
                  max_len: float = 1e6) -> float:
    """Two-sample KS p-value for ``|r(X)| - |r(T^n X)|`` against its negation.

    Time reversal makes the joint law of ``(|r(X)|, |r(T^n X)|)`` invariant
    under swapping, so the difference is symmetric about zero.  ``K``
    independent Liouville starts are split in two halves, one compared with
    the negated other.  Wall-to-wall bounces give exactly equal lengths; those
    differences are snapped to zero so rounding cannot break the ties.
    """
    bil = Billiard(params, max_len)
    u = liouville_uniforms(seed, 0, K)
    d = np.empty(K)
    for k in range(K):
        s, phi = eng.liouville_sample(bil.kp, u[k, 0], u[k, 1])
        st, done, dx, dy, *_ = eng.orbit_flights(bil.kp, bil.cw, s, phi, n + 1, max_len, _NO_START)
        if done < n + 1:
            d[k] = np.nan
            continue
        d[k] = math.hypot(dx[0], dy[0]) - math.hypot(dx[n], dy[n])
    d = d[~np.isnan(d)]
    d[np.abs(d) < TIE_TOL] = 0.0
    half = len(d) // 2
    return float(sps.ks_2samp(d[:half], -d[half:]).pvalue)


# ----------------------------------------------------------------------------
# ensembles: mean-square displacement, continuous time


@dataclass
class MsdAccumulator:
    """Mergeable sums over trajectories on fixed collision and time grids."""

    n_grid: np.ndarray
    t_grid: np.ndarray
    count: int
    censored: int
    sum_sq_n: np.ndarray
    sum_sq2_n: np.ndarray
    sum_vec_n: np.ndarray
    sum_vec2_n: np.ndarray
    sum_sq_t: np.ndarray
    sum_sq2_t: np.ndarray
    sum_tn: np.ndarray

    @classmethod
    def empty(cls, n_grid, t_grid) -> "MsdAccumulator":
        gn, gt = len(n_grid), len(t_grid)
        return cls(np.asarray(n_grid, np.int64), np.asarray(t_grid, float), 0, 0,
                   np.zeros(gn), np.zeros(gn), np.zeros((gn, 2)), np.zeros((gn, 2)),
                   np.zeros(gt), np.zeros(gt), np.zeros(gn))

    def add(self, xn, xt, tn, status) -> None:
        ok = status == eng.OK
        xn, xt, tn = xn[ok], xt[ok], tn[ok]
        sq = np.sum(xn ** 2, axis=2)
        sqt = np.sum(xt ** 2, axis=2)
        self.count += int(ok.sum())
        self.censored += int((~ok).sum())
        self.sum_sq_n += sq.sum(axis=0)
        self.sum_sq2_n += (sq ** 2).sum(axis=0)
        self.sum_vec_n += xn.sum(axis=0)
        self.sum_vec2_n += (xn ** 2).sum(axis=0)
        self.sum_sq_t += sqt.sum(axis=0)
        self.sum_sq2_t += (sqt ** 2).sum(axis=0)
        self.sum_tn += tn.sum(axis=0)

    def merge(self, o: "MsdAccumulator") -> "MsdAccumulator":
        return MsdAccumulator(
            self.n_grid, self.t_grid, self.count + o.count, self.censored + o.censored,
            self.sum_sq_n + o.sum_sq_n, self.sum_sq2_n + o.sum_sq2_n,
            self.sum_vec_n + o.sum_vec_n, self.sum_vec2_n + o.sum_vec2_n,
            self.sum_sq_t + o.sum_sq_t, self.sum_sq2_t + o.sum_sq2_t, self.sum_tn + o.sum_tn,
        )

    def _mean_se(self, s1, s2):
        k = max(self.count, 1)
        m = s1 / k
        var = np.maximum(s2 / k - m ** 2, 0.0)
        return m, np.sqrt(var / max(k - 1, 1))


def _ensemble_block(params, seed, start, count, n_grid, t_grid, max_len):
    bil = Billiard(params, max_len)
    u = liouville_uniforms(seed, start, count)
    status, xn, xt, tn = eng.displacement_batch(bil.kp, bil.cw, u, n_grid, t_grid, max_len)
    acc = MsdAccumulator.empty(n_grid, t_grid)
    acc.add(xn, xt, tn, status)
    return acc


def ensemble_displacements(params: ModelParams, K: int, n_grid, t_grid=(), seed: int = 0,
                           max_len: float = 1e6, workers: Optional[int] = None) -> MsdAccumulator:
    n_grid = np.asarray(n_grid, np.int64)
    t_grid = np.asarray(t_grid, float)
    args = [(params, seed, s, c, n_grid, t_grid, max_len) for s, c in block_ranges(int(K), ENSEMBLE_BLOCK)]
    return map_reduce(_ensemble_block, args, MsdAccumulator.merge, workers)


def log_grid(n_max: int, per_decade: int = 10) -> np.ndarray:
    g = np.unique(np.round(np.logspace(0, math.log10(n_max), int(per_decade * math.log10(n_max)) + 1)).astype(np.int64))
    return g[g >= 1]


@dataclass
class MsdCurve:
    n: np.ndarray
    msd: np.ndarray
    stderr: np.ndarray
    k_samples: np.ndarray
    mean_disp: np.ndarray
    mean_disp_se: np.ndarray
    fits: List[FitResult]

    @property
    def best(self) -> FitResult:
        return self.fits[0]

    def rows(self) -> List[tuple]:
        out = [(0, 0.0, 0.0, int(self.k_samples[0]) if len(self.k_samples) else 0)]
        out += [(int(n), float(m), float(s), int(k)) for n, m, s, k in zip(self.n, self.msd, self.stderr, self.k_samples)]
        return out


MSD_MODELS = {
    "constant": lambda n: np.ones_like(n, dtype=float),
    "c*ln(n)": lambda n: np.log(n),
    "c*ln(n)^2": lambda n: np.log(n) ** 2,
}


def select_msd_model(n, msd, stderr, n_min: float = 10.0, n_max: Optional[float] = None) -> List[FitResult]:
    """Rank ``MSD/n = c f(n)`` for ``f`` in 1, ``ln n``, ``(ln n)^2`` by AIC.

    Each model has one parameter, fitted by weighted least squares with
    weights ``1/stderr^2`` on ``MSD/n``; ``AIC = chi2 + 2``.
    """
    n = np.asarray(n, float)
    sel = (n >= n_min) & (stderr > 0)
    if n_max is not None:
        sel &= n <= n_max
    if sel.sum() < 3:
        raise InsufficientData("fewer than 3 grid points for the MSD fit")
    x = n[sel]
    y = msd[sel] / x
    w = (x / stderr[sel]) ** 2
    out = []
    for name, f in MSD_MODELS.items():
        fx = f(x)
        c = float(np.sum(w * y * fx) / np.sum(w * fx * fx))
        resid = y - c * fx
        chi2 = float(np.sum(w * resid ** 2))
        ybar = np.sum(w * y) / np.sum(w)
        ss_tot = float(np.sum(w * (y - ybar) ** 2))
        r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 1.0
        se = math.sqrt(max(chi2 / max(len(x) - 1, 1), 1.0) / np.sum(w * fx * fx))
        out.append(FitResult(name, {"c": c}, {"c": se}, (float(x[0]), float(x[-1])), r2, chi2 + 2.0, int(len(x))))
    out.sort(key=lambda f: f.aic)
    return out


def msd(params: ModelParams, K: int, n_max: int, seed: int = 0, n_min_fit: float = 10.0,
        max_len: float = 1e6, workers: Optional[int] = None, per_decade: int = 10) -> MsdCurve:
    """Ensemble mean-square displacement ``<|x_n - x_0|^2>`` with regime fits."""
    grid = log_grid(n_max, per_decade)
    acc = ensemble_displacements(params, K, grid, (), seed, max_len, workers)
    return msd_from_accumulator(acc, n_min_fit)


def msd_from_accumulator(acc: MsdAccumulator, n_min_fit: float = 10.0) -> MsdCurve:
    m, se = acc._mean_se(acc.sum_sq_n, acc.sum_sq2_n)
    mv, vv = acc._mean_se(acc.sum_vec_n, acc.sum_vec2_n)
    fits = select_msd_model(acc.n_grid, m, se, n_min_fit)
    k = np.full(len(acc.n_grid), acc.count, np.int64)
    return MsdCurve(acc.n_grid.copy(), m, se, k, mv, vv, fits)


@dataclass
class CtimeResult:
    """Discrete versus continuous-time superdiffusive normalisation.

    ``coef_discrete`` fits ``MSD_n = c n (ln n)^2`` over the top decade of
    ``n`` ending at ``t_max / eta_hat``; ``coef_continuous`` fits ``MSD_t = c t
    (ln t)^2`` over the top decade of ``t``.
    """

    eta_hat: float
    eta_se: float
    t: np.ndarray
    ratio_curve: np.ndarray
    n: np.ndarray
    msd_n: np.ndarray
    msd_t: np.ndarray
    coef_discrete: float
    coef_continuous: float
    K: int

    @property
    def coef_ratio(self) -> float:
        return self.coef_continuous / self.coef_discrete


def _coef(x, y):
    f = x * np.log(x) ** 2
    return float(np.sum(y * f) / np.sum(f * f))


def ctime_rescale(params: ModelParams, K: int, t_max: float, seed: int = 0, max_len: float = 1e6,
                  workers: Optional[int] = None, per_decade: int = 10) -> CtimeResult:
    """Time-averaged mean free path and the continuous-time MSD coefficient."""
    eta0 = geometry_summary(params)["mean_free_path_prediction"]
    t_grid = np.logspace(0, math.log10(t_max), int(per_decade * math.log10(t_max)) + 1)
    n_top = int(round(t_max / eta0))
    n_grid = np.unique(np.concatenate([log_grid(n_top, per_decade), [n_top]]))
    acc = ensemble_displacements(params, K, n_grid, t_grid, seed, max_len, workers)
    msd_n, _ = acc._mean_se(acc.sum_sq_n, acc.sum_sq2_n)
    msd_t, _ = acc._mean_se(acc.sum_sq_t, acc.sum_sq2_t)
    # time-averaged mean free path: total time over total collisions
    eta_hat = float(acc.sum_tn[-1] / (acc.count * n_grid[-1]))
    eta_se = float("nan")
    sel_n = n_grid >= n_grid[-1] / 10
    sel_t = t_grid >= t_max / 10
    cd = _coef(n_grid[sel_n].astype(float), msd_n[sel_n])
    cc = _coef(t_grid[sel_t], msd_t[sel_t])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = msd_t / (t_grid * np.log(t_grid) ** 2)
    return CtimeResult(eta_hat, eta_se, t_grid, ratio, n_grid, msd_n, msd_t, cd, cc, acc.count)
