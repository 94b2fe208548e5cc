"""Brute-force reference for the billiard map.

Plain numpy, built only from the boundary components of
:func:`windtree.geometry.build_scatterer`; it shares no code with the compiled
kernels.  Every scatterer in a growing box of cells is intersected with the
ray and the nearest hit wins.  Slow, but easy to trust.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from .geometry import Arc, ModelParams, Segment, boundary_point, build_scatterer


def _ray_segments(p, v, starts, ends):
    """Ray parameter of hits on many segments (inf on a miss)."""
    d = ends - starts
    w = starts - p
    den = v[0] * d[:, 1] - v[1] * d[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (w[:, 0] * d[:, 1] - w[:, 1] * d[:, 0]) / den
        u = (w[:, 0] * v[1] - w[:, 1] * v[0]) / den
    ok = (np.abs(den) > 1e-15) & (u >= 0) & (u <= 1) & (lam > 1e-10)
    return np.where(ok, lam, np.inf), u


def _ray_arcs(p, v, centers, radius, a0, a1):
    w = p - centers
    b = w @ v
    m = w - b[:, None] * v
    disc = radius ** 2 - np.sum(m * m, axis=1)
    out = np.full(len(centers), np.inf)
    ok = disc > 0
    lam = -b - np.sqrt(np.where(ok, disc, 0.0))
    q = p + lam[:, None] * v - centers
    ang = np.mod(np.arctan2(q[:, 1], q[:, 0]), 2 * math.pi)
    # full circles and arcs through angle 0 need care with the wrap
    inside = ((ang >= a0 - 1e-12) & (ang <= a1 + 1e-12)) | ((a1 >= 2 * math.pi - 1e-12) & (ang <= 1e-12))
    inside |= (a1 - a0 >= 2 * math.pi - 1e-12)
    ok &= inside & (lam > 1e-10)
    out[ok] = lam[ok]
    return out


def brute_force_hit(params: ModelParams, cell: Tuple[int, int], s: float, phi: float,
                    max_len: float = 1e3) -> Tuple[Tuple[int, int], float, float]:
    """Next collision ``(cell, s, lam)`` from the outgoing state ``(cell, s, phi)``."""
    b = build_scatterer(params)
    q0, n0, _ = boundary_point(b, s)
    c, sn = math.cos(phi), math.sin(phi)
    v = np.array([n0[0] * c - n0[1] * sn, n0[0] * sn + n0[1] * c])
    segs = [(k, comp) for k, comp in enumerate(b.components) if isinstance(comp, Segment)]
    arcs = [(k, comp) for k, comp in enumerate(b.components) if isinstance(comp, Arc)]
    box = 4
    while True:
        ii, jj = np.meshgrid(np.arange(-box, box + 1), np.arange(-box, box + 1), indexing="ij")
        offs = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(float)
        offs = offs[np.any(offs != 0, axis=1)]
        best = (math.inf, None, None, None)
        for k, sg in segs:
            lam, u = _ray_segments(q0, v, offs + sg.start, offs + sg.end)
            i = int(np.argmin(lam))
            if lam[i] < best[0]:
                best = (lam[i], offs[i], k, u[i] * sg.length)
        for k, ac in arcs:
            lam = _ray_arcs(q0, v, offs + ac.center, ac.radius, ac.angle0, ac.angle1)
            i = int(np.argmin(lam))
            if lam[i] < best[0]:
                qq = q0 + lam[i] * v - offs[i] - ac.center
                ang = math.atan2(qq[1], qq[0]) % (2 * math.pi)
                if ac.angle1 >= 2 * math.pi - 1e-12 and ac.angle0 > 0 and ang < ac.angle0 - 1e-9:
                    ang += 2 * math.pi
                if ac.angle0 == 0.0 and ang > ac.angle1 + 1e-9:
                    ang -= 2 * math.pi
                best = (lam[i], offs[i], k, ac.radius * (ang - ac.angle0))
        lam, off, k, u = best
        # a hit closer than the box half-width cannot be beaten by a farther cell
        if lam < box - 1.0:
            s1 = float(b.cum_len[k] + u) % b.total_len
            return (cell[0] + int(off[0]), cell[1] + int(off[1])), s1, float(lam)
        if box > max_len:
            raise RuntimeError("no collision within max_len")
        box *= 2
