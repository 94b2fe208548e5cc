"""Billiard map, free flights and trajectories on the unfolded lattice.

The heavy lifting happens in :mod:`windtree._engine`; this module wraps it in
small dataclasses and provides the counter-based random streams that make every
Monte Carlo result a pure function of ``(seed, trajectory index)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import _engine as eng
from .corridors import corridor_widths
from .geometry import (
    BoundaryKind,
    ModelParams,
    ScattererBoundary,
    build_scatterer,
    kernel_params,
)

__all__ = [
    "CorridorClass",
    "PhasePoint",
    "FlightRecord",
    "Trajectory",
    "EscapedMaxLen",
    "CornerHit",
    "GrazingImpact",
    "Billiard",
    "liouville_uniforms",
    "sample_liouville",
    "reflect",
    "next_collision",
    "billiard_map",
    "inverse_map",
    "trace",
    "DEFAULT_MAX_LEN",
]

DEFAULT_MAX_LEN = 1e4


class CorridorClass(enum.IntEnum):
    NONE = 0
    HORIZONTAL = 1
    VERTICAL = 2
    OBLIQUE_PLUS = 3
    OBLIQUE_MINUS = 4

    @property
    def label(self) -> str:
        return ("None", "Horizontal", "Vertical", "ObliquePlus", "ObliqueMinus")[self]


class EscapedMaxLen(RuntimeError):
    """A free flight exceeded ``max_len``; the flight is censored."""

    def __init__(self, length: float):
        super().__init__(f"free flight exceeded max_len (travelled {length:.6g})")
        self.length = length


class CornerHit(RuntimeError):
    """Collision at a sharp corner of an ungrown (r = 0) rhombus."""


class GrazingImpact(ValueError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    """Outgoing state just after a reflection.

    ``cell`` is the lattice cell of the scatterer, ``s`` the arclength on its
    boundary and ``phi`` the signed angle from the outward normal to the
    velocity.
    """

    cell: Tuple[int, int]
    s: float
    phi: float


@dataclass(frozen=True)
class FlightRecord:
    displacement: np.ndarray
    length: float
    start_kind: BoundaryKind
    end_kind: BoundaryKind
    corridor_class: CorridorClass


@dataclass
class Trajectory:
    """Collision sequence of one orbit.

    Row ``k`` of the state arrays is collision ``k`` (row 0 is the start).
    Positions are kept as integer cell plus offset from the cell centre.
    ``flight_class[k]`` refers to the flight ending at collision ``k``.
    """

    cells: np.ndarray
    local: np.ndarray
    t: np.ndarray
    s: np.ndarray
    phi: np.ndarray
    kind: np.ndarray
    flight_class: np.ndarray
    censored: bool = False

    @property
    def n(self) -> int:
        return len(self.t) - 1

    def positions(self) -> np.ndarray:
        return self.cells + self.local

    def displacement(self, k: int) -> np.ndarray:
        """``x_k - x_0`` without forming large absolute coordinates."""
        return (self.cells[k] - self.cells[0]) + (self.local[k] - self.local[0])

    def position_at(self, t: float) -> np.ndarray:
        """``x(t) - x_0`` by unit-speed interpolation along the current flight."""
        if not 0.0 <= t <= self.t[-1]:
            raise ValueError(f"t={t} outside recorded range [0, {self.t[-1]}]")
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        k = min(k, self.n - 1) if self.n > 0 else 0
        if self.n == 0:
            return np.zeros(2)
        a, b = self.displacement(k), self.displacement(k + 1)
        dt = self.t[k + 1] - self.t[k]
        frac = (t - self.t[k]) / dt if dt > 0 else 0.0
        return a + frac * (b - a)


def liouville_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms for trajectories ``start .. start+count-1``, shape ``(count, 4)``.

    Row ``i`` depends only on ``(seed, start + i)``: it is one Philox block at
    that counter, so results do not depend on how an index range is split.
    """
    bg = np.random.Philox(key=int(seed) & (2**128 - 1), counter=int(start))
    return np.random.Generator(bg).random(4 * count).reshape(count, 4)


def sample_liouville(rng: np.random.Generator, boundary: ScattererBoundary, retries: int = 16) -> PhasePoint:
    """Draw ``(s, phi)`` from ``cos(phi) dphi ds / (2 |dS'|)`` in cell (0, 0)."""
    kp = kernel_params(boundary.params)
    for _ in range(retries):
        s, phi = eng.liouville_sample(kp, rng.random(), rng.random())
        if not eng.near_junction(kp, s):
            return PhasePoint((0, 0), float(s), float(phi))
    raise RuntimeError("could not draw a sample away from component junctions")


def reflect(v, n) -> np.ndarray:
    """Specular reflection of an incoming velocity ``v`` off a unit normal ``n``."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    d = float(v @ n)
    if abs(d) < 1e-12:
        raise GrazingImpact("velocity tangent to the boundary")
    return v - 2.0 * d * n


class Billiard:
    """Wind-tree (or disk) billiard with fixed parameters.

    Parameters
    ----------
    params : ModelParams
    max_len : float
        Flights longer than this are censored.
    l_min : float
        Minimal flight length for corridor classification.
    """

    def __init__(self, params: ModelParams, max_len: float = DEFAULT_MAX_LEN, l_min: float = 5.0):
        self.params = params
        self.boundary = build_scatterer(params)
        self.kp = kernel_params(params)
        self.cw = corridor_widths(params, l_min)
        self.max_len = float(max_len)

    @property
    def total_len(self) -> float:
        return self.boundary.total_len

    def outgoing(self, state: PhasePoint):
        """Point (relative to cell centre), velocity and kind of a state."""
        qx, qy, vx, vy, kind = eng.state_from(self.kp, state.s, state.phi)
        return np.array([qx, qy]), np.array([vx, vy]), BoundaryKind(kind)

    def next_collision(self, state: PhasePoint) -> Tuple[PhasePoint, FlightRecord]:
        q, v, kind0 = self.outgoing(state)
        st, ci, cj, qx, qy, wx, wy, lam, kind, s1, phi1, cls = eng.step(
            self.kp, self.cw, state.cell[0], state.cell[1], q[0], q[1], v[0], v[1], self.max_len)
        if st == eng.ESCAPED:
            raise EscapedMaxLen(lam)
        if st == eng.CORNER:
            raise CornerHit(f"corner hit in cell ({ci}, {cj})")
        disp = np.array([(ci - state.cell[0]) + qx - q[0], (cj - state.cell[1]) + qy - q[1]])
        hit = PhasePoint((int(ci), int(cj)), float(s1), float(phi1))
        flight = FlightRecord(disp, float(lam), kind0, BoundaryKind(kind), CorridorClass(cls))
        return hit, flight

    def map(self, state: PhasePoint) -> PhasePoint:
        return self.next_collision(state)[0]

    def inverse(self, state: PhasePoint) -> PhasePoint:
        """Preimage under the map, by time reversal ``(s, phi) -> (s, -phi)``."""
        back = self.map(PhasePoint(state.cell, state.s, -state.phi))
        return PhasePoint(back.cell, back.s, -back.phi)

    def trace(self, start: PhasePoint, n_collisions: Optional[int] = None,
              t_max: Optional[float] = None, chunk: int = 65536) -> Trajectory:
        """Iterate the map from ``start``.

        Exactly one of ``n_collisions`` and ``t_max`` must be given; with
        ``t_max`` the orbit stops at the first collision at or after ``t_max``.
        A censored flight ends the trajectory with ``censored=True``.
        """
        if (n_collisions is None) == (t_max is None):
            raise ValueError("give exactly one of n_collisions and t_max")
        parts = []
        cell = np.array(start.cell, dtype=np.int64)
        s, phi, t0 = start.s, start.phi, 0.0
        px, py, vx, vy, kind0 = eng.state_from(self.kp, s, phi)
        done = 0
        censored = False
        while True:
            want = chunk if n_collisions is None else min(chunk, n_collisions - done)
            if want <= 0 and parts:
                break
            st, nd, ci, cj, qx, qy, ta, sa, pa, ka, cla, _, _, end = eng.run_orbit_from(
                self.kp, self.cw, s, phi, px, py, vx, vy, kind0, max(want, 0), self.max_len)
            sl = slice(0 if not parts else 1, nd + 1)
            cells = np.stack([ci[sl], cj[sl]], axis=1) + cell
            parts.append((cells, np.stack([qx[sl], qy[sl]], axis=1), ta[sl] + t0,
                          sa[sl], pa[sl], ka[sl], cla[sl]))
            done += nd
            if st != eng.OK:
                censored = True
                break
            cell = cell + np.array([ci[nd], cj[nd]])
            s, phi, t0 = sa[nd], pa[nd], t0 + ta[nd]
            px, py, vx, vy = end
            kind0 = ka[nd]
            if t_max is not None and t0 >= t_max:
                # trim to the first collision at or after t_max
                break
            if n_collisions is not None and done >= n_collisions:
                break
        cols = [np.concatenate(c) for c in zip(*parts)]
        traj = Trajectory(cols[0], cols[1], cols[2], cols[3], cols[4], cols[5], cols[6], censored)
        if t_max is not None and not censored:
            k = int(np.searchsorted(traj.t, t_max, side="left"))
            traj = Trajectory(*(c[: k + 1] for c in cols), censored=False)
        return traj


def next_collision(p: ModelParams, boundary: ScattererBoundary, state: PhasePoint,
                   max_len: float = DEFAULT_MAX_LEN):
    return Billiard(p, max_len).next_collision(state)


def billiard_map(p: ModelParams, state: PhasePoint, max_len: float = DEFAULT_MAX_LEN) -> PhasePoint:
    return Billiard(p, max_len).map(state)


def inverse_map(p: ModelParams, state: PhasePoint, max_len: float = DEFAULT_MAX_LEN) -> PhasePoint:
    return Billiard(p, max_len).inverse(state)


def trace(p: ModelParams, start: PhasePoint, n_collisions: Optional[int] = None,
          t_max: Optional[float] = None, max_len: float = DEFAULT_MAX_LEN) -> Trajectory:
    return Billiard(p, max_len).trace(start, n_collisions=n_collisions, t_max=t_max)
