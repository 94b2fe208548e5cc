"""Scatterer geometry for the physical periodic wind-tree model.

A hard disk of radius ``r`` moving among rhombus scatterers is equivalent to a
point particle moving among the rhombi grown by ``r`` (Minkowski sum with a
disk).  The grown scatterer ``S'`` has four flat sides of length ``a`` joined by
four circular arcs of radius ``r`` centred on the rhombus vertices.  Scatterers
sit on the integer lattice, one per unit cell.

The boundary is parameterised by arclength ``s`` starting at the rightmost
point and running counterclockwise.
"""
from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple, Union

import numpy as np

__all__ = [
    "WINDTREE",
    "DISK",
    "BoundaryKind",
    "ModelParams",
    "ParameterError",
    "TrappingConfiguration",
    "NonPositiveDimension",
    "ValidationReport",
    "Segment",
    "Arc",
    "ScattererBoundary",
    "validate_params",
    "build_scatterer",
    "boundary_point",
    "boundary_arclength",
    "geometry_summary",
    "kernel_params",
]

WINDTREE = "windtree"
DISK = "disk"

# junction / corner tolerance used throughout
CORNER_TOL = 1e-12


class BoundaryKind(enum.IntEnum):
    FLAT = 0
    DISPERSING = 1


class ParameterError(ValueError):
    """Base class for rejected model parameters."""


class TrappingConfiguration(ParameterError):
    pass


class NonPositiveDimension(ParameterError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Model parameters in lattice units.

    Attributes
    ----------
    theta : float
        Half of the acute rhombus angle, in radians.
    a : float
        Rhombus side length (before growth by ``r``).
    r : float
        Radius of the moving disk.
    kind : str
        ``"windtree"`` or ``"disk"`` (Lorentz-gas baseline).
    disk_radius : float
        Scatterer radius ``R`` for the ``"disk"`` kind.
    theta_tan : Fraction, optional
        Exact rational value of ``tan(theta)`` when known.  Corridor existence
        tests use it instead of matching ``tan(theta)`` numerically.
    """

    theta: float = math.pi / 4
    a: float = 0.0
    r: float = 0.0
    kind: str = WINDTREE
    disk_radius: float = 0.0
    theta_tan: Optional[Fraction] = field(default=None, compare=False)

    @classmethod
    def windtree(cls, a: float, r: float, theta: Union[float, None] = None,
                 theta_tan: Union[Fraction, str, Tuple[int, int], None] = None) -> "ModelParams":
        """Construct wind-tree parameters from ``theta`` or a rational tangent.

        ``theta_tan`` may be a :class:`~fractions.Fraction`, a string ``"m/n"``
        or a tuple ``(m, n)``.
        """
        if theta_tan is not None:
            if isinstance(theta_tan, tuple):
                theta_tan = Fraction(*theta_tan)
            theta_tan = Fraction(theta_tan)
            theta = math.atan2(theta_tan.numerator, theta_tan.denominator)
        if theta is None:
            raise ValueError("either theta or theta_tan is required")
        return cls(theta=float(theta), a=float(a), r=float(r), kind=WINDTREE, theta_tan=theta_tan)

    @classmethod
    def lorentz(cls, disk_radius: float, r: float) -> "ModelParams":
        return cls(theta=math.pi / 4, a=0.0, r=float(r), kind=DISK, disk_radius=float(disk_radius))

    @property
    def is_windtree(self) -> bool:
        return self.kind == WINDTREE

    @property
    def circumradius(self) -> float:
        """Radius of the smallest disk about the cell centre containing ``S'``."""
        if self.is_windtree:
            return self.a * max(math.sin(self.theta), math.cos(self.theta)) + self.r
        return self.disk_radius + self.r


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_params`.

    ``violations`` holds ``(error class, message)`` pairs; ``in_regime`` is the
    informational flag for the square-rhombus superdiffusive regime
    (theta = pi/4, sqrt2/4 <= a < sqrt2/2 - 2r, 0 < r < sqrt2/8).
    """

    violations: List[Tuple[type, str]]
    in_regime: bool

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_for_errors(self, ignore: Tuple[type, ...] = ()) -> None:
        v = [(c, m) for c, m in self.violations if not issubclass(c, ignore)]
        if v:
            raise v[0][0]("; ".join(m for _, m in v))


def in_square_regime(p: ModelParams, tol: float = 1e-12) -> bool:
    if not p.is_windtree:
        return False
    s2 = math.sqrt(2.0)
    return (
        abs(p.theta - math.pi / 4) <= tol
        and 0.0 < p.r < s2 / 8
        and s2 / 4 - tol <= p.a < s2 / 2 - 2 * p.r
    )


def validate_params(p: ModelParams) -> ValidationReport:
    v: List[Tuple[type, str]] = []
    if p.r < 0:
        v.append((NonPositiveDimension, f"particle radius r={p.r} must be >= 0"))
    if p.is_windtree:
        if not 0.0 < p.theta <= math.pi / 4 + 1e-15:
            v.append((ParameterError, f"theta={p.theta} must lie in (0, pi/4]"))
        if p.a <= 0:
            v.append((NonPositiveDimension, f"side a={p.a} must be > 0"))
        hx = p.a * math.sin(p.theta) + p.r
        hy = p.a * math.cos(p.theta) + p.r
        if hx > 0.5 or hy > 0.5:
            v.append((TrappingConfiguration,
                      f"grown scatterers overlap: a*sin(theta)+r={hx:.6g}, a*cos(theta)+r={hy:.6g} (limit 0.5)"))
    elif p.kind == DISK:
        if p.disk_radius <= 0:
            v.append((NonPositiveDimension, f"disk radius R={p.disk_radius} must be > 0"))
        if p.disk_radius + p.r >= 0.5:
            v.append((TrappingConfiguration, f"R+r={p.disk_radius + p.r:.6g} must be < 0.5"))
    else:
        v.append((ParameterError, f"unknown scatterer kind {p.kind!r}"))
    return ValidationReport(violations=v, in_regime=in_square_regime(p))


@dataclass(frozen=True)
class Segment:
    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray
    length: float
    kind = BoundaryKind.FLAT

    def at(self, u: float):
        tangent = (self.end - self.start) / self.length if self.length > 0 else np.zeros(2)
        return self.start + u * tangent, self.normal


@dataclass(frozen=True)
class Arc:
    """Convex circular arc; ``angle0 < angle1`` are outward-normal angles."""

    center: np.ndarray
    radius: float
    angle0: float
    angle1: float
    kind = BoundaryKind.DISPERSING

    @property
    def length(self) -> float:
        return self.radius * (self.angle1 - self.angle0)

    def at(self, u: float):
        ang = self.angle0 + (u / self.radius if self.radius > 0 else 0.0)
        n = np.array([math.cos(ang), math.sin(ang)])
        return self.center + self.radius * n, n


Component = Union[Segment, Arc]


@dataclass(frozen=True)
class ScattererBoundary:
    """Closed boundary of the grown scatterer centred at the origin."""

    params: ModelParams
    components: Tuple[Component, ...]
    cum_len: np.ndarray  # start arclength of each component, plus total at the end

    @property
    def total_len(self) -> float:
        return float(self.cum_len[-1])

    def component_at(self, s: float) -> int:
        k = bisect_right(self.cum_len, s) - 1
        return min(max(k, 0), len(self.components) - 1)


def _rhombus_vertices(a: float, theta: float) -> np.ndarray:
    """Right, top, left, bottom vertices (counterclockwise)."""
    sx, cy = a * math.sin(theta), a * math.cos(theta)
    return np.array([[sx, 0.0], [0.0, cy], [-sx, 0.0], [0.0, -cy]])


def build_scatterer(p: ModelParams) -> ScattererBoundary:
    validate_params(p).raise_for_errors()
    if not p.is_windtree:
        R = p.disk_radius + p.r
        comps: Tuple[Component, ...] = (Arc(np.zeros(2), R, 0.0, 2 * math.pi),)
        return ScattererBoundary(p, comps, np.array([0.0, 2 * math.pi * R]))

    th, a, r = p.theta, p.a, p.r
    V = _rhombus_vertices(a, th)
    # outward normal angle of the side leaving vertex k counterclockwise
    side_angle = [th, math.pi - th, math.pi + th, 2 * math.pi - th]
    comps_l: List[Component] = [Arc(V[0], r, 0.0, th)]
    prev = th
    for k in range(4):
        ang = side_angle[k]
        if k > 0:
            comps_l.append(Arc(V[k], r, prev, ang))
        n = np.array([math.cos(ang), math.sin(ang)])
        comps_l.append(Segment(V[k] + r * n, V[(k + 1) % 4] + r * n, n, a))
        prev = ang
    comps_l.append(Arc(V[0], r, prev, 2 * math.pi))
    lengths = [c.length for c in comps_l]
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    # exact closed form for the total removes summation round-off
    cum[-1] = 4 * a + 2 * math.pi * r
    return ScattererBoundary(p, tuple(comps_l), cum)


def boundary_point(b: ScattererBoundary, s: float):
    """Point, outward unit normal and :class:`BoundaryKind` at arclength ``s``."""
    if not 0.0 <= s < b.total_len:
        raise ValueError(f"arclength s={s} outside [0, {b.total_len})")
    k = b.component_at(s)
    c = b.components[k]
    u = s - b.cum_len[k]
    pt, n = c.at(u)
    return pt, n, c.kind


def boundary_arclength(b: ScattererBoundary, point) -> float:
    """Inverse of :func:`boundary_point` for a point on (or very near) ``∂S'``."""
    q = np.asarray(point, dtype=float)
    best = (math.inf, 0.0)
    for k, c in enumerate(b.components):
        if isinstance(c, Segment):
            t = (c.end - c.start) / c.length
            u = min(max(float(np.dot(q - c.start, t)), 0.0), c.length)
            dist = float(np.linalg.norm(c.start + u * t - q))
        else:
            d = q - c.center
            ang = math.atan2(d[1], d[0])
            if c.angle1 > 2 * math.pi - 1e-15 and ang < 0:
                ang += 2 * math.pi
            elif ang < c.angle0 - math.pi:
                ang += 2 * math.pi
            ang = min(max(ang, c.angle0), c.angle1)
            u = c.radius * (ang - c.angle0)
            on_arc = c.center + c.radius * np.array([math.cos(ang), math.sin(ang)])
            dist = float(np.linalg.norm(on_arc - q))
        if dist < best[0] - 1e-15:
            best = (dist, b.cum_len[k] + u)
    s = best[1]
    return 0.0 if s >= b.total_len else float(s)


def geometry_summary(p: ModelParams) -> dict:
    """Perimeter, area of ``S'`` and the mean-free-path prediction.

    The mean free path of the billiard map is ``pi * (free area) / perimeter``
    for a unit cell of area one.
    """
    validate_params(p).raise_for_errors()
    if p.is_windtree:
        perimeter = 4 * p.a + 2 * math.pi * p.r
        area = p.a ** 2 * math.sin(2 * p.theta) + 4 * p.a * p.r + math.pi * p.r ** 2
    else:
        R = p.disk_radius + p.r
        perimeter = 2 * math.pi * R
        area = math.pi * R ** 2
    return {
        "perimeter": perimeter,
        "area": area,
        "mean_free_path_prediction": math.pi * (1.0 - area) / perimeter,
    }


def kernel_params(p: ModelParams) -> np.ndarray:
    """Flat float64 parameter vector consumed by the compiled kernels.

    Layout: ``[kind, sin(theta), cos(theta), a, r, R, total_len, theta, rho]``
    with ``kind`` 0 for wind-tree and 1 for disk, ``R`` the grown disk radius
    and ``rho`` the circumradius of ``S'`` plus a small margin.
    """
    validate_params(p).raise_for_errors()
    rho = p.circumradius + 1e-9
    if p.is_windtree:
        total = 4 * p.a + 2 * math.pi * p.r
        return np.array([0.0, math.sin(p.theta), math.cos(p.theta), p.a, p.r, 0.0, total, p.theta, rho])
    R = p.disk_radius + p.r
    return np.array([1.0, 0.0, 1.0, 0.0, p.r, R, 2 * math.pi * R, 0.0, rho])
