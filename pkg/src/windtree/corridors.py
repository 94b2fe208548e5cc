"""Corridor structure of the periodic wind-tree table.

A corridor is an open strip free of scatterers.  Type I corridors touch the
scatterers only at (rounded) vertices; type II corridors carry whole flat
sides in their boundary.

Two routes to a width are provided.  The closed forms per corridor family
(:func:`axis_corridors`, :func:`oblique_type2`, :func:`oblique_type1`) follow
the published case formulas.  :func:`exact_width` is the projection argument:
lattice points project onto every multiple of ``1/sqrt(p^2+q^2)`` along the
normal of a reduced direction ``(p, q)``, so the free gap is that spacing minus
twice the support function of the scatterer.  Enumeration uses the projection
route.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from .geometry import ModelParams, TrappingConfiguration, validate_params

__all__ = [
    "CorridorType",
    "Regime",
    "CorridorSpec",
    "DegenerateDirection",
    "axis_corridors",
    "oblique_type2",
    "oblique_type1",
    "exact_width",
    "enumerate_corridors",
    "type1_suppression_sup",
    "lemma3_L0",
    "classify_regime",
    "corridor_widths",
    "L_MIN",
]

# flights shorter than this are never assigned to a corridor
L_MIN = 5.0
TAN_MATCH_TOL = 1e-12


class CorridorType(enum.Enum):
    TYPE_I = "I"
    TYPE_II = "II"


class Regime(enum.Enum):
    FINITE_HORIZON = "FiniteHorizon"
    INFINITE_TYPE_I_ONLY = "InfiniteTypeIOnly"
    INFINITE_WITH_TYPE_II = "InfiniteWithTypeII"


class DegenerateDirection(ValueError):
    pass


@dataclass(frozen=True)
class CorridorSpec:
    direction: Tuple[int, int]
    ctype: CorridorType
    width_math: float
    r: float

    @property
    def width_eff(self) -> float:
        return self.width_math - 2.0 * self.r

    @property
    def is_open(self) -> bool:
        return self.width_eff > 0.0

    @property
    def label(self) -> str:
        return direction_label(self.direction)

    def as_dict(self) -> dict:
        return {
            "direction": list(self.direction),
            "label": self.label,
            "type": self.ctype.value,
            "width_math": self.width_math,
            "width_eff": self.width_eff,
            "open": self.is_open,
        }


def _normalize(p: int, q: int) -> Tuple[int, int]:
    g = math.gcd(abs(p), abs(q))
    p, q = p // g, q // g
    if p < 0 or (p == 0 and q < 0):
        p, q = -p, -q
    return p, q


def _check(p: ModelParams) -> None:
    # widths are pure geometry; overlapping grown scatterers only close corridors
    validate_params(p).raise_for_errors(ignore=(TrappingConfiguration,))


def direction_label(d: Tuple[int, int]) -> str:
    return {
        (1, 0): "Horizontal",
        (0, 1): "Vertical",
        (1, 1): "ObliquePlus",
        (1, -1): "ObliqueMinus",
    }.get(d, f"ObliqueOther({d[0]},{d[1]})")


def _tan_theta(p: ModelParams) -> Optional[Fraction]:
    return p.theta_tan


def _tan_matches(p: ModelParams, m: int, n: int) -> bool:
    if p.theta_tan is not None:
        return p.theta_tan == Fraction(m, n)
    return abs(math.tan(p.theta) - m / n) <= TAN_MATCH_TOL


def _sin_cos(p: ModelParams) -> Tuple[float, float]:
    # from the rational tangent when known, so that tan = 1 gives sin == cos exactly
    if p.theta_tan is not None:
        m, n = p.theta_tan.numerator, p.theta_tan.denominator
        h = math.hypot(m, n)
        return m / h, n / h
    return math.sin(p.theta), math.cos(p.theta)


def axis_corridors(p: ModelParams) -> List[CorridorSpec]:
    """Horizontal and vertical corridors (both type I)."""
    _check(p)
    if p.is_windtree:
        st, ct = _sin_cos(p)
        dh = 1.0 - 2.0 * p.a * ct
        dv = 1.0 - 2.0 * p.a * st
    else:
        dh = dv = 1.0 - 2.0 * p.disk_radius
    return [
        CorridorSpec((1, 0), CorridorType.TYPE_I, dh, p.r),
        CorridorSpec((0, 1), CorridorType.TYPE_I, dv, p.r),
    ]


def _lemma1_width(a: float, m: int, n: int) -> float:
    k = -(-n // m)
    return (m + n - k * m) / math.hypot(m, n) - 2.0 * m * n * a / (m * m + n * n)


def _lemma1_width_trig(a: float, theta: float, m: int, n: int) -> float:
    k = -(-n // m)
    s, c = math.sin(theta), math.cos(theta)
    return s + c - k * s - a * math.sin(2 * theta)


def oblique_type2(p: ModelParams, m: int, n: int) -> Optional[Tuple[CorridorSpec, CorridorSpec]]:
    """Type II corridors parallel to the rhombus sides when ``tan(theta) = m/n``.

    Returns the pair of mirror-image corridors (directions ``(m, n)`` and
    ``(m, -n)``) or ``None`` when ``tan(theta) != m/n`` or the width closes.
    """
    if not (0 < m <= n) or math.gcd(m, n) != 1:
        raise ValueError(f"need reduced 0 < m <= n, got ({m}, {n})")
    if not p.is_windtree or not _tan_matches(p, m, n):
        return None
    bound = (m + n - (-(-n // m)) * m) * math.hypot(m, n) / (2.0 * m * n)
    if not p.a < bound:
        return None
    w = _lemma1_width(p.a, m, n)
    return (
        CorridorSpec(_normalize(m, n), CorridorType.TYPE_II, w, p.r),
        CorridorSpec(_normalize(m, -n), CorridorType.TYPE_II, w, p.r),
    )


def oblique_type1(p: ModelParams, m: int, n: int, sign: int = 1) -> Optional[CorridorSpec]:
    """Type I oblique corridor with ``tan(alpha) = sign*m/n``.

    ``alpha`` is measured from the positive y-axis, so the corridor direction
    is ``(sign*m, n)``.  The width is the case formula selected by comparing
    ``m/n`` with ``tan(theta)`` and with 1.
    """
    if m <= 0 or n <= 0 or math.gcd(m, n) != 1:
        raise ValueError(f"need reduced positive (m, n), got ({m}, {n})")
    if not p.is_windtree:
        raise ValueError("closed-form oblique widths apply to rhombus scatterers")
    t = m / n
    tan_th = float(p.theta_tan) if p.theta_tan is not None else math.tan(p.theta)
    if (p.theta_tan is not None and Fraction(m, n) == p.theta_tan) or abs(t - tan_th) <= TAN_MATCH_TOL:
        raise DegenerateDirection(f"tan(alpha)={m}/{n} coincides with tan(theta)")
    a, st, ct = p.a, math.sin(p.theta), math.cos(p.theta)
    norm = math.hypot(m, n)
    if t < tan_th:
        w = (n + m - m * (-(-n // m)) - 2 * a * n * st) / norm
    elif t <= 1.0:
        w = (n + m - m * (-(-n // m)) - 2 * a * m * ct) / norm
    else:
        w = (n + m - n * (-(-m // n)) - 2 * a * m * ct) / norm
    if w <= 0.0:
        return None
    return CorridorSpec(_normalize(sign * m, n), CorridorType.TYPE_I, w, p.r)


def support(p: ModelParams, nx: float, ny: float) -> float:
    """Support function of the ungrown scatterer in the unit direction ``n``."""
    if p.is_windtree:
        return max(abs(nx) * p.a * math.sin(p.theta), abs(ny) * p.a * math.cos(p.theta))
    return p.disk_radius


def exact_width(p: ModelParams, direction: Tuple[int, int]) -> float:
    """Point-particle corridor width in a lattice direction (may be negative)."""
    d0, d1 = _normalize(*direction)
    norm = math.hypot(d0, d1)
    return 1.0 / norm - 2.0 * support(p, d1 / norm, -d0 / norm)


def _is_side_direction(p: ModelParams, d: Tuple[int, int]) -> bool:
    if not p.is_windtree:
        return False
    if p.theta_tan is not None:
        m, n = p.theta_tan.numerator, p.theta_tan.denominator
        return d in (_normalize(m, n), _normalize(m, -n))
    ang = math.atan2(abs(d[0]), abs(d[1]))
    return abs(math.tan(ang) - math.tan(p.theta)) <= TAN_MATCH_TOL and d[1] != 0


def _sort_key(c: CorridorSpec):
    p, q = c.direction
    return (-c.width_eff, abs(p) + abs(q), p, q)


def enumerate_corridors(p: ModelParams, max_denom: int = 64) -> List[CorridorSpec]:
    """All open corridors whose reduced direction has components <= ``max_denom``."""
    if max_denom < 1:
        raise ValueError("max_denom must be >= 1")
    _check(p)
    found = []
    for q in range(-max_denom, max_denom + 1):
        for pp in range(0, max_denom + 1):
            if pp == 0 and q <= 0:
                continue
            if math.gcd(pp, abs(q)) != 1:
                continue
            d = (pp, q)
            w = exact_width(p, d)
            if w - 2.0 * p.r <= 0.0:
                continue
            ctype = CorridorType.TYPE_II if _is_side_direction(p, d) else CorridorType.TYPE_I
            found.append(CorridorSpec(d, ctype, w, p.r))
    found.sort(key=_sort_key)
    return found


def type1_suppression_sup(max_denom: int) -> float:
    """``max (n + m - m*ceil(n/m)) / (sqrt(2) n)`` over reduced ``2 <= m < n <= max_denom``.

    Above this side length no type I oblique corridor survives at theta = pi/4
    under the case formulas; the supremum over all ``n`` is ``sqrt(2)/4`` and
    is approached along ``(m, n) = (k + 1, 2k + 1)``.  ``m = 1`` is left out:
    its numerator is always 1 and would reach ``sqrt(2)/4`` already at ``n = 2``.
    """
    best = 0.0
    for n in range(3, max_denom + 1):
        for m in range(2, n):
            if math.gcd(m, n) != 1:
                continue
            v = (n + m - m * (-(-n // m))) / (math.sqrt(2.0) * n)
            if v > best:
                best = v
    return best


def lemma3_L0(p: ModelParams, c: CorridorSpec) -> float:
    """Length beyond which axis-corridor flights end on tangent arcs.

    ``L_h = d_h / (r (1 - sin theta)) + 2`` and ``L_v = d_v / (r (1 - cos
    theta)) + 2`` with effective widths.
    """
    if c.ctype is not CorridorType.TYPE_I or c.direction not in ((1, 0), (0, 1)):
        raise NotImplementedError("L0 is only available for the axis type I corridors")
    if p.r <= 0:
        return math.inf
    if not p.is_windtree:
        raise NotImplementedError("L0 bound is stated for rhombus scatterers")
    if c.direction == (1, 0):
        return c.width_eff / (p.r * (1.0 - math.sin(p.theta))) + 2.0
    return c.width_eff / (p.r * (1.0 - math.cos(p.theta))) + 2.0


def classify_regime(p: ModelParams, max_denom: int = 64) -> Regime:
    cs = enumerate_corridors(p, max_denom)
    if not cs:
        return Regime.FINITE_HORIZON
    if any(c.ctype is CorridorType.TYPE_II for c in cs):
        return Regime.INFINITE_WITH_TYPE_II
    return Regime.INFINITE_TYPE_I_ONLY


def corridor_widths(p: ModelParams, l_min: float = L_MIN) -> np.ndarray:
    """Classification vector ``[L_min, slack, w_H, w_V, w_O+, w_O-]`` for the kernels.

    Widths are effective widths, zero for closed corridors.
    """
    slack = 2.0 * ((p.a if p.is_windtree else p.disk_radius) + p.r)
    ws = [max(exact_width(p, d) - 2.0 * p.r, 0.0) for d in ((1, 0), (0, 1), (1, 1), (1, -1))]
    return np.array([l_min, slack] + ws)
