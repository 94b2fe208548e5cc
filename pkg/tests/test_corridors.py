import math
from fractions import Fraction

import numpy as np
import pytest

from windtree import ModelParams
from windtree.corridors import (
    CorridorType,
    DegenerateDirection,
    Regime,
    _lemma1_width,
    _lemma1_width_trig,
    axis_corridors,
    classify_regime,
    corridor_widths,
    enumerate_corridors,
    exact_width,
    lemma3_L0,
    oblique_type1,
    oblique_type2,
    type1_suppression_sup,
)
from windtree.geometry import _rhombus_vertices, boundary_point, build_scatterer

S2 = math.sqrt(2.0)


def projection_width(p, d, grown=False, n=4000):
    """Free gap between lattice rows of scatterers seen along direction ``d``.

    Brute force: project boundary samples (or rhombus vertices) on the unit
    normal; consecutive rows sit ``1/|d|`` apart.
    """
    d = np.asarray(d, float)
    nrm = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    if grown:
        b = build_scatterer(p)
        pts = np.array([boundary_point(b, s)[0] for s in np.linspace(0, b.total_len, n, endpoint=False)])
    elif p.is_windtree:
        pts = _rhombus_vertices(p.a, p.theta)
    else:
        ang = np.linspace(0, 2 * math.pi, n, endpoint=False)
        pts = p.disk_radius * np.column_stack([np.cos(ang), np.sin(ang)])
    proj = pts @ nrm
    return 1.0 / np.linalg.norm(d) - (proj.max() - proj.min())


def test_axis_examples():
    h, v = axis_corridors(ModelParams.windtree(a=S2 / 4, r=0.05, theta_tan="1/1"))
    assert h.width_math == pytest.approx(0.5, abs=1e-12) and v.width_math == pytest.approx(0.5, abs=1e-12)
    assert h.width_eff == pytest.approx(0.4, abs=1e-12) and h.is_open
    h, v = axis_corridors(ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1"))
    assert h.width_math == pytest.approx(0.43431, abs=1e-5)
    assert h.width_eff == pytest.approx(0.23431, abs=1e-5)
    assert h.width_math == v.width_math
    # overlapping (trapping) parameters still get a closed-form answer here
    h, _ = axis_corridors(ModelParams.windtree(a=0.4, r=0.25, theta_tan="1/1"))
    assert h.width_eff == pytest.approx(-0.06569, abs=1e-5)
    assert not h.is_open


def test_type2_examples():
    c1, c2 = oblique_type2(ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1"), 1, 1)
    assert c1.ctype is CorridorType.TYPE_II
    assert {c1.direction, c2.direction} == {(1, 1), (1, -1)}
    assert c1.width_math == pytest.approx(1 / S2 - 0.4, abs=1e-12)
    assert c1.width_eff == pytest.approx(0.10711, abs=1e-5)
    c, _ = oblique_type2(ModelParams.windtree(a=S2 / 4, r=0.05, theta_tan="1/1"), 1, 1)
    assert c.width_math == pytest.approx(S2 / 4, abs=1e-12)
    assert c.width_eff == pytest.approx(0.25355, abs=1e-5)
    p = ModelParams.windtree(a=0.3, r=0.0, theta=math.pi / 6)
    for n in range(1, 30):
        for m in range(1, n + 1):
            if math.gcd(m, n) == 1:
                assert oblique_type2(p, m, n) is None


@pytest.mark.parametrize("m,n", [(1, 1), (1, 2), (2, 3), (1, 3), (3, 5), (4, 7)])
def test_type2_closed_forms_and_iff(m, n):
    th = math.atan2(m, n)
    for a in np.linspace(0.01, 0.6, 25):
        assert _lemma1_width(a, m, n) == pytest.approx(_lemma1_width_trig(a, th, m, n), abs=1e-12)
        p = ModelParams.windtree(a=a, r=0.0, theta_tan=(m, n))
        got = oblique_type2(p, m, n)
        assert (got is not None) == (_lemma1_width(a, m, n) > 0)


@pytest.mark.parametrize("m,n", [(1, 1), (1, 2), (2, 3), (1, 3)])
def test_type2_matches_projection(m, n):
    # side directions are corridors along the rhombus edges
    for a in (0.1, 0.2, 0.3):
        p = ModelParams.windtree(a=a, r=0.0, theta_tan=(m, n))
        got = oblique_type2(p, m, n)
        if got is None:
            continue
        for c in got:
            assert c.width_math == pytest.approx(projection_width(p, c.direction), abs=1e-12)


def test_type1_case_formulas():
    p = ModelParams.windtree(a=0.3, r=0.0, theta_tan="1/1")
    # |tan alpha| = 1/2 is below tan(theta) = 1
    c = oblique_type1(p, 1, 2)
    assert c.width_math == pytest.approx((1 - 2 * 0.3 * 2 * math.sin(math.pi / 4)) / math.sqrt(5), abs=1e-12)
    assert c.width_math == pytest.approx(projection_width(p, c.direction), abs=1e-12)
    # |tan alpha| > 1 uses the ceil(m/n) numerator
    c = oblique_type1(p, 2, 1)
    assert c.width_math == pytest.approx((1 - 2 * 0.3 * 2 * math.cos(math.pi / 4)) / math.sqrt(5), abs=1e-12)
    # tan(theta) < |tan alpha| <= 1 needs tan(theta) < 1
    q = ModelParams.windtree(a=0.2, r=0.0, theta_tan="1/3")
    c = oblique_type1(q, 1, 2)
    st, ct = math.sin(q.theta), math.cos(q.theta)
    assert c.width_math == pytest.approx((1 - 2 * 0.2 * ct) / math.sqrt(5), abs=1e-12)
    assert c.direction == (1, 2)
    assert oblique_type1(q, 1, 2, sign=-1).direction == (1, -2)
    with pytest.raises(DegenerateDirection):
        oblique_type1(p, 1, 1)
    with pytest.raises(DegenerateDirection):
        oblique_type1(q, 1, 3)


def test_no_type1_above_threshold():
    for a in (S2 / 4, 0.4, 0.45):
        p = ModelParams.windtree(a=a, r=0.0, theta_tan="1/1")
        for n in range(1, 201):
            for m in range(1, 201):
                if math.gcd(m, n) != 1 or m == n:
                    continue
                assert oblique_type1(p, m, n) is None


@pytest.mark.parametrize("p", [
    ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1"),
    ModelParams.windtree(a=0.2, r=0.02, theta_tan="1/2"),
    ModelParams.windtree(a=0.15, r=0.01, theta=0.3),
    ModelParams.lorentz(0.2, 0.05),
])
def test_exact_width_matches_projection(p):
    for d in [(1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, -1), (2, 3), (3, -5)]:
        w = exact_width(p, d)
        tol = 1e-12 if p.is_windtree else 2e-6
        assert w == pytest.approx(projection_width(p, d), abs=tol)
        # the grown boundary shrinks every corridor by exactly 2r
        assert w - 2 * p.r == pytest.approx(projection_width(p, d, grown=True), abs=2e-6)


def test_width_eff_monotone_in_r():
    for r in (0.0, 0.01, 0.05, 0.1):
        for c in axis_corridors(ModelParams.windtree(a=0.3, r=r, theta=0.6)):
            assert c.width_eff == pytest.approx(c.width_math - 2 * r, abs=0)
    ws = [axis_corridors(ModelParams.windtree(a=0.3, r=r, theta_tan="1/1"))[0].width_eff
          for r in (0.0, 0.05, 0.1)]
    assert np.allclose(np.diff(ws), -0.1, atol=1e-15)


def test_enumerate_examples():
    cs = enumerate_corridors(ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1"), 50)
    assert [c.direction for c in cs] == [(0, 1), (1, 0), (1, -1), (1, 1)] or \
        {c.direction for c in cs} == {(1, 0), (0, 1), (1, 1), (1, -1)}
    assert len(cs) == 4
    assert sum(c.ctype is CorridorType.TYPE_II for c in cs) == 2
    assert all(x.width_eff >= y.width_eff for x, y in zip(cs, cs[1:]))
    assert enumerate_corridors(ModelParams.windtree(a=0.4, r=0.25, theta_tan="1/1"), 50) == []
    cs = enumerate_corridors(ModelParams.lorentz(0.35, 0.1), 10)
    assert {c.direction for c in cs} == {(1, 0), (0, 1)}
    assert all(c.width_eff == pytest.approx(0.1, abs=1e-12) for c in cs)


def test_enumerate_brute_force():
    p = ModelParams.windtree(a=0.15, r=0.02, theta_tan="1/2")
    got = {c.direction for c in enumerate_corridors(p, 12)}
    want = set()
    for q in range(-12, 13):
        for pp in range(0, 13):
            if (pp, q) == (0, 0) or math.gcd(pp, abs(q)) != 1 or (pp == 0 and q < 0):
                continue
            if projection_width(p, (pp, q)) - 2 * p.r > 0:
                want.add((pp, q))
    assert got == want


def test_suppression_sup():
    assert type1_suppression_sup(3) == pytest.approx(1 / (3 * S2), abs=1e-12)
    assert type1_suppression_sup(7) == pytest.approx(3 / (7 * S2), abs=1e-12)
    assert type1_suppression_sup(200) == pytest.approx(0.35178, abs=1e-5)
    vals = [type1_suppression_sup(k) for k in range(3, 60)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))
    assert max(vals) < S2 / 4


def test_lemma3_L0():
    p = ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1")
    h, v = axis_corridors(p)
    assert lemma3_L0(p, h) == pytest.approx(0.23431 / (0.1 * (1 - S2 / 2)) + 2, abs=1e-3)
    assert lemma3_L0(p, h) == pytest.approx(10.0, abs=1e-3)
    q = ModelParams.windtree(a=S2 / 4, r=0.05, theta_tan="1/1")
    assert lemma3_L0(q, axis_corridors(q)[0]) == pytest.approx(29.31, abs=1e-2)
    z = ModelParams.windtree(a=0.4, r=0.0, theta_tan="1/1")
    assert lemma3_L0(z, axis_corridors(z)[0]) == math.inf
    with pytest.raises(NotImplementedError):
        lemma3_L0(p, oblique_type2(p, 1, 1)[0])


def test_classify_regime():
    assert classify_regime(ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1")) is Regime.INFINITE_WITH_TYPE_II
    assert classify_regime(ModelParams.windtree(a=0.4, r=0.25, theta_tan="1/1")) is Regime.FINITE_HORIZON
    assert classify_regime(ModelParams.lorentz(0.3, 0.1)) is Regime.INFINITE_TYPE_I_ONLY


def test_corridor_widths_vector():
    p = ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1")
    cw = corridor_widths(p, 5.0)
    assert cw[0] == 5.0
    assert np.allclose(cw[2:], [0.23431458, 0.23431458, 0.10710678, 0.10710678], atol=1e-8)
    cw = corridor_widths(ModelParams.lorentz(0.3, 0.1))
    assert cw[4] == 0.0 and cw[5] == 0.0
