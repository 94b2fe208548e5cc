import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windtree import ModelParams
from windtree.geometry import (
    Arc,
    BoundaryKind,
    NonPositiveDimension,
    Segment,
    TrappingConfiguration,
    boundary_arclength,
    boundary_point,
    build_scatterer,
    geometry_summary,
    validate_params,
)


def _polygon_area(b, n=200_000):
    # dense boundary polygon, shoelace; independent of the closed form
    s = np.linspace(0.0, b.total_len, n, endpoint=False)
    pts = np.array([boundary_point(b, x)[0] for x in s])
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


valid_windtree = st.builds(
    lambda th, fa, fr: (th, fa, fr),
    st.floats(0.05, math.pi / 4),
    st.floats(0.05, 0.95),
    st.floats(0.0, 0.95),
).map(lambda t: _make(*t))


def _make(theta, fa, fr):
    # a*max(cos, sin) + r <= 1/2 split by the two fractions
    amax = 0.5 / max(math.cos(theta), math.sin(theta))
    a = fa * amax
    r = fr * (0.5 - a * max(math.cos(theta), math.sin(theta)))
    return ModelParams.windtree(a=a, r=r, theta=theta)


def test_validate_examples():
    rep = validate_params(ModelParams.windtree(a=0.4, r=0.1, theta=math.pi / 4))
    assert rep.ok and rep.in_regime
    rep = validate_params(ModelParams.windtree(a=0.4, r=0.0, theta=math.pi / 4))
    assert rep.ok and not rep.in_regime
    rep = validate_params(ModelParams.windtree(a=0.8, r=0.1, theta=math.pi / 4))
    assert not rep.ok
    with pytest.raises(TrappingConfiguration):
        rep.raise_for_errors()


@pytest.mark.parametrize("a,r", [(0.0, 0.1), (-0.1, 0.1), (0.3, -0.01)])
def test_nonpositive_dimension(a, r):
    with pytest.raises(NonPositiveDimension):
        validate_params(ModelParams.windtree(a=a, r=r, theta=math.pi / 4)).raise_for_errors()


def test_lorentz_validation():
    assert validate_params(ModelParams.lorentz(0.3, 0.1)).ok
    assert not validate_params(ModelParams.lorentz(0.4, 0.1)).ok


def test_build_examples():
    b = build_scatterer(ModelParams.windtree(a=0.4, r=0.1, theta=math.pi / 4))
    assert b.total_len == pytest.approx(1.6 + 0.2 * math.pi, abs=1e-12)
    assert b.total_len == pytest.approx(2.22832, abs=1e-5)
    b0 = build_scatterer(ModelParams.windtree(a=0.4, r=0.0, theta=math.pi / 4))
    assert b0.total_len == pytest.approx(1.6, abs=1e-12)
    assert sum(isinstance(c, Segment) for c in b0.components) == 4
    bl = build_scatterer(ModelParams.lorentz(0.3, 0.1))
    assert len(bl.components) == 1 and isinstance(bl.components[0], Arc)
    assert bl.total_len == pytest.approx(0.8 * math.pi, abs=1e-12)


def test_arc_turning_angles():
    # the right-vertex arc is split at s = 0, so merge the first and last pieces
    th = 0.4
    b = build_scatterer(ModelParams.windtree(a=0.45, r=0.05, theta=th))
    arcs = [c.angle1 - c.angle0 for c in b.components if isinstance(c, Arc)]
    assert len(arcs) == 5
    turns = sorted([arcs[0] + arcs[-1]] + arcs[1:-1])
    expect = sorted([2 * th, 2 * th, math.pi - 2 * th, math.pi - 2 * th])
    assert np.allclose(turns, expect, atol=1e-12)
    assert sum(arcs) == pytest.approx(2 * math.pi, abs=1e-12)


def test_boundary_point_examples(canonical_params):
    b = build_scatterer(canonical_params)
    q, n, k = boundary_point(b, 0.0)
    assert np.allclose(q, [0.4 * math.sin(math.pi / 4) + 0.1, 0.0], atol=1e-12)
    assert q[0] == pytest.approx(0.38284, abs=1e-5)
    assert np.allclose(n, [1.0, 0.0], atol=1e-12)
    assert k == BoundaryKind.DISPERSING
    q, n, k = boundary_point(b, b.total_len / 2)
    assert np.allclose(q, [-0.38284271247461906, 0.0], atol=1e-12)
    assert np.allclose(n, [-1.0, 0.0], atol=1e-12)
    for k, c in enumerate(b.components):
        if isinstance(c, Segment):
            s = b.cum_len[k] + 0.3 * c.length
            q, n, kind = boundary_point(b, s)
            assert kind == BoundaryKind.FLAT
            assert np.allclose(n, c.normal, atol=1e-15)
    with pytest.raises(ValueError):
        boundary_point(b, b.total_len)
    with pytest.raises(ValueError):
        boundary_point(b, -1e-3)


@settings(max_examples=60, deadline=None)
@given(valid_windtree)
def test_perimeter_closure_symmetry(p):
    b = build_scatterer(p)
    assert abs(b.total_len - (4 * p.a + 2 * math.pi * p.r)) < 1e-12
    comps = b.components
    for k, c in enumerate(comps):
        nxt = comps[(k + 1) % len(comps)]
        q1, n1 = c.at(c.length)
        q0, n0 = nxt.at(0.0)
        assert np.linalg.norm(q1 - q0) < 1e-12
        if p.r > 0:
            assert np.linalg.norm(n1 - n0) < 1e-9
    rng = np.random.default_rng(0)
    for s in rng.uniform(0, b.total_len, 20):
        q, n, _ = boundary_point(b, s)
        q2, n2, _ = boundary_point(b, (s + b.total_len / 2) % b.total_len)
        assert np.linalg.norm(q + q2) < 1e-12
        assert np.linalg.norm(n + n2) < 1e-12


def test_s_roundtrip(canonical_params, tail_params):
    rng = np.random.default_rng(1)
    for p in (canonical_params, tail_params, ModelParams.lorentz(0.3, 0.1)):
        b = build_scatterer(p)
        s = rng.uniform(0, b.total_len, 10_000)
        back = np.array([boundary_arclength(b, boundary_point(b, x)[0]) for x in s])
        err = np.abs(back - s)
        err = np.minimum(err, b.total_len - err)
        assert err.max() < 1e-10


def test_lipschitz(tail_params):
    b = build_scatterer(tail_params)
    s = np.linspace(0, b.total_len, 5001, endpoint=False)
    pts = np.array([boundary_point(b, x)[0] for x in s])
    step = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert np.all(step <= np.diff(s) + 1e-12)


def test_summary_examples(tail_params):
    g = geometry_summary(tail_params)
    assert g["area"] == pytest.approx(0.125 + 0.0707106781 + 0.0078539816, abs=1e-9)
    assert g["mean_free_path_prediction"] == pytest.approx(1.44765, abs=1e-5)
    g0 = geometry_summary(ModelParams.windtree(a=0.4, r=0.0, theta=0.3))
    assert g0["area"] == pytest.approx(0.16 * math.sin(0.6), abs=1e-14)
    gl = geometry_summary(ModelParams.lorentz(0.3, 0.1))
    assert gl["area"] == pytest.approx(0.16 * math.pi, abs=1e-14)
    assert gl["mean_free_path_prediction"] == pytest.approx(math.pi * (1 - 0.16 * math.pi) / (0.8 * math.pi), abs=1e-14)


@pytest.mark.parametrize("p", [
    ModelParams.windtree(a=math.sqrt(2) / 4, r=0.05, theta=math.pi / 4),
    ModelParams.windtree(a=0.5, r=0.03, theta=0.5),
    ModelParams.lorentz(0.3, 0.1),
])
def test_area_against_polygon(p):
    b = build_scatterer(p)
    assert geometry_summary(p)["area"] == pytest.approx(_polygon_area(b), abs=1e-8)
