import math

import numpy as np
import pytest
from scipy import stats as sps

import windtree as w
from windtree import _engine as eng
from windtree.corridors import axis_corridors, lemma3_L0
from windtree.dynamics import (
    Billiard,
    BoundaryKind,
    CorridorClass,
    GrazingImpact,
    PhasePoint,
    liouville_uniforms,
    reflect,
    sample_liouville,
)
from windtree.geometry import _rhombus_vertices, boundary_arclength, build_scatterer, geometry_summary
from windtree.oracle import brute_force_hit

PRESETS = ("canonical", "tail", "lorentz")


def _random_states(p, n, seed):
    b = build_scatterer(p)
    rng = np.random.default_rng(seed)
    return [sample_liouville(rng, b) for _ in range(n)]


def _liouville_batch(bil, seed, n):
    u = liouville_uniforms(seed, 0, n)
    s = u[:, 0] * bil.total_len
    phi = np.arcsin(2 * u[:, 1] - 1)
    return s, phi


def test_reflect_examples():
    assert np.allclose(reflect([-1, 0], [1, 0]), [1, 0])
    h = math.sqrt(2) / 2
    assert np.allclose(reflect([-h, -h], [0, 1]), [-h, h])
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.uniform(0, 2 * math.pi, 2)
        v, n = np.array([math.cos(a), math.sin(a)]), np.array([math.cos(b), math.sin(b)])
        if v @ n > -1e-6:
            continue
        out = reflect(v, n)
        assert abs(np.linalg.norm(out) - 1) < 1e-15
        assert out @ n == pytest.approx(-(v @ n), abs=1e-15)
    with pytest.raises(GrazingImpact):
        reflect([0, 1], [1, 0])


def test_liouville_sample_examples(canonical_params):
    kp = Billiard(canonical_params).kp
    assert eng.liouville_sample(kp, 0.3, 0.5)[1] == 0.0
    assert eng.liouville_sample(kp, 0.3, 1 - 1e-16)[1] == pytest.approx(math.pi / 2, abs=1e-7)
    u = liouville_uniforms(5, 0, 1_000_000)
    phi = np.array([eng.liouville_sample(kp, a, b)[1] for a, b, _, _ in u[:20]])
    assert np.all(np.abs(phi) < math.pi / 2)
    x = 2 * u[:, 1] - 1  # sin(phi) of the sampler
    assert sps.kstest(x, "uniform", args=(-1, 2)).statistic < 0.0015


def test_uniforms_split_invariant():
    a = liouville_uniforms(7, 0, 1000)
    b = np.vstack([liouville_uniforms(7, 0, 300), liouville_uniforms(7, 300, 700)])
    assert np.array_equal(a, b)


def test_period_two_orbits(canonical_params):
    bil = Billiard(canonical_params)
    start = PhasePoint((0, 0), 0.0, 0.0)
    hit, fl = bil.next_collision(start)
    assert hit.cell == (1, 0)
    assert fl.length == pytest.approx(1 - 2 * (0.4 * math.sin(math.pi / 4) + 0.1), abs=1e-12)
    assert fl.length == pytest.approx(0.23431, abs=1e-5)
    assert hit.s == pytest.approx(bil.total_len / 2, abs=1e-10) and abs(hit.phi) < 1e-10
    back = bil.map(bil.map(start))
    assert back.cell == (0, 0)
    assert min(back.s, bil.total_len - back.s) < 1e-10 and abs(back.phi) < 1e-10
    top = boundary_arclength(bil.boundary, [0.0, 0.4 * math.cos(math.pi / 4) + 0.1])
    hit, fl = bil.next_collision(PhasePoint((0, 0), top, 0.0))
    assert hit.cell == (0, 1)
    assert fl.length == pytest.approx(0.23431, abs=1e-5)
    tr = bil.trace(start, n_collisions=100)
    steps = np.linalg.norm([tr.displacement(k) for k in range(101)], axis=1)
    assert np.all(np.isclose(steps, 0, atol=1e-9) | np.isclose(steps, fl.length, atol=1e-9))
    assert tr.t[100] == pytest.approx(100 * fl.length, rel=1e-12)


def test_trace_zero(canonical_params):
    tr = w.trace(canonical_params, PhasePoint((0, 0), 0.1, 0.2), n_collisions=0)
    assert tr.n == 0 and tr.t[0] == 0.0
    assert np.array_equal(tr.position_at(0.0), np.zeros(2))


@pytest.mark.parametrize("name", PRESETS)
def test_oracle_agreement(name):
    p = w.preset(name)
    bil = Billiard(p)
    for st in _random_states(p, 60, seed=11):
        hit, fl = bil.next_collision(st)
        cell, s, lam = brute_force_hit(p, (0, 0), st.s, st.phi)
        assert hit.cell == cell
        ds = abs(hit.s - s)
        assert min(ds, bil.total_len - ds) < 1e-9
        assert fl.length == pytest.approx(lam, abs=1e-9)


@pytest.mark.parametrize("name", PRESETS)
def test_reversibility(name):
    p = w.preset(name)
    bil = Billiard(p)
    s, phi = _liouville_batch(bil, 3, 10_000)
    st, ci, cj, s1, p1 = eng.map_batch(bil.kp, bil.cw, s, phi, 1e6)
    assert np.all(st == 0)
    st2, ci2, cj2, s2, p2 = eng.map_batch(bil.kp, bil.cw, s1, -p1, 1e6)
    assert np.all(ci2 == -ci) and np.all(cj2 == -cj)
    ds = np.abs(s2 - s)
    assert np.max(np.minimum(ds, bil.total_len - ds)) < 1e-9
    assert np.max(np.abs(-p2 - phi)) < 1e-9
    # scalar API agrees with the batch
    st0 = PhasePoint((0, 0), float(s[0]), float(phi[0]))
    back = bil.inverse(bil.map(st0))
    assert back.cell == (0, 0)
    assert back.s == pytest.approx(st0.s, abs=1e-9) and back.phi == pytest.approx(st0.phi, abs=1e-9)


@pytest.mark.parametrize("name", PRESETS)
def test_measure_preservation(name):
    bil = Billiard(w.preset(name))
    n = 200_000
    s, phi = _liouville_batch(bil, 9, n)
    st, _, _, s1, p1 = eng.map_batch(bil.kp, bil.cw, s, phi, 1e6)
    crit = 1.63 / math.sqrt(n)
    assert sps.kstest(s1 / bil.total_len, "uniform").statistic < crit
    assert sps.kstest(np.sin(p1), "uniform", args=(-1, 2)).statistic < crit


def test_ergodic_mean_free_path(tail_params):
    bil = Billiard(tail_params, 1e6)
    tr = bil.trace(PhasePoint((0, 0), 0.3, 0.4), n_collisions=1_000_000)
    eta = tr.t[-1] / tr.n
    assert eta == pytest.approx(geometry_summary(tail_params)["mean_free_path_prediction"], rel=0.01)


def test_unit_speed_and_non_penetration(tail_params):
    bil = Billiard(tail_params, 1e6)
    tr = bil.trace(PhasePoint((0, 0), 1.0, -0.3), n_collisions=2000)
    # every collision point sits on its scatterer; every flight is a chord of length t_k+1 - t_k
    for k in range(0, tr.n, 7):
        q, v, _ = bil.outgoing(PhasePoint(tuple(tr.cells[k]), tr.s[k], tr.phi[k]))
        assert abs(np.linalg.norm(v) - 1) < 1e-12
        assert np.allclose(q, tr.local[k], atol=1e-12)
        seg = tr.displacement(k + 1) - tr.displacement(k)
        assert np.linalg.norm(seg) == pytest.approx(tr.t[k + 1] - tr.t[k], abs=1e-9)
    # points along each flight keep distance >= r from every ungrown rhombus
    verts = _rhombus_vertices(tail_params.a, tail_params.theta)
    x0 = tr.cells[0] + tr.local[0]
    for k in range(0, tr.n, 5):
        for f in (0.01, 0.5, 0.99):
            x = x0 + (1 - f) * tr.displacement(k) + f * tr.displacement(k + 1)
            for c in np.floor(x) + np.array([[0, 0], [1, 0], [0, 1], [1, 1]]):
                assert _dist_to_polygon(x - c, verts) >= tail_params.r - 1e-10


def _dist_to_polygon(x, verts):
    def cross(u, v):
        return u[0] * v[1] - u[1] * v[0]

    inside = all(cross(verts[(i + 1) % 4] - verts[i], x - verts[i]) > 0 for i in range(4))
    if inside:
        return 0.0
    best = math.inf
    for i in range(4):
        a, b = verts[i], verts[(i + 1) % 4]
        u = np.clip((x - a) @ (b - a) / ((b - a) @ (b - a)), 0, 1)
        best = min(best, np.linalg.norm(x - a - u * (b - a)))
    return best


def test_position_at_interpolation(tail_params):
    bil = Billiard(tail_params, 1e6)
    tr = bil.trace(PhasePoint((0, 0), 0.7, 0.1), n_collisions=500)
    rng = np.random.default_rng(2)
    for t in rng.uniform(0, tr.t[-1], 300):
        n = int(np.searchsorted(tr.t, t, side="right")) - 1
        x = tr.position_at(t)
        r = np.linalg.norm(tr.displacement(n + 1) - tr.displacement(n))
        assert np.linalg.norm(x - tr.displacement(n)) <= r + 1e-12
        assert np.linalg.norm(x - tr.displacement(n)) == pytest.approx(t - tr.t[n], abs=1e-9)
    with pytest.raises(ValueError):
        tr.position_at(tr.t[-1] + 1)


def test_trace_t_max(tail_params):
    bil = Billiard(tail_params, 1e6)
    tr = bil.trace(PhasePoint((0, 0), 0.7, 0.1), t_max=300.0)
    assert tr.t[-1] >= 300.0 and tr.t[-2] < 300.0
    full = bil.trace(PhasePoint((0, 0), 0.7, 0.1), n_collisions=tr.n)
    assert np.array_equal(full.cells, tr.cells) and np.allclose(full.t, tr.t)


def test_trace_chunking_invariant(tail_params):
    bil = Billiard(tail_params, 1e6)
    a = bil.trace(PhasePoint((0, 0), 0.7, 0.1), n_collisions=1000)
    b = bil.trace(PhasePoint((0, 0), 0.7, 0.1), n_collisions=1000, chunk=77)
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.s, b.s) and np.array_equal(a.flight_class, b.flight_class)


def test_displacement_symmetric(tail_params):
    bil = Billiard(tail_params, 1e6)
    u = liouville_uniforms(21, 0, 1_000_000)
    st, dx, dy, L, *_ = eng.sample_flights(bil.kp, bil.cw, u, 1e6)
    ok = st == 0
    r = np.column_stack([dx[ok], dy[ok]])
    n = len(r)
    assert np.linalg.norm(r.mean(axis=0)) < 4 * np.linalg.norm(r.std(axis=0)) / math.sqrt(n)


@pytest.mark.parametrize("name", ["canonical", "tail"])
def test_lemma3_endpoints(name):
    p = w.preset(name)
    bil = Billiard(p, 1e6)
    u = liouville_uniforms(3, 0, 1_000_000)
    st, dx, dy, L, k0, k1, cl, s0, _, s1, _ = eng.sample_flights(bil.kp, bil.cw, u, 1e6)
    ok = st == 0
    eps = p.r * (math.pi / 2 - p.theta)
    for c, cid in zip(axis_corridors(p), (CorridorClass.HORIZONTAL, CorridorClass.VERTICAL)):
        L0 = lemma3_L0(p, c)
        sel = np.flatnonzero(ok & (cl == cid) & (L > L0))
        assert len(sel) > 50
        assert np.all(k0[sel] == BoundaryKind.DISPERSING) and np.all(k1[sel] == BoundaryKind.DISPERSING)
        tip = p.a * (math.cos(p.theta) if cid == CorridorClass.HORIZONTAL else math.sin(p.theta)) + p.r
        tp = np.array([[0, tip], [0, -tip]]) if cid == CorridorClass.HORIZONTAL else np.array([[tip, 0], [-tip, 0]])
        far = []
        for i in sel:
            q0 = np.array(eng.boundary_at(bil.kp, s0[i])[:2])
            q1 = np.array(eng.boundary_at(bil.kp, s1[i])[:2])
            d = max(np.min(np.linalg.norm(tp - q0, axis=1)), np.min(np.linalg.norm(tp - q1, axis=1)))
            assert d < eps
            far.append(d)
        far = np.array(far)
        near = far[L[sel] < 2 * L0]
        long = far[L[sel] > 10 * L0]
        if len(long):
            assert long.max() < near.max()


def test_censoring(lorentz_params):
    # a horizontal ray along the open axis corridor never hits anything
    bil = Billiard(lorentz_params, max_len=50.0)
    s = boundary_arclength(bil.boundary, [0.0, 0.4])
    with pytest.raises(w.dynamics.EscapedMaxLen):
        bil.next_collision(PhasePoint((0, 0), s, -math.pi / 2 + 1e-14 + 0.0))
