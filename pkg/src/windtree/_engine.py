"""Compiled billiard kernels.

Every scatterer lies inside the unit square centred on its lattice point
(guaranteed by parameter validation), so a ray is traced by marching through
those squares in order and testing one scatterer per square; the first square
that yields a hit holds the nearest collision.

Kernel parameter vector layout is documented in
:func:`windtree.geometry.kernel_params`.  States are carried as an integer cell
plus a point relative to that cell's centre, which keeps positions exact to
rounding at any distance from the origin.
"""
import math

import numpy as np
from numba import njit

INF = math.inf
EPS_HIT = 1e-12      # minimal admissible flight length
TANGENCY_TOL = 1e-12  # discriminant / grazing threshold

# end-state codes
OK = 0
ESCAPED = 1   # flight longer than max_len
CORNER = 2    # hit within CORNER_TOL of a sharp corner (r = 0 only)

# corridor classes
CLS_NONE = 0
CLS_H = 1
CLS_V = 2
CLS_OP = 3
CLS_OM = 4

FLAT = 0
DISPERSING = 1


@njit(cache=True)
def _side_normal(k, st, ct):
    if k == 0:
        return ct, st
    elif k == 1:
        return -ct, st
    elif k == 2:
        return -ct, -st
    return ct, -st


@njit(cache=True)
def _vertex(k, a, st, ct):
    if k == 0:
        return a * st, 0.0
    elif k == 1:
        return 0.0, a * ct
    elif k == 2:
        return -a * st, 0.0
    return 0.0, -a * ct


@njit(cache=True)
def _flat_start(k, a, r, th):
    # arclength where side k begins; layout: arc(R, th) side0 arc(T) side1 arc(L) side2 arc(B) side3 arc(R)
    top = r * (math.pi - 2.0 * th)
    if k == 0:
        return r * th
    elif k == 1:
        return r * th + a + top
    elif k == 2:
        return r * th + 2.0 * a + top + 2.0 * r * th
    return r * th + 3.0 * a + 2.0 * top + 2.0 * r * th


@njit(cache=True)
def _chord_disc(dx, dy, vx, vy, b, rad):
    """``rad**2 - dist(centre, line)**2`` without cancellation for far rays."""
    mx = dx - b * vx
    my = dy - b * vy
    return rad * rad - (mx * mx + my * my)


@njit(cache=True)
def hit_scatterer(kp, px, py, vx, vy):
    """Nearest entry of the ray ``p + lam*v`` into the scatterer at the origin.

    Returns ``(lam, kind, s, qx, qy, nx, ny, corner)``; ``lam`` is ``inf`` on a
    miss.
    """
    best = INF
    bkind = -1
    bs = 0.0
    bqx = 0.0
    bqy = 0.0
    bnx = 0.0
    bny = 0.0
    corner = False
    r = kp[4]
    if kp[0] == 1.0:
        R = kp[5]
        b = px * vx + py * vy
        disc = _chord_disc(px, py, vx, vy, b, R)
        if disc > TANGENCY_TOL and b < 0.0:
            lam = -b - math.sqrt(disc)
            if lam > EPS_HIT:
                qx = px + lam * vx
                qy = py + lam * vy
                nn = math.hypot(qx, qy)
                nx = qx / nn
                ny = qy / nn
                qx = R * nx
                qy = R * ny
                ang = math.atan2(ny, nx)
                if ang < 0.0:
                    ang += 2.0 * math.pi
                s = R * ang
                if s >= kp[6]:
                    s -= kp[6]
                return lam, DISPERSING, s, qx, qy, nx, ny, False
        return INF, -1, 0.0, 0.0, 0.0, 0.0, 0.0, False

    st = kp[1]
    ct = kp[2]
    a = kp[3]
    th = kp[7]
    total = kp[6]
    h = a * st * ct + r
    for k in range(4):
        nx, ny = _side_normal(k, st, ct)
        dn = nx * vx + ny * vy
        if dn < -TANGENCY_TOL:
            lam = (h - (nx * px + ny * py)) / dn
            if EPS_HIT < lam < best:
                qx = px + lam * vx
                qy = py + lam * vy
                wx, wy = _vertex(k, a, st, ct)
                u = -ny * (qx - wx) + nx * (qy - wy)
                if -1e-13 <= u <= a + 1e-13:
                    if u < 0.0:
                        u = 0.0
                    elif u > a:
                        u = a
                    best = lam
                    bkind = FLAT
                    bs = _flat_start(k, a, r, th) + u
                    bqx = qx
                    bqy = qy
                    bnx = nx
                    bny = ny
                    corner = r == 0.0 and (u < 1e-12 or u > a - 1e-12)
    if r > 0.0:
        for k in range(4):
            wx, wy = _vertex(k, a, st, ct)
            dx = px - wx
            dy = py - wy
            b = dx * vx + dy * vy
            if b >= 0.0:
                continue
            disc = _chord_disc(dx, dy, vx, vy, b, r)
            if disc <= TANGENCY_TOL:
                continue
            lam = -b - math.sqrt(disc)
            if EPS_HIT < lam < best:
                qx = px + lam * vx
                qy = py + lam * vy
                nx = qx - wx
                ny = qy - wy
                nn = math.hypot(nx, ny)
                nx /= nn
                ny /= nn
                # snap onto the circle so that q and s agree
                qx = wx + r * nx
                qy = wy + r * ny
                ang = math.atan2(ny, nx)
                if k == 0:
                    if ang > th:
                        ang = th
                    elif ang < -th:
                        ang = -th
                    s = r * ang if ang >= 0.0 else total + r * ang
                else:
                    lo = 0.0
                    if k == 1:
                        lo = th
                    elif k == 2:
                        lo = math.pi - th
                        if ang < 0.0:
                            ang += 2.0 * math.pi
                    else:
                        lo = math.pi + th
                        if ang < 0.0:
                            ang += 2.0 * math.pi
                    hi = lo + (2.0 * th if k == 2 else math.pi - 2.0 * th)
                    if ang < lo:
                        ang = lo
                    elif ang > hi:
                        ang = hi
                    s = _flat_start(k - 1, a, r, th) + a + r * (ang - lo)
                if s >= total:
                    s -= total
                best = lam
                bkind = DISPERSING
                bs = s
                bqx = qx
                bqy = qy
                bnx = nx
                bny = ny
                corner = False
    return best, bkind, bs, bqx, bqy, bnx, bny, corner


@njit(cache=True)
def boundary_at(kp, s):
    """``(qx, qy, nx, ny, kind)`` at arclength ``s`` on the origin scatterer."""
    if kp[0] == 1.0:
        R = kp[5]
        ang = s / R
        nx = math.cos(ang)
        ny = math.sin(ang)
        return R * nx, R * ny, nx, ny, DISPERSING
    st = kp[1]
    ct = kp[2]
    a = kp[3]
    r = kp[4]
    th = kp[7]
    if s < r * th:
        ang = s / r
        nx = math.cos(ang)
        ny = math.sin(ang)
        return a * st + r * nx, r * ny, nx, ny, DISPERSING
    for k in range(4):
        f0 = _flat_start(k, a, r, th)
        if s < f0 + a:
            nx, ny = _side_normal(k, st, ct)
            wx, wy = _vertex(k, a, st, ct)
            u = s - f0
            return wx + r * nx - ny * u, wy + r * ny + nx * u, nx, ny, FLAT
        if k == 3:
            lo = 2.0 * math.pi - th
            wx, wy = _vertex(0, a, st, ct)
        else:
            lo = th if k == 0 else (math.pi - th if k == 1 else math.pi + th)
            wx, wy = _vertex(k + 1, a, st, ct)
        span = 2.0 * th if (k == 1 or k == 3) else math.pi - 2.0 * th
        if k == 3:
            span = th
        if s < f0 + a + r * span or k == 3:
            ang = lo + (s - f0 - a) / r if r > 0.0 else lo
            nx = math.cos(ang)
            ny = math.sin(ang)
            return wx + r * nx, wy + r * ny, nx, ny, DISPERSING
    return 0.0, 0.0, 1.0, 0.0, DISPERSING


@njit(cache=True)
def trace_ray(kp, px, py, vx, vy, max_len):
    """March lattice cells along a ray leaving the scatterer of cell (0, 0).

    ``p`` is relative to the start cell centre.  Returns
    ``(status, di, dj, lam, kind, s, qx, qy, nx, ny)`` where ``(di, dj)`` is the
    hit cell offset and ``q`` is relative to the hit cell centre.
    """
    rho = kp[8]
    if vx > 0.0:
        sx = 1
        tmx = (0.5 - px) / vx
        tdx = 1.0 / vx
    elif vx < 0.0:
        sx = -1
        tmx = (-0.5 - px) / vx
        tdx = -1.0 / vx
    else:
        sx = 0
        tmx = INF
        tdx = INF
    if vy > 0.0:
        sy = 1
        tmy = (0.5 - py) / vy
        tdy = 1.0 / vy
    elif vy < 0.0:
        sy = -1
        tmy = (-0.5 - py) / vy
        tdy = -1.0 / vy
    else:
        sy = 0
        tmy = INF
        tdy = INF
    i = 0
    j = 0
    while True:
        if tmx < tmy:
            tcur = tmx
            tmx += tdx
            i += sx
        else:
            tcur = tmy
            tmy += tdy
            j += sy
        if tcur > max_len:
            return ESCAPED, i, j, tcur, -1, 0.0, 0.0, 0.0, 0.0, 0.0
        ox = px - i
        oy = py - j
        # distance from the cell's scatterer centre to the ray line
        if abs(vx * oy - vy * ox) > rho:
            continue
        lam, kind, s, qx, qy, nx, ny, corner = hit_scatterer(kp, ox, oy, vx, vy)
        if lam < INF:
            if lam > max_len:
                return ESCAPED, i, j, lam, -1, 0.0, 0.0, 0.0, 0.0, 0.0
            if corner:
                return CORNER, i, j, lam, kind, s, qx, qy, nx, ny
            return OK, i, j, lam, kind, s, qx, qy, nx, ny


@njit(cache=True)
def reflect(vx, vy, nx, ny):
    d = vx * nx + vy * ny
    wx = vx - 2.0 * d * nx
    wy = vy - 2.0 * d * ny
    # keep unit speed exact; lam is computed assuming |v| = 1
    nw = math.hypot(wx, wy)
    return wx / nw, wy / nw


@njit(cache=True)
def out_angle(vx, vy, nx, ny):
    """Signed angle from the outward normal to the outgoing velocity."""
    return math.atan2(nx * vy - ny * vx, nx * vx + ny * vy)


@njit(cache=True)
def classify(cw, dx, dy, length):
    """Corridor class of a flight.

    ``cw`` holds ``[L_min, slack, w_H, w_V, w_O+, w_O-]`` with non-positive
    widths marking closed corridors; ``slack`` is the extra transverse extent
    ``2(a + r)`` allowed around the corridor width.
    """
    if length <= cw[0]:
        return CLS_NONE
    ux = dx / length
    uy = dy / length
    h = 0.7071067811865476
    best = CLS_NONE
    bsin = INF
    bw = 0.0
    # |sin| of the angle between the flight and each corridor axis
    sins = (abs(uy), abs(ux), abs(h * (ux - uy)), abs(h * (ux + uy)))
    for c in range(4):
        w = cw[2 + c]
        if w > 0.0 and sins[c] < bsin:
            bsin = sins[c]
            best = c + 1
            bw = w
    if best != CLS_NONE and bsin <= (bw + cw[1]) / length:
        return best
    return CLS_NONE


@njit(cache=True)
def step(kp, cw, ci, cj, px, py, vx, vy, max_len):
    """One billiard-map step from an outgoing state.

    Returns ``(status, ci, cj, qx, qy, vx', vy', lam, kind, s, phi, cls)``.
    """
    status, di, dj, lam, kind, s, qx, qy, nx, ny = trace_ray(kp, px, py, vx, vy, max_len)
    if status == ESCAPED:
        return status, ci + di, cj + dj, qx, qy, vx, vy, lam, kind, 0.0, 0.0, CLS_NONE
    wx, wy = reflect(vx, vy, nx, ny)
    phi = out_angle(wx, wy, nx, ny)
    cls = classify(cw, lam * vx, lam * vy, lam)
    return status, ci + di, cj + dj, qx, qy, wx, wy, lam, kind, s, phi, cls


@njit(cache=True)
def state_from(kp, s, phi):
    qx, qy, nx, ny, kind = boundary_at(kp, s)
    c = math.cos(phi)
    sn = math.sin(phi)
    return qx, qy, nx * c - ny * sn, nx * sn + ny * c, kind


@njit(cache=True)
def liouville_sample(kp, u0, u1):
    """Map two uniforms to ``(s, phi)`` distributed as cos(phi) dphi ds."""
    s = u0 * kp[6]
    if s >= kp[6]:
        s = 0.0
    x = 2.0 * u1 - 1.0
    if x > 1.0:
        x = 1.0
    return s, math.asin(x)


@njit(cache=True)
def near_junction(kp, s):
    if kp[0] == 1.0:
        return False
    a = kp[3]
    r = kp[4]
    th = kp[7]
    tol = 1e-12
    if s < tol or kp[6] - s < tol:
        return True
    for k in range(4):
        f0 = _flat_start(k, a, r, th)
        if abs(s - f0) < tol or abs(s - f0 - a) < tol:
            return True
    return False


@njit(cache=True)
def sample_flights(kp, cw, u, max_len):
    """One free flight from each Liouville sample.

    ``u`` has shape ``(N, 4)``: columns 0-1 drive the sample and 2-3 a single
    resample when ``s`` falls on a component junction.  Returns per-flight
    arrays ``(status, dx, dy, length, start_kind, end_kind, cls, s0, phi0,
    s1, phi1)``.
    """
    n = u.shape[0]
    status = np.zeros(n, np.int8)
    dxa = np.zeros(n)
    dya = np.zeros(n)
    la = np.zeros(n)
    k0 = np.zeros(n, np.int8)
    k1 = np.zeros(n, np.int8)
    cl = np.zeros(n, np.int8)
    s0a = np.zeros(n)
    p0a = np.zeros(n)
    s1a = np.zeros(n)
    p1a = np.zeros(n)
    for i in range(n):
        s, phi = liouville_sample(kp, u[i, 0], u[i, 1])
        if near_junction(kp, s):
            s, phi = liouville_sample(kp, u[i, 2], u[i, 3])
        px, py, vx, vy, kind0 = state_from(kp, s, phi)
        st, ci, cj, qx, qy, wx, wy, lam, kind, s1, phi1, cls = step(kp, cw, 0, 0, px, py, vx, vy, max_len)
        status[i] = st
        k0[i] = kind0
        s0a[i] = s
        p0a[i] = phi
        la[i] = lam
        if st == ESCAPED:
            dxa[i] = lam * vx
            dya[i] = lam * vy
            k1[i] = -1
            cl[i] = classify(cw, dxa[i], dya[i], lam)
            continue
        dxa[i] = (ci + qx) - px
        dya[i] = (cj + qy) - py
        k1[i] = kind
        cl[i] = cls
        s1a[i] = s1
        p1a[i] = phi1
    return status, dxa, dya, la, k0, k1, cl, s0a, p0a, s1a, p1a


@njit(cache=True)
def map_batch(kp, cw, s_in, phi_in, max_len):
    """Apply the billiard map to a batch of states in cell (0, 0)."""
    n = s_in.shape[0]
    status = np.zeros(n, np.int8)
    s_out = np.zeros(n)
    phi_out = np.zeros(n)
    ci_out = np.zeros(n, np.int64)
    cj_out = np.zeros(n, np.int64)
    for i in range(n):
        px, py, vx, vy, kind0 = state_from(kp, s_in[i], phi_in[i])
        st, ci, cj, qx, qy, wx, wy, lam, kind, s1, phi1, cls = step(kp, cw, 0, 0, px, py, vx, vy, max_len)
        status[i] = st
        s_out[i] = s1
        phi_out[i] = phi1
        ci_out[i] = ci
        cj_out[i] = cj
    return status, ci_out, cj_out, s_out, phi_out


@njit(cache=True)
def run_orbit_from(kp, cw, s, phi, px, py, vx, vy, kind0, n, max_len):
    """Iterate the map ``n`` times recording every flight.

    Returns ``(status, n_done, ci, cj, qx, qy, t, s, phi, kind, cls, dx, dy)``
    where index ``k`` of the state arrays describes collision ``k`` (index 0
    is the start) and index ``k`` of ``dx, dy`` is the flight after it.
    The start is given both as ``(s, phi)`` and as the position and velocity
    ``(px, py, vx, vy)`` carried over from a previous call, so that an orbit
    split into pieces is bit-identical to one run in a single call.  The
    final position and velocity are appended to the outputs.
    """
    ci = np.zeros(n + 1, np.int64)
    cj = np.zeros(n + 1, np.int64)
    qxa = np.zeros(n + 1)
    qya = np.zeros(n + 1)
    ta = np.zeros(n + 1)
    sa = np.zeros(n + 1)
    pa = np.zeros(n + 1)
    ka = np.zeros(n + 1, np.int8)
    cla = np.zeros(n + 1, np.int8)
    dxa = np.zeros(n)
    dya = np.zeros(n)
    qxa[0] = px
    qya[0] = py
    sa[0] = s
    pa[0] = phi
    ka[0] = kind0
    c0 = 0
    c1 = 0
    t = 0.0
    status = OK
    done = 0
    for k in range(n):
        st, ni, nj, qx, qy, wx, wy, lam, kind, s1, phi1, cls = step(kp, cw, c0, c1, px, py, vx, vy, max_len)
        if st != OK:
            status = st
            break
        dxa[k] = (ni - c0) + qx - px
        dya[k] = (nj - c1) + qy - py
        t += lam
        c0 = ni
        c1 = nj
        px = qx
        py = qy
        vx = wx
        vy = wy
        done = k + 1
        ci[done] = ni
        cj[done] = nj
        qxa[done] = qx
        qya[done] = qy
        ta[done] = t
        sa[done] = s1
        pa[done] = phi1
        ka[done] = kind
        cla[done] = cls
    return status, done, ci, cj, qxa, qya, ta, sa, pa, ka, cla, dxa, dya, np.array([px, py, vx, vy])


@njit(cache=True)
def run_orbit(kp, cw, s, phi, n, max_len):
    px, py, vx, vy, kind0 = state_from(kp, s, phi)
    return run_orbit_from(kp, cw, s, phi, px, py, vx, vy, kind0, n, max_len)


@njit(cache=True)
def displacement_batch(kp, cw, u, n_grid, t_grid, max_len):
    """Ensemble displacements sampled on collision-index and time grids.

    ``n_grid`` and ``t_grid`` must be increasing.  Returns ``(status, xn, xt,
    tn, sum_len)``: ``xn[k, g]`` is ``x_n - x_0`` at ``n = n_grid[g]``,
    ``xt[k, g]`` is ``x(t) - x_0`` at ``t = t_grid[g]`` (linear interpolation
    along the current flight), ``tn[k, g]`` the time of collision
    ``n_grid[g]``.  Trajectories are run until both grids are exhausted.
    """
    K = u.shape[0]
    gn = n_grid.shape[0]
    gt = t_grid.shape[0]
    status = np.zeros(K, np.int8)
    xn = np.zeros((K, gn, 2))
    xt = np.zeros((K, gt, 2))
    tn = np.zeros((K, gn))
    nmax = n_grid[gn - 1] if gn > 0 else 0
    tmax = t_grid[gt - 1] if gt > 0 else 0.0
    for k in range(K):
        s, phi = liouville_sample(kp, u[k, 0], u[k, 1])
        if near_junction(kp, s):
            s, phi = liouville_sample(kp, u[k, 2], u[k, 3])
        px, py, vx, vy, kind0 = state_from(kp, s, phi)
        x0 = px
        y0 = py
        c0 = 0
        c1 = 0
        t = 0.0
        n = 0
        ig = 0
        jg = 0
        while ig < gn and n_grid[ig] == 0:
            ig += 1
        while jg < gt and t_grid[jg] <= 0.0:
            jg += 1
        while ig < gn or jg < gt:
            st, ni, nj, qx, qy, wx, wy, lam, kind, s1, phi1, cls = step(kp, cw, c0, c1, px, py, vx, vy, max_len)
            if st != OK:
                status[k] = st
                break
            # time grid points falling inside this flight
            while jg < gt and t_grid[jg] <= t + lam:
                h = t_grid[jg] - t
                xt[k, jg, 0] = (c0 + px + h * vx) - x0
                xt[k, jg, 1] = (c1 + py + h * vy) - y0
                jg += 1
            t += lam
            n += 1
            c0 = ni
            c1 = nj
            px = qx
            py = qy
            vx = wx
            vy = wy
            while ig < gn and n_grid[ig] == n:
                xn[k, ig, 0] = c0 + (px - x0)
                xn[k, ig, 1] = c1 + (py - y0)
                tn[k, ig] = t
                ig += 1
    return status, xn, xt, tn


@njit(cache=True)
def orbit_flights(kp, cw, s, phi, n, max_len, start):
    """Flight vectors, lengths, endpoint kinds and classes of one long orbit.

    Lighter than :func:`run_orbit` for correlation and neutral-run studies.
    ``kinds[k]`` and ``kinds[k+1]`` are the component kinds at the two ends of
    flight ``k``.  The final outgoing ``(s, phi)`` is returned so that long
    orbits can be generated in pieces; ``start`` (length 4) optionally carries
    the exact position and velocity over from the previous piece and is
    ignored when empty.  The final position and velocity are returned last.
    """
    dxa = np.zeros(n)
    dya = np.zeros(n)
    ka = np.zeros(n + 1, np.int8)
    cla = np.zeros(n, np.int8)
    px, py, vx, vy, kind0 = state_from(kp, s, phi)
    if start.shape[0] == 4:
        px = start[0]
        py = start[1]
        vx = start[2]
        vy = start[3]
    ka[0] = kind0
    c0 = 0
    c1 = 0
    done = 0
    status = OK
    s_end = s
    phi_end = phi
    for k in range(n):
        st, ni, nj, qx, qy, wx, wy, lam, kind, s1, phi1, cls = step(kp, cw, c0, c1, px, py, vx, vy, max_len)
        if st != OK:
            status = st
            break
        dxa[k] = (ni - c0) + qx - px
        dya[k] = (nj - c1) + qy - py
        ka[k + 1] = kind
        cla[k] = cls
        c0 = ni
        c1 = nj
        px = qx
        py = qy
        vx = wx
        vy = wy
        s_end = s1
        phi_end = phi1
        done = k + 1
    return status, done, dxa, dya, ka, cla, s_end, phi_end, np.array([px, py, vx, vy])
