"""Numba kernels: one Brownian trajectory per index, Euler-Maruyama with reflection.

Geometry kinds: 0 ball, 1 box, 2 polynomial. Windows are flattened into
arrays of caps (disks on the boundary) and box faces; a window id is the
position of the window in the user's list.

Step aggregation: ``k`` consecutive increments are drawn as one Gaussian
of variance ``k`` times larger, which is exactly the law of their sum. The
coarse step must not skip an absorption, so ``k <= (d_abs / (6 sigma))^2``
with ``d_abs`` the distance to every absorbing window; the intermediate
points then stay out of reach except with probability ~``exp(-18)``.
Reflecting walls only need the endpoint to be folded back: for a flat wall
the folded endpoint has the law of reflected motion whatever the path did
in between, and for curved walls the difference is a curvature effect of
the size of the reflection error itself. They bound ``k`` through
``(d_refl / (3 sigma))^2``, which keeps coarse steps rare near the wall and
small next to the radius of curvature. Box faces fold exactly and do not
limit ``k`` at all.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .rng import PURPOSE_MOTION, PURPOSE_START, PURPOSE_TAIL, STATE_SIZE, refill_normals, stream_init, uniform

KIND_BALL = 0
KIND_BOX = 1
KIND_POLY = 2

START_UNIFORM = 0
START_FIXED = 1
START_FACE = 2
START_CAP = 3

STATUS_OK = 0
STATUS_PROJECTION = 1
STATUS_START = 2

WINDOW_SLACK = 1.5
AGG_ABSORB = 6.0
AGG_REFLECT = 3.0
MAX_REFLECTIONS = 3
MAX_SHRINKS = 20
MAX_REJECTIONS = 1_000_000
NEWTON_ITER = 50
BATCH = 255  # three normals per step


@njit(cache=True, nogil=True)
def _poly(coef, exps, x, y, z):
    f = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for m in range(coef.size):
        i, j, k = exps[m, 0], exps[m, 1], exps[m, 2]
        px = x**i
        py = y**j
        pz = z**k
        c = coef[m]
        f += c * px * py * pz
        if i > 0:
            gx += c * i * x ** (i - 1) * py * pz
        if j > 0:
            gy += c * j * px * y ** (j - 1) * pz
        if k > 0:
            gz += c * k * px * py * z ** (k - 1)
    return f, gx, gy, gz


@njit(cache=True, nogil=True)
def _implicit(kind, gp, coef, exps, x, y, z):
    if kind == KIND_BALL:
        return x * x + y * y + z * z - gp[0] * gp[0]
    if kind == KIND_BOX:
        return max(max(-x, x - gp[0]), max(max(-y, y - gp[1]), max(-z, z - gp[2])))
    f, _, _, _ = _poly(coef, exps, x, y, z)
    return f


@njit(cache=True, nogil=True)
def _project_poly(coef, exps, tol, x, y, z):
    """Newton projection onto F = 0; returns point, unit outward normal and success flag."""
    for _ in range(NEWTON_ITER):
        f, gx, gy, gz = _poly(coef, exps, x, y, z)
        gg = gx * gx + gy * gy + gz * gz
        if gg < 1e-300:
            return x, y, z, 0.0, 0.0, 0.0, False
        if abs(f) < tol:
            gn = math.sqrt(gg)
            return x, y, z, gx / gn, gy / gn, gz / gn, True
        x -= f * gx / gg
        y -= f * gy / gg
        z -= f * gz / gg
    return x, y, z, 0.0, 0.0, 0.0, False


@njit(cache=True, nogil=True)
def _cap_hit(px, py, pz, cap_c, cap_t1, cap_t2, cap_a):
    for w in range(cap_a.size):
        dx = px - cap_c[w, 0]
        dy = py - cap_c[w, 1]
        dz = pz - cap_c[w, 2]
        a = cap_a[w]
        if dx * dx + dy * dy + dz * dz >= (WINDOW_SLACK * a) ** 2:
            continue
        u = dx * cap_t1[w, 0] + dy * cap_t1[w, 1] + dz * cap_t1[w, 2]
        v = dx * cap_t2[w, 0] + dy * cap_t2[w, 1] + dz * cap_t2[w, 2]
        if u * u + v * v < a * a:
            return w
    return -1


@njit(cache=True, nogil=True)
def _fold(v, L):
    p = 2.0 * L
    v = v - p * math.floor(v / p)
    return p - v if v > L else v


@njit(cache=True, nogil=True)
def _cap_distance(x, y, z, cap_c, cap_a):
    d = np.inf
    for w in range(cap_a.size):
        dx = x - cap_c[w, 0]
        dy = y - cap_c[w, 1]
        dz = z - cap_c[w, 2]
        d = min(d, math.sqrt(dx * dx + dy * dy + dz * dz) - WINDOW_SLACK * cap_a[w])
    return d


@njit(cache=True, nogil=True)
def _box_face_distance(x, y, z, gp, face_axis, face_upper):
    d = np.inf
    for f in range(face_axis.size):
        ax = face_axis[f]
        c = x if ax == 0 else (y if ax == 1 else z)
        d = min(d, gp[ax] - c if face_upper[f] else c)
    return d


@njit(cache=True, nogil=True)
def _start_point(kind, gp, coef, exps, tol, start_mode, sd, st):
    """Initial position and a success flag."""
    if start_mode == START_FIXED:
        return sd[0], sd[1], sd[2], True
    if start_mode == START_UNIFORM:
        for _ in range(MAX_REJECTIONS):
            x = gp[8] + (gp[11] - gp[8]) * uniform(st)
            y = gp[9] + (gp[12] - gp[9]) * uniform(st)
            z = gp[10] + (gp[13] - gp[10]) * uniform(st)
            if _implicit(kind, gp, coef, exps, x, y, z) < 0:
                return x, y, z, True
        return 0.0, 0.0, 0.0, False
    if start_mode == START_FACE:
        ax = int(sd[0])
        p = np.empty(3)
        for i in range(3):
            p[i] = gp[i] * uniform(st)
        p[ax] = gp[ax] if sd[1] > 0 else 0.0
        return p[0], p[1], p[2], True
    # cap: uniform on the tangent disk, then moved onto the boundary
    rho = sd[12] * math.sqrt(uniform(st))
    th = 2.0 * math.pi * uniform(st)
    cu = rho * math.cos(th)
    cv = rho * math.sin(th)
    x = sd[0] + cu * sd[3] + cv * sd[6]
    y = sd[1] + cu * sd[4] + cv * sd[7]
    z = sd[2] + cu * sd[5] + cv * sd[8]
    if kind == KIND_BALL:
        s = gp[0] / math.sqrt(x * x + y * y + z * z)
        return x * s, y * s, z * s, True
    if kind == KIND_POLY:
        x, y, z, _, _, _, ok = _project_poly(coef, exps, tol, x, y, z)
        return x, y, z, ok
    return x, y, z, True


@njit(cache=True, nogil=True)
def trajectory(idx, k0, k1, kind, gp, coef, exps,
               cap_c, cap_n, cap_t1, cap_t2, cap_a, cap_id,
               face_axis, face_upper, face_id,
               start_mode, sd, dt, D, tmax, debug):
    """Simulate trajectory ``idx``; returns (time, window id or -1, steps, violations, status)."""
    tol = gp[7]
    gmax = gp[6]
    st = np.empty(STATE_SIZE, dtype=np.uint32)
    stream_init(st, k0, k1, np.uint64(idx), PURPOSE_START)
    x, y, z, ok = _start_point(kind, gp, coef, exps, tol, start_mode, sd, st)
    if not ok:
        return 0.0, -1, 0, 0, STATUS_START

    # a start on the boundary inside a window is absorbed immediately
    if _implicit(kind, gp, coef, exps, x, y, z) >= -tol:
        w = _cap_hit(x, y, z, cap_c, cap_t1, cap_t2, cap_a)
        if w >= 0:
            return 0.0, cap_id[w], 0, 0, STATUS_OK
        if kind == KIND_BOX:
            for f in range(face_axis.size):
                ax = face_axis[f]
                c = x if ax == 0 else (y if ax == 1 else z)
                if (face_upper[f] and c >= gp[ax]) or ((not face_upper[f]) and c <= 0.0):
                    return 0.0, face_id[f], 0, 0, STATUS_OK

    stream_init(st, k0, k1, np.uint64(idx), PURPOSE_TAIL)
    nb = np.empty(BATCH)
    block = np.uint64(0)
    ni = BATCH
    sigma = math.sqrt(2.0 * D * dt)
    thresh_abs = AGG_ABSORB * sigma
    thresh_refl = AGG_REFLECT * sigma
    R = gp[0]
    t = 0.0
    steps = 0
    viol = 0
    while t < tmax:
        # distances to what can absorb and to what can reflect the walker
        d_abs = _cap_distance(x, y, z, cap_c, cap_a)
        if kind == KIND_BALL:
            d_refl = R - math.sqrt(x * x + y * y + z * z)
        elif kind == KIND_BOX:
            d_refl = np.inf
            d_abs = min(d_abs, _box_face_distance(x, y, z, gp, face_axis, face_upper))
        else:
            d_refl = -_implicit(kind, gp, coef, exps, x, y, z) / gmax
        k = 1.0
        if d_abs > thresh_abs and d_refl > thresh_refl:
            # cap before flooring: both distances are infinite in a window-free box
            q = min((d_abs / thresh_abs) ** 2, (d_refl / thresh_refl) ** 2, math.ceil((tmax - t) / dt))
            k = max(math.floor(q), 1.0)
        h = k * dt
        s = sigma * math.sqrt(k)
        if ni == BATCH:
            block = refill_normals(nb, k0, k1, np.uint64(idx), PURPOSE_MOTION, block, st)
            ni = 0
        g1 = nb[ni]
        g2 = nb[ni + 1]
        g3 = nb[ni + 2]
        ni += 3
        steps += 1

        if kind == KIND_BOX:
            nx = x + s * g1
            ny = y + s * g2
            nz = z + s * g3
            inside = 0.0 < nx < gp[0] and 0.0 < ny < gp[1] and 0.0 < nz < gp[2]
            if not inside and k == 1.0:
                # visit face crossings in order along the segment
                lam = np.full(3, np.inf)
                side = np.zeros(3, dtype=np.int64)
                pos = (nx, ny, nz)
                cur = (x, y, z)
                for ax in range(3):
                    if pos[ax] < 0.0:
                        lam[ax] = cur[ax] / (cur[ax] - pos[ax])
                        side[ax] = 0
                    elif pos[ax] > gp[ax]:
                        lam[ax] = (gp[ax] - cur[ax]) / (pos[ax] - cur[ax])
                        side[ax] = 1
                order = np.argsort(lam)
                for o in range(3):
                    ax = order[o]
                    if lam[ax] == np.inf:
                        break
                    lm = lam[ax]
                    px = _fold(x + lm * (nx - x), gp[0])
                    py = _fold(y + lm * (ny - y), gp[1])
                    pz = _fold(z + lm * (nz - z), gp[2])
                    wall = gp[ax] if side[ax] == 1 else 0.0
                    if ax == 0:
                        px = wall
                    elif ax == 1:
                        py = wall
                    else:
                        pz = wall
                    for f in range(face_axis.size):
                        if face_axis[f] == ax and face_upper[f] == (side[ax] == 1):
                            return t + lm * h, face_id[f], steps, viol, STATUS_OK
                    w = _cap_hit(px, py, pz, cap_c, cap_t1, cap_t2, cap_a)
                    if w >= 0:
                        return t + lm * h, cap_id[w], steps, viol, STATUS_OK
            if not inside:
                nx = _fold(nx, gp[0])
                ny = _fold(ny, gp[1])
                nz = _fold(nz, gp[2])
            x, y, z = nx, ny, nz

        elif kind == KIND_BALL:
            nx = x + s * g1
            ny = y + s * g2
            nz = z + s * g3
            r2 = nx * nx + ny * ny + nz * nz
            if r2 >= R * R:
                dx = nx - x
                dy = ny - y
                dz = nz - z
                A = dx * dx + dy * dy + dz * dz
                B = 2.0 * (x * dx + y * dy + z * dz)
                C = x * x + y * y + z * z - R * R
                lm = (-B + math.sqrt(max(B * B - 4.0 * A * C, 0.0))) / (2.0 * A)
                lm = min(max(lm, 0.0), 1.0)
                w = _cap_hit(x + lm * dx, y + lm * dy, z + lm * dz, cap_c, cap_t1, cap_t2, cap_a)
                if w >= 0:
                    return t + lm * h, cap_id[w], steps, viol, STATUS_OK
                # specular reflection across the tangent plane at R n/|n|
                r = math.sqrt(r2)
                f = (2.0 * R - r) / r
                if f <= 0.0:
                    f = R * (1.0 - 1e-12) / r
                nx *= f
                ny *= f
                nz *= f
            x, y, z = nx, ny, nz

        else:
            ix = s * g1
            iy = s * g2
            iz = s * g3
            done = False
            for _ in range(MAX_SHRINKS):
                nx = x + ix
                ny = y + iy
                nz = z + iz
                if _implicit(kind, gp, coef, exps, nx, ny, nz) < 0.0:
                    done = True
                    break
                # crossing parameter by bisection on the segment
                lo = 0.0
                hi = 1.0
                for _b in range(60):
                    mid = 0.5 * (lo + hi)
                    if _implicit(kind, gp, coef, exps, x + mid * ix, y + mid * iy, z + mid * iz) < 0.0:
                        lo = mid
                    else:
                        hi = mid
                    if hi - lo < 1e-12:
                        break
                px, py, pz, _, _, _, okp = _project_poly(coef, exps, tol, x + hi * ix, y + hi * iy, z + hi * iz)
                if okp:
                    w = _cap_hit(px, py, pz, cap_c, cap_t1, cap_t2, cap_a)
                    if w >= 0:
                        return t + hi * h, cap_id[w], steps, viol, STATUS_OK
                for _r in range(MAX_REFLECTIONS):
                    qx, qy, qz, mx, my, mz, okq = _project_poly(coef, exps, tol, nx, ny, nz)
                    if not okq:
                        break
                    dn = (nx - qx) * mx + (ny - qy) * my + (nz - qz) * mz
                    nx -= 2.0 * dn * mx
                    ny -= 2.0 * dn * my
                    nz -= 2.0 * dn * mz
                    if _implicit(kind, gp, coef, exps, nx, ny, nz) < 0.0:
                        done = True
                        break
                if done:
                    break
                ix *= 0.5
                iy *= 0.5
                iz *= 0.5
            if not done:
                return t, -1, steps, viol, STATUS_PROJECTION
            x, y, z = nx, ny, nz

        t += h
        if debug and _implicit(kind, gp, coef, exps, x, y, z) >= 0.0:
            viol += 1
    return tmax, -1, steps, viol, STATUS_OK


@njit(cache=True, nogil=True)
def run_block(lo, hi, k0, k1, kind, gp, coef, exps,
              cap_c, cap_n, cap_t1, cap_t2, cap_a, cap_id,
              face_axis, face_upper, face_id,
              start_mode, sd, dt, D, tmax, debug,
              out_t, out_w, out_steps, out_viol, out_status):
    for i in range(lo, hi):
        t, w, n, v, s = trajectory(
            i, k0, k1, kind, gp, coef, exps,
            cap_c, cap_n, cap_t1, cap_t2, cap_a, cap_id,
            face_axis, face_upper, face_id,
            start_mode, sd, dt, D, tmax, debug,
        )
        out_t[i] = t
        out_w[i] = w
        out_steps[i] = n
        out_viol[i] = v
        out_status[i] = s
