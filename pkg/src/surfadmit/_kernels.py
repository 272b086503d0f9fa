"""Compiled inner loops for panel integrals and dense operator assembly.

Local half-functions are the unnormalised fields ``u_i(r) = r - v_i`` (surface
divergence 2); callers apply the RWG scale ``+-l/(2A)``.

Per test point ``p`` and source triangle the assembly needs three inner
integrals of the kernel:

    phi0 = int G dS',   phi1 = int G r' dS',   gam = int grad_r G dS'

For near pairs the 1/R and R terms of the kernel's small-R expansion are
integrated in closed form and only the smooth remainder is sampled.
"""

import math
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # prefer OpenMP; probing an outdated TBB first only produces a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

NEAR_FACTOR = 3.0
_INV4PI = 1.0 / (4.0 * math.pi)
_SERIES_X = 0.25


@njit(cache=True)
def _static_into(c, nrm, r, out):
    # out: I0, Iv[3], gI0[3], I1, Iv1[3], gI1[3]
    scale2 = 0.0
    for i in range(3):
        for q in range(3):
            dx = c[i, q] - c[(i + 1) % 3, q]
            scale2 += dx * dx
    d = nrm[0] * (r[0] - c[0, 0]) + nrm[1] * (r[1] - c[0, 1]) + nrm[2] * (r[2] - c[0, 2])
    # in-plane points carry rounding noise in d; snap so the principal value is taken
    if d * d < 1e-24 * scale2:
        d = 0.0
    ad = abs(d)
    rho0 = r[0] - d * nrm[0]
    rho1 = r[1] - d * nrm[1]
    rho2 = r[2] - d * nrm[2]
    tiny = 1e-28 * scale2
    I0 = 0.0
    sbeta = 0.0
    I1edge = 0.0
    iv0 = iv1 = iv2 = 0.0
    g0 = g1 = g2 = 0.0
    w0 = w1 = w2 = 0.0
    for i in range(3):
        ia = (i + 1) % 3
        ib = (i + 2) % 3
        sx = c[ib, 0] - c[ia, 0]
        sy = c[ib, 1] - c[ia, 1]
        sz = c[ib, 2] - c[ia, 2]
        ln = math.sqrt(sx * sx + sy * sy + sz * sz)
        sx /= ln
        sy /= ln
        sz /= ln
        mx = sy * nrm[2] - sz * nrm[1]
        my = sz * nrm[0] - sx * nrm[2]
        mz = sx * nrm[1] - sy * nrm[0]
        ax = c[ia, 0] - rho0
        ay = c[ia, 1] - rho1
        az = c[ia, 2] - rho2
        bx = c[ib, 0] - rho0
        by = c[ib, 1] - rho1
        bz = c[ib, 2] - rho2
        lp = bx * sx + by * sy + bz * sz
        lm = ax * sx + ay * sy + az * sz
        t0 = ax * mx + ay * my + az * mz
        R0sq = t0 * t0 + d * d
        Rp = math.sqrt(bx * bx + by * by + bz * bz + d * d)
        Rm = math.sqrt(ax * ax + ay * ay + az * az + d * d)
        if R0sq > tiny:
            num = Rp + lp if lp >= 0.0 else R0sq / (Rp - lp)
            den = Rm + lm if lm >= 0.0 else R0sq / (Rm - lm)
            f2 = math.log(num / den)
        elif lp * lm > 0.0:
            f2 = math.log(lp / lm) if lp > 0.0 else math.log(lm / lp)
        else:
            f2 = 0.0
        beta = math.atan2(t0 * lp, R0sq + ad * Rp) - math.atan2(t0 * lm, R0sq + ad * Rm)
        L1 = 0.5 * (R0sq * f2 + lp * Rp - lm * Rm)
        L3 = 0.25 * (lp * Rp * Rp * Rp - lm * Rm * Rm * Rm) + 0.75 * R0sq * L1
        I0 += t0 * f2
        sbeta += beta
        I1edge += t0 * L1
        iv0 += mx * L1
        iv1 += my * L1
        iv2 += mz * L1
        g0 -= mx * f2
        g1 -= my * f2
        g2 -= mz * f2
        w0 += mx * L3
        w1 += my * L3
        w2 += mz * L3
    I0 -= ad * sbeta
    sgn = 0.0
    if d > 0.0:
        sgn = 1.0
    elif d < 0.0:
        sgn = -1.0
    out[0] = I0
    out[1] = iv0
    out[2] = iv1
    out[3] = iv2
    out[4] = g0 - nrm[0] * sgn * sbeta
    out[5] = g1 - nrm[1] * sgn * sbeta
    out[6] = g2 - nrm[2] * sgn * sbeta
    out[7] = (d * d * I0 + I1edge) / 3.0
    out[8] = w0 / 3.0
    out[9] = w1 / 3.0
    out[10] = w2 / 3.0
    out[11] = d * nrm[0] * I0 - iv0
    out[12] = d * nrm[1] * I0 - iv1
    out[13] = d * nrm[2] * I0 - iv2


@njit(cache=True)
def static_terms(c, nrm, r):
    out = np.empty(14)
    _static_into(c, nrm, r, out)
    return out


@njit(cache=True)
def _rem0(x):
    # exp(-jx) - 1 + x^2/2
    if abs(x) < _SERIES_X:
        t = -1j * x
        term = t
        s = t
        for n in range(2, 15):
            term = term * t / n
            if n != 2:
                s += term
        return s
    return np.exp(-1j * x) - 1.0 + 0.5 * x * x


@njit(cache=True)
def _remg(x):
    # (1 + jx) exp(-jx) - 1 - x^2/2
    if abs(x) < _SERIES_X:
        t = -1j * x
        term = t
        s = 0j
        for n in range(2, 16):
            term = term * t / n
            if n >= 3:
                s += term * (1.0 - n)
        return s
    return (1.0 + 1j * x) * np.exp(-1j * x) - 1.0 - 0.5 * x * x


@njit(cache=True)
def _moments(p, cs, ns, As, ks, near, qf, wf, qn, wn, phi0, phi1, gam, st):
    """Fill phi0[k], phi1[k, 3], gam[k, 3] for test point p and one source triangle.

    qf/qn are the source quadrature points (physical) for far/near use, with
    weights already multiplied by the source area.
    """
    nk = ks.shape[0]
    for kk in range(nk):
        phi0[kk] = 0.0
        for a in range(3):
            phi1[kk, a] = 0.0
            gam[kk, a] = 0.0
    if not near:
        for q in range(qf.shape[0]):
            dx = p[0] - qf[q, 0]
            dy = p[1] - qf[q, 1]
            dz = p[2] - qf[q, 2]
            R = math.sqrt(dx * dx + dy * dy + dz * dz)
            for kk in range(nk):
                k = ks[kk]
                e = np.exp(-1j * k * R) * _INV4PI / R
                g = e * wf[q]
                phi0[kk] += g
                phi1[kk, 0] += g * qf[q, 0]
                phi1[kk, 1] += g * qf[q, 1]
                phi1[kk, 2] += g * qf[q, 2]
                dg = -(1.0 + 1j * k * R) * e / (R * R) * wf[q]
                gam[kk, 0] += dg * dx
                gam[kk, 1] += dg * dy
                gam[kk, 2] += dg * dz
        return
    _static_into(cs, ns, p, st)
    d = ns[0] * (p[0] - cs[0, 0]) + ns[1] * (p[1] - cs[0, 1]) + ns[2] * (p[2] - cs[0, 2])
    rho0 = p[0] - d * ns[0]
    rho1 = p[1] - d * ns[1]
    rho2 = p[2] - d * ns[2]
    for kk in range(nk):
        k = ks[kk]
        h = -0.5 * k * k
        phi0[kk] = (st[0] + h * st[7]) * _INV4PI
        phi1[kk, 0] = (st[1] + rho0 * st[0] + h * (st[8] + rho0 * st[7])) * _INV4PI
        phi1[kk, 1] = (st[2] + rho1 * st[0] + h * (st[9] + rho1 * st[7])) * _INV4PI
        phi1[kk, 2] = (st[3] + rho2 * st[0] + h * (st[10] + rho2 * st[7])) * _INV4PI
        gam[kk, 0] = (st[4] + h * st[11]) * _INV4PI
        gam[kk, 1] = (st[5] + h * st[12]) * _INV4PI
        gam[kk, 2] = (st[6] + h * st[13]) * _INV4PI
    for q in range(qn.shape[0]):
        dx = p[0] - qn[q, 0]
        dy = p[1] - qn[q, 1]
        dz = p[2] - qn[q, 2]
        R = math.sqrt(dx * dx + dy * dy + dz * dz)
        for kk in range(nk):
            k = ks[kk]
            x = k * R
            if R > 0.0:
                g = _rem0(x) / R * _INV4PI * wn[q]
                dg = -_remg(x) / (R * R * R) * _INV4PI * wn[q]
            else:
                g = -1j * k * _INV4PI * wn[q]
                dg = 0.0
            phi0[kk] += g
            phi1[kk, 0] += g * qn[q, 0]
            phi1[kk, 1] += g * qn[q, 1]
            phi1[kk, 2] += g * qn[q, 2]
            gam[kk, 0] += dg * dx
            gam[kk, 1] += dg * dy
            gam[kk, 2] += dg * dz


@njit(cache=True)
def _local(pt, wt, ct, nt, cs, ns, As, ks, near, qf, wf, qn, wn, lvec, lsca, kl, nlv, nlg, nkl):
    """Accumulate 3x3 local interactions for one (test, source) triangle pair.

    lvec[k,i,j] = <u_i, G u_j>, lsca = <div u_i, G div u_j> (= 4 <1, G 1>),
    kl = <u_i, grad G x u_j>,
    nlv = <u_i, n x G u_j>, nlg = <u_i, n x grad(G div u_j)>,
    nkl = <u_i, n x (grad G x u_j)>.
    wt must include the test area.
    """
    nk = ks.shape[0]
    phi0 = np.empty(nk, dtype=np.complex128)
    phi1 = np.empty((nk, 3), dtype=np.complex128)
    gam = np.empty((nk, 3), dtype=np.complex128)
    st = np.empty(14)
    a = np.empty((3, 3))
    b = np.empty((3, 3))
    for pq in range(pt.shape[0]):
        p = pt[pq]
        w = wt[pq]
        _moments(p, cs, ns, As, ks, near, qf, wf, qn, wn, phi0, phi1, gam, st)
        for i in range(3):
            for x in range(3):
                a[i, x] = p[x] - ct[i, x]
                b[i, x] = p[x] - cs[i, x]
        for kk in range(nk):
            f0 = phi0[kk]
            g0 = gam[kk, 0]
            g1 = gam[kk, 1]
            g2 = gam[kk, 2]
            # n x gam
            ng0 = nt[1] * g2 - nt[2] * g1
            ng1 = nt[2] * g0 - nt[0] * g2
            ng2 = nt[0] * g1 - nt[1] * g0
            for j in range(3):
                v0 = phi1[kk, 0] - cs[j, 0] * f0
                v1 = phi1[kk, 1] - cs[j, 1] * f0
                v2 = phi1[kk, 2] - cs[j, 2] * f0
                # n x v
                nv0 = nt[1] * v2 - nt[2] * v1
                nv1 = nt[2] * v0 - nt[0] * v2
                nv2 = nt[0] * v1 - nt[1] * v0
                # gam x b_j
                c0 = g1 * b[j, 2] - g2 * b[j, 1]
                c1 = g2 * b[j, 0] - g0 * b[j, 2]
                c2 = g0 * b[j, 1] - g1 * b[j, 0]
                # n x (gam x b_j)
                m0 = nt[1] * c2 - nt[2] * c1
                m1 = nt[2] * c0 - nt[0] * c2
                m2 = nt[0] * c1 - nt[1] * c0
                for i in range(3):
                    lvec[kk, i, j] += w * (a[i, 0] * v0 + a[i, 1] * v1 + a[i, 2] * v2)
                    lsca[kk, i, j] += w * 4.0 * f0
                    kl[kk, i, j] += w * (a[i, 0] * c0 + a[i, 1] * c1 + a[i, 2] * c2)
                    nlv[kk, i, j] += w * (a[i, 0] * nv0 + a[i, 1] * nv1 + a[i, 2] * nv2)
                    nlg[kk, i, j] += w * 2.0 * (a[i, 0] * ng0 + a[i, 1] * ng1 + a[i, 2] * ng2)
                    nkl[kk, i, j] += w * (a[i, 0] * m0 + a[i, 1] * m1 + a[i, 2] * m2)


@njit(cache=True)
def _tri_points(c, bary):
    out = np.empty((bary.shape[0], 3))
    for q in range(bary.shape[0]):
        for x in range(3):
            out[q, x] = bary[q, 0] * c[0, x] + bary[q, 1] * c[1, x] + bary[q, 2] * c[2, x]
    return out


@njit(cache=True)
def _area_normal(c):
    ux = c[1, 0] - c[0, 0]
    uy = c[1, 1] - c[0, 1]
    uz = c[1, 2] - c[0, 2]
    vx = c[2, 0] - c[0, 0]
    vy = c[2, 1] - c[0, 1]
    vz = c[2, 2] - c[0, 2]
    n = np.array([uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx])
    s = math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2)
    return 0.5 * s, n / s


@njit(cache=True)
def pair_local(ct, cs, ks, bary, w, bary_n, w_n, near, test_bary, test_w):
    """Raw local interactions of one triangle pair, shape (6, nk, 3, 3).

    ``test_bary``/``test_w`` is the outer (test-side) rule; ``bary``/``w``
    the source rule for far pairs and ``bary_n``/``w_n`` the rule for the
    smooth remainder of near pairs.
    """
    nk = ks.shape[0]
    At, nt = _area_normal(ct)
    As, ns = _area_normal(cs)
    pt = _tri_points(ct, test_bary)
    wt = test_w * At
    qf = _tri_points(cs, bary)
    wf = w * As
    qn = _tri_points(cs, bary_n)
    wn = w_n * As
    out = np.zeros((6, nk, 3, 3), dtype=np.complex128)
    _local(pt, wt, ct, nt, cs, ns, As, ks, near, qf, wf, qn, wn, out[0], out[1], out[2], out[3], out[4], out[5])
    return out


@njit(cache=True)
def _touch_kind(tri_t, tri_s):
    """Rule slot for a touching pair: 0 self, 1+i edge opposite local vertex i
    of the test triangle, 4+i shared local vertex i, -1 when disjoint."""
    shared = 0
    mask = 0
    for i in range(3):
        for j in range(3):
            if tri_t[i] == tri_s[j]:
                shared += 1
                mask |= 1 << i
    if shared == 3:
        return 0
    if shared == 2:
        for i in range(3):
            if not (mask >> i) & 1:
                return 1 + i
    if shared == 1:
        for i in range(3):
            if (mask >> i) & 1:
                return 4 + i
    return -1


@njit(cache=True)
def _pair_into(t, s, corners, normals, areas, triangles, pts, w, pts_n, w_n, touch_pts, touch_w, touch_n,
               near, ks, lvec, lsca, kl, nlv, nlg, nkl):
    lvec[:] = 0.0
    lsca[:] = 0.0
    kl[:] = 0.0
    nlv[:] = 0.0
    nlg[:] = 0.0
    nkl[:] = 0.0
    kind = _touch_kind(triangles[t], triangles[s]) if near else -1
    if kind >= 0:
        m = touch_n[kind]
        tp = touch_pts[t, kind, :m]
        tw = touch_w[kind, :m] * areas[t]
    else:
        tp = pts[t]
        tw = w * areas[t]
    _local(tp, tw, corners[t], normals[t], corners[s], normals[s], areas[s], ks, near,
           pts[s], w * areas[s], pts_n[s], w_n * areas[s], lvec, lsca, kl, nlv, nlg, nkl)


@njit(cache=True)
def _prepare(corners, bary, bary_n, touch_bary, touch_n):
    F = corners.shape[0]
    pts = np.empty((F, bary.shape[0], 3))
    pts_n = np.empty((F, bary_n.shape[0], 3))
    tmax = touch_bary.shape[1]
    touch_pts = np.zeros((F, touch_bary.shape[0], tmax, 3))
    for t in range(F):
        pts[t] = _tri_points(corners[t], bary)
        pts_n[t] = _tri_points(corners[t], bary_n)
        for r in range(touch_bary.shape[0]):
            touch_pts[t, r, : touch_n[r]] = _tri_points(corners[t], touch_bary[r, : touch_n[r]])
    return pts, pts_n, touch_pts


@njit(cache=True)
def _is_near(centroids, diam, t, s, near_factor):
    dx = centroids[t, 0] - centroids[s, 0]
    dy = centroids[t, 1] - centroids[s, 1]
    dz = centroids[t, 2] - centroids[s, 2]
    return math.sqrt(dx * dx + dy * dy + dz * dz) < near_factor * max(diam[t], diam[s])


@njit(cache=True, parallel=True, nogil=True)
def assemble(corners, normals, areas, centroids, diam, triangles, tri_basis, tri_coef,
             test_tris, src_tris, row_map, col_map, n_rows, n_cols, ks,
             bary, w, bary_n, w_n, touch_bary, touch_w, touch_n, colors, n_colors,
             near_factor, want_n, symmetric):
    """Dense tested operators over the given test/source triangle subsets.

    Returns (L, K, NL, NK), each (nk, n_rows, n_cols); NL and NK are empty unless
    ``want_n``.  Test triangles are processed colour by colour; triangles of
    one colour share no basis function, so their rows are disjoint and the
    summation order does not depend on the thread count.

    With ``symmetric`` (identical test and source sets) only pairs with
    ``si >= ti`` are integrated and L, K are completed from the transpose;
    near pairs are integrated in both orientations and averaged.
    """
    nk = ks.shape[0]
    L = np.zeros((nk, n_rows, n_cols), dtype=np.complex128)
    K = np.zeros((nk, n_rows, n_cols), dtype=np.complex128)
    nr_n = n_rows if want_n else 0
    nc_n = n_cols if want_n else 0
    NL = np.zeros((nk, nr_n, nc_n), dtype=np.complex128)
    NK = np.zeros((nk, nr_n, nc_n), dtype=np.complex128)
    pts, pts_n, touch_pts = _prepare(corners, bary, bary_n, touch_bary, touch_n)
    ik2 = 1.0 / (ks * ks)
    for col in range(n_colors):
        members = np.nonzero(colors == col)[0]
        for mi in prange(members.shape[0]):
            ti = members[mi]
            t = test_tris[ti]
            lvec = np.empty((nk, 3, 3), dtype=np.complex128)
            lsca = np.empty((nk, 3, 3), dtype=np.complex128)
            kl = np.empty((nk, 3, 3), dtype=np.complex128)
            nlv = np.empty((nk, 3, 3), dtype=np.complex128)
            nlg = np.empty((nk, 3, 3), dtype=np.complex128)
            nkl = np.empty((nk, 3, 3), dtype=np.complex128)
            lvec2 = np.empty((nk, 3, 3), dtype=np.complex128)
            lsca2 = np.empty((nk, 3, 3), dtype=np.complex128)
            kl2 = np.empty((nk, 3, 3), dtype=np.complex128)
            nlv2 = np.empty((nk, 3, 3), dtype=np.complex128)
            nlg2 = np.empty((nk, 3, 3), dtype=np.complex128)
            nkl2 = np.empty((nk, 3, 3), dtype=np.complex128)
            s0 = ti if symmetric else 0
            for si in range(s0, src_tris.shape[0]):
                s = src_tris[si]
                near = _is_near(centroids, diam, t, s, near_factor)
                _pair_into(t, s, corners, normals, areas, triangles, pts, w, pts_n, w_n,
                           touch_pts, touch_w, touch_n, near, ks, lvec, lsca, kl, nlv, nlg, nkl)
                half = 1.0
                if symmetric:
                    if s == t:
                        half = 0.5
                    elif near:
                        # reverse orientation, transposed, averaged in
                        _pair_into(s, t, corners, normals, areas, triangles, pts, w, pts_n, w_n,
                                   touch_pts, touch_w, touch_n, near, ks, lvec2, lsca2, kl2, nlv2, nlg2, nkl2)
                        for kk in range(nk):
                            for i in range(3):
                                for j in range(3):
                                    lvec[kk, i, j] = 0.5 * (lvec[kk, i, j] + lvec2[kk, j, i])
                                    lsca[kk, i, j] = 0.5 * (lsca[kk, i, j] + lsca2[kk, j, i])
                                    kl[kk, i, j] = 0.5 * (kl[kk, i, j] + kl2[kk, j, i])
                for i in range(3):
                    m = row_map[tri_basis[t, i]]
                    if m < 0:
                        continue
                    for j in range(3):
                        n = col_map[tri_basis[s, j]]
                        if n < 0:
                            continue
                        cc = half * tri_coef[t, i] * tri_coef[s, j]
                        for kk in range(nk):
                            L[kk, m, n] += cc * (lvec[kk, i, j] - ik2[kk] * lsca[kk, i, j])
                            K[kk, m, n] += cc * kl[kk, i, j]
                            if want_n:
                                NL[kk, m, n] += cc * (nlv[kk, i, j] + ik2[kk] * nlg[kk, i, j])
                                NK[kk, m, n] += cc * nkl[kk, i, j]
    if symmetric:
        for kk in range(nk):
            for m in range(n_rows):
                for n in range(m, n_cols):
                    a = L[kk, m, n] + L[kk, n, m]
                    L[kk, m, n] = a
                    L[kk, n, m] = a
                    b = K[kk, m, n] + K[kk, n, m]
                    K[kk, m, n] = b
                    K[kk, n, m] = b
    return L, K, NL, NK
