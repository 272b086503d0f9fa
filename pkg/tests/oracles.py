"""Independent reference computations used by the tests.

Nothing here calls the package's quadrature: integrals are done with
scipy's adaptive quadrature, polar decompositions or mpmath.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate


def triangle_area(c) -> float:
    c = np.asarray(c, dtype=float)
    return 0.5 * float(np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0])))


def adaptive_triangle_integral(c, f, tol: float = 1e-13) -> float:
    """Integral of the scalar ``f(point)`` over triangle ``c`` by nested adaptive quadrature."""
    c = np.asarray(c, dtype=float)
    e1, e2 = c[1] - c[0], c[2] - c[0]
    jac = 2 * triangle_area(c)

    def inner(u):
        return integrate.quad(lambda v: f(c[0] + u * e1 + v * e2), 0.0, 1.0 - u, epsabs=tol, epsrel=tol,
                              limit=200)[0]

    return jac * integrate.quad(inner, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)[0]


def polar_inplane_integrals(c, rho) -> tuple[float, np.ndarray]:
    """``int 1/R dS`` and ``int (r' - rho)/R dS`` for ``rho`` inside the triangle's plane.

    Splits the triangle into three sub-triangles with apex ``rho``; in polar
    coordinates the radial integral is exact, leaving a smooth angular one.
    """
    c = np.asarray(c, dtype=float)
    rho = np.asarray(rho, dtype=float)
    nrm = np.cross(c[1] - c[0], c[2] - c[0])
    nrm /= np.linalg.norm(nrm)
    I0, Iv = 0.0, np.zeros(3)
    for i in range(3):
        a, b = c[i], c[(i + 1) % 3]
        ua, ub = a - rho, b - rho
        sign = np.sign(np.dot(np.cross(ua, ub), nrm))
        if sign == 0:
            continue
        ex = ua / np.linalg.norm(ua)
        ey = np.cross(nrm, ex)
        th_b = math.atan2(np.dot(ub, ey), np.dot(ub, ex))
        edge = b - a
        # distance from rho along direction theta to the line a + s*edge
        def rmax(th):
            d = math.cos(th) * ex + math.sin(th) * ey
            m = np.array([d, -edge]).T
            sol = np.linalg.lstsq(m, a - rho, rcond=None)[0]
            return sol[0]

        lo, hi = (0.0, th_b) if th_b > 0 else (th_b, 0.0)
        I0 += sign * integrate.quad(rmax, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        for j in range(3):
            g = lambda th: rmax(th) ** 2 / 2 * (math.cos(th) * ex[j] + math.sin(th) * ey[j])
            val = integrate.quad(g, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
            Iv[j] += sign * val
    return I0, Iv


def green_mp(r, r_src, k, dps: int = 30) -> complex:
    """exp(-j k R)/(4 pi R) evaluated in extended precision."""
    with mpmath.workdps(dps):
        R = mpmath.sqrt(sum((mpmath.mpf(float(a)) - mpmath.mpf(float(b))) ** 2 for a, b in zip(r, r_src)))
        kk = mpmath.mpc(complex(k).real, complex(k).imag)
        return complex(mpmath.exp(-1j * kk * R) / (4 * mpmath.pi * R))


def subdivide(c, levels: int) -> np.ndarray:
    """Midpoint subdivision of a triangle into 4**levels pieces."""
    tris = [np.asarray(c, dtype=float)]
    for _ in range(levels):
        new = []
        for a, b, d in tris:
            ab, bd, da = (a + b) / 2, (b + d) / 2, (d + a) / 2
            new += [np.array([a, ab, da]), np.array([ab, b, bd]), np.array([da, bd, d]), np.array([ab, bd, da])]
        tris = new
    return np.array(tris)


def _gauss_triangle(c, levels: int, n: int):
    """Points and weights of a composite Gauss rule (collapsed n x n product) over triangle ``c``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = (x + 1) / 2, w / 2
    U, V = np.meshgrid(x, x, indexing="ij")
    Wt = np.outer(w, w) * (1 - U)
    s, t = U.ravel(), (V * (1 - U)).ravel()
    bary = np.stack([1 - s - t, s, t], axis=1)
    pts, wts = [], []
    for sub in subdivide(c, levels):
        pts.append(bary @ sub)
        wts.append(Wt.ravel() * 2 * triangle_area(sub))
    return np.vstack(pts), np.concatenate(wts)


def brute_pair(ct, cs, k, levels: int = 2, n: int = 8):
    """Galerkin L (total) and K matrices between the local half-RWG functions of two
    well-separated triangles, by composite Gauss quadrature on both sides."""
    ct, cs = np.asarray(ct, dtype=float), np.asarray(cs, dtype=float)

    def half(c, P):
        lens = np.linalg.norm(c[[2, 0, 1]] - c[[1, 2, 0]], axis=1)
        A = triangle_area(c)
        V = (lens / (2 * A))[None, :, None] * (P[:, None, :] - c[None])
        D = np.tile(lens / A, (len(P), 1))
        return V, D

    P, Wp = _gauss_triangle(ct, levels, n)
    Q, Wq = _gauss_triangle(cs, levels, n)
    V, D = half(ct, P)
    U, E = half(cs, Q)
    L = np.zeros((3, 3), dtype=complex)
    K = np.zeros((3, 3), dtype=complex)
    for s in range(0, len(P), 256):
        sl = slice(s, s + 256)
        R = P[sl, None] - Q[None]
        r = np.linalg.norm(R, axis=-1)
        G = np.exp(-1j * k * r) / (4 * np.pi * r) * Wp[sl, None] * Wq[None]
        L += np.einsum("pq,pia,qja->ij", G, V[sl], U) - np.einsum("pq,pi,qj->ij", G, D[sl], E) / k**2
        gG = (-(1 + 1j * k * r) * G / r**2)[..., None] * R
        K += _k_chunk(gG, V[sl], U)
    return L, K


def _k_chunk(gG, V, U):
    out = np.zeros((3, 3), dtype=complex)
    for j in range(3):
        c = np.cross(gG, U[None, :, j, :])
        out[:, j] = np.einsum("pqa,pia->i", c, V)
    return out
