"""Media, triangle quadrature rules, the Helmholtz Green's function and
Galerkin panel-pair integrals.

Time convention is exp(+j w t) throughout, so the outgoing kernel is
exp(-j k R) / (4 pi R) and passive media have Im(k) <= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from . import _kernels

__all__ = [
    "EPS0",
    "MU0",
    "C0",
    "ETA0",
    "MediumParams",
    "QuadratureRule",
    "triangle_rule",
    "green",
    "static_panel_integrals",
    "panel_pair_L",
    "panel_pair_K",
    "PanelL",
    "touching_rules",
]

C0 = 299792458.0
MU0 = 1.25663706212e-6
EPS0 = 1.0 / (MU0 * C0**2)
ETA0 = math.sqrt(MU0 / EPS0)


@dataclass(frozen=True)
class MediumParams:
    """Homogeneous medium at one angular frequency."""

    epsilon: complex
    mu: complex
    omega: float

    @classmethod
    def from_relative(cls, eps_r: complex = 1.0, mu_r: complex = 1.0, *, frequency: float) -> "MediumParams":
        return cls(complex(eps_r) * EPS0, complex(mu_r) * MU0, 2 * math.pi * frequency)

    @property
    def frequency(self) -> float:
        return self.omega / (2 * math.pi)

    @property
    def k(self) -> complex:
        k = complex(self.omega * np.sqrt(complex(self.mu) * complex(self.epsilon)))
        return -k if k.real < 0 else k

    @property
    def eta(self) -> complex:
        return complex(np.sqrt(complex(self.mu) / complex(self.epsilon)))

    @property
    def eps_r(self) -> complex:
        return complex(self.epsilon) / EPS0

    def check(self) -> None:
        if self.omega <= 0:
            raise ValueError("operators are not defined at zero frequency")
        if self.k.imag > 1e-12 * abs(self.k):
            raise ValueError(f"active medium (Im k = {self.k.imag:g} > 0)")


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle in barycentric coordinates.

    Weights are normalised to sum to one, so an integral over a triangle of
    area ``A`` is ``A * sum(w * f(points))``.
    """

    order: int
    degree: int
    bary: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    def points(self, corners: np.ndarray) -> np.ndarray:
        """Physical points for one (3, 3) or many (F, 3, 3) triangles."""
        return np.einsum("qi,...ij->...qj", self.bary, corners)


def _radon7():
    s = math.sqrt(15.0)
    a1, b1 = (9 - 2 * s) / 21, (6 + s) / 21
    a2, b2 = (9 + 2 * s) / 21, (6 - s) / 21
    w1, w2 = (155 + s) / 1200, (155 - s) / 1200
    bary = [[1 / 3, 1 / 3, 1 / 3]]
    bary += [[a1, b1, b1], [b1, a1, b1], [b1, b1, a1]]
    bary += [[a2, b2, b2], [b2, a2, b2], [b2, b2, a2]]
    w = [9 / 40] + [w1] * 3 + [w2] * 3
    return np.array(bary), np.array(w)


def _conical(n: int):
    # collapsed Gauss-Jacobi x Gauss-Legendre product, exact to degree 2n-1
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = (1 + xj) / 2
    wu = wj / 4
    t = (1 + xl) / 2
    wt = wl / 2
    U, T = np.meshgrid(u, t, indexing="ij")
    W = np.outer(wu, wt) * 2.0
    V = (1 - U) * T
    bary = np.stack([1 - U - V, U, V], axis=-1).reshape(-1, 3)
    return bary, W.ravel()


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """Triangle rule with ``order`` points.

    1, 3 and 7 points give the classical degree-1, 2 and 5 rules; any
    perfect square ``n*n`` gives a conical product rule of degree ``2n-1``.
    """
    if order == 1:
        bary, w, deg = np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]), 1
    elif order == 3:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        w, deg = np.full(3, 1 / 3), 2
    elif order == 7:
        bary, w = _radon7()
        deg = 5
    else:
        n = math.isqrt(order)
        if n * n != order:
            raise ValueError(f"no {order}-point triangle rule (use 1, 3, 7 or a perfect square)")
        bary, w = _conical(n)
        deg = 2 * n - 1
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order, deg, bary, w)


def _gauss01(n: int):
    x, w = roots_legendre(n)
    return (x + 1) / 2, w / 2


def _collapsed(vertex: int, n: int, toward_edge: bool, grading: int):
    # Duffy map collapsed at ``vertex``: u runs from the vertex (0) to the
    # opposite edge (1); grading clusters nodes at that end of u
    t, wt = _gauss01(n)
    v, wv = _gauss01(n)
    if toward_edge:
        u, du = 1 - t**grading, grading * t ** (grading - 1) * wt
    else:
        u, du = t**grading, grading * t ** (grading - 1) * wt
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(du, wv) * 2 * U
    bary = np.zeros((U.size, 3))
    a, b = (vertex + 1) % 3, (vertex + 2) % 3
    bary[:, vertex] = (1 - U).ravel()
    bary[:, a] = (U * (1 - V)).ravel()
    bary[:, b] = (U * V).ravel()
    return bary, W.ravel()


@lru_cache(maxsize=None)
def touching_rules(n_edge: int = 6, n_vertex: int = 5, n_self: int = 5):
    """Test-side rules for panels that touch their source panel.

    Slot 0 is the self pair, slots 1..3 an edge shared opposite local vertex
    ``i``, slots 4..6 a shared local vertex ``i``.  Each rule grades its nodes
    toward the shared entity, where the inner potentials have logarithmic
    gradients.  Returns padded ``(bary, weights, counts)`` arrays.
    """
    rules = []
    cen = np.full(3, 1 / 3)
    sub_b, sub_w = _collapsed(0, n_self, True, 3)
    parts_b, parts_w = [], []
    for i in range(3):
        corners = np.array([cen, np.eye(3)[(i + 1) % 3], np.eye(3)[(i + 2) % 3]])
        parts_b.append(sub_b @ corners)
        parts_w.append(sub_w / 3)
    rules.append((np.vstack(parts_b), np.concatenate(parts_w)))
    rules += [_collapsed(i, n_edge, True, 3) for i in range(3)]
    rules += [_collapsed(i, n_vertex, False, 2) for i in range(3)]
    m = max(len(w) for _, w in rules)
    bary = np.zeros((len(rules), m, 3))
    weights = np.zeros((len(rules), m))
    counts = np.zeros(len(rules), dtype=np.int64)
    for r, (b, w) in enumerate(rules):
        bary[r, : len(w)] = b
        weights[r, : len(w)] = w
        counts[r] = len(w)
    for a in (bary, weights, counts):
        a.setflags(write=False)
    return bary, weights, counts


def green(r, r_src, k: complex) -> complex:
    """exp(-j k R) / (4 pi R) for distinct points."""
    R = float(np.linalg.norm(np.asarray(r, dtype=float) - np.asarray(r_src, dtype=float)))
    if R == 0.0:
        raise ValueError("Green's function is singular at coincident points")
    return complex(np.exp(-1j * k * R) / (4 * np.pi * R))


def _corners(tri) -> np.ndarray:
    c = np.ascontiguousarray(tri, dtype=float)
    if c.shape != (3, 3):
        raise ValueError("triangle must be given as a (3, 3) array of corners")
    if np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0])) <= 1e-14 * np.ptp(c) ** 2:
        raise ValueError("degenerate triangle (zero area)")
    return c


def static_panel_integrals(tri, obs) -> tuple[float, np.ndarray]:
    """Closed-form ``I0 = int 1/R dS'`` and ``Iv = int (r' - rho)/R dS'``.

    ``rho`` is the projection of ``obs`` onto the triangle plane.  Valid on,
    near or far from the panel.
    """
    c = _corners(tri)
    nrm = np.cross(c[1] - c[0], c[2] - c[0])
    nrm /= np.linalg.norm(nrm)
    out = _kernels.static_terms(c, nrm, np.asarray(obs, dtype=float))
    return float(out[0]), np.array(out[1:4])


@dataclass(frozen=True)
class PanelL:
    """Vector- and scalar-potential parts of the L interaction.

    For half-functions ``f_i = l_i/(2A)(r - v_i)`` on the test triangle and
    ``f_j`` on the source triangle, ``vector[i, j] = <f_i, G f_j>`` and
    ``scalar[i, j] = <div f_i, G div f_j>``; the tested L operator is
    ``vector - scalar / k**2``.
    """

    vector: np.ndarray
    scalar: np.ndarray
    k: complex

    @property
    def total(self) -> np.ndarray:
        return self.vector - self.scalar / self.k**2


def _touch_slot(ct: np.ndarray, cs: np.ndarray) -> int:
    same = np.all(np.isclose(ct[:, None, :], cs[None, :, :], rtol=0, atol=1e-12 * np.ptp(ct)), axis=2)
    hit = same.any(axis=1)
    if hit.sum() == 3:
        return 0
    if hit.sum() == 2:
        return 1 + int(np.nonzero(~hit)[0][0])
    if hit.sum() == 1:
        return 4 + int(np.nonzero(hit)[0][0])
    return -1


def _pair(test_tri, src_tri, k, rule, near_rule, near):
    ct, cs = _corners(test_tri), _corners(src_tri)
    rule = rule or triangle_rule(7)
    near_rule = near_rule or triangle_rule(16)
    if near is None:
        dist = np.linalg.norm(ct.mean(0) - cs.mean(0))
        diam = max(np.linalg.norm(c[[1, 2, 0]] - c, axis=1).max() for c in (ct, cs))
        near = dist < _kernels.NEAR_FACTOR * diam
    tb, tw = rule.bary, rule.weights
    slot = _touch_slot(ct, cs) if near else -1
    if slot >= 0:
        bary, weights, counts = touching_rules()
        tb, tw = bary[slot, : counts[slot]], weights[slot, : counts[slot]]
    out = _kernels.pair_local(
        ct, cs, np.array([complex(k)]), rule.bary, rule.weights, near_rule.bary, near_rule.weights, bool(near),
        np.ascontiguousarray(tb), np.ascontiguousarray(tw),
    )
    lv, ls, kk = out[0], out[1], out[2]
    lt = np.linalg.norm(ct[[2, 0, 1]] - ct[[1, 2, 0]], axis=1)
    ls_ = np.linalg.norm(cs[[2, 0, 1]] - cs[[1, 2, 0]], axis=1)
    At = 0.5 * np.linalg.norm(np.cross(ct[1] - ct[0], ct[2] - ct[0]))
    As = 0.5 * np.linalg.norm(np.cross(cs[1] - cs[0], cs[2] - cs[0]))
    scale = np.outer(lt / (2 * At), ls_ / (2 * As))
    return lv[0] * scale, ls[0] * scale, kk[0] * scale


def panel_pair_L(test_tri, src_tri, k: complex, rule: QuadratureRule | None = None,
                 near_rule: QuadratureRule | None = None, near: bool | None = None) -> PanelL:
    """Galerkin L interaction between the local RWG half-functions of two triangles.

    Local function ``i`` is ``l_i/(2A)(r - v_i)`` with ``v_i`` the i-th corner
    and ``l_i`` the length of the opposite edge.  Self and nearby pairs use
    singularity extraction; ``near`` overrides the distance test.
    """
    if k == 0:
        raise ValueError("the scalar-potential term is undefined for k = 0")
    vec, sca, _ = _pair(test_tri, src_tri, k, rule, near_rule, near)
    return PanelL(vec, sca, complex(k))


def panel_pair_K(test_tri, src_tri, k: complex, rule: QuadratureRule | None = None,
                 near_rule: QuadratureRule | None = None, near: bool | None = None) -> np.ndarray:
    """Principal-value Galerkin K interaction ``<f_i, grad G x f_j>`` (3x3).

    The +-1/2 residue of the surface trace is not included; operators add
    it as a Gram-type term at assembly.
    """
    _, _, K = _pair(test_tri, src_tri, k, rule, near_rule, near)
    return K
