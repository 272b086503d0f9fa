"""Galerkin operator blocks on an RWG basis.

Coefficient conventions (outward unit normal ``n``):

* ``E`` coefficients expand ``n x E`` and ``H`` coefficients expand ``n x H``
  on the surface, so ``E_t = -n x sum(e_n f_n)``;
* the contrast current ``J = H~ - H`` therefore expands ``n x (H~ - H)``.
  With an outward normal the current that radiates the exterior field is
  ``-J``; :mod:`surfadmit.solver` applies that sign when radiating.

Raw tested operators (``<a, b>`` is the real L2 pairing over the surface):

* ``gram[m, n]  = <f_m, f_n>`` and ``mixed[m, n] = <f_m, n x f_n>`` (sparse)
* ``L[m, n]  = <f_m, (1 + grad div / k^2) S f_n>``
* ``K[m, n]  = <f_m, PV curl S f_n>`` (principal value, no residue)
* ``NL[m, n] = <f_m, n x (1 + grad div / k^2) S f_n>``
* ``NK[m, n] = <f_m, n x PV curl S f_n>``

``S`` is the single layer with kernel ``exp(-j k R) / (4 pi R)``.

Interior blocks (tangentially tested EFIE and MFIE on the inner side, MFIE
row multiplied by ``eta``)::

    K_e = 1/2 mixed - K      L_e = j k eta L
    L_m = -j k L             K_m = eta (1/2 mixed - K)

Exterior blocks of ``D E = L_out J + V_e`` and ``D~ H~ = K_out J + V_m``::

    D = gram,  D~ = mixed,  L_out = j k eta NL,  K_out = 1/2 mixed + K

where the residue of ``K_out`` is present only between functions on the
same closed surface.
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .mesh import RwgBasis
from .quadrature import MediumParams, QuadratureRule, touching_rules, triangle_rule

log = logging.getLogger(__name__)

__all__ = [
    "AssemblyOptions",
    "OperatorBlocks",
    "ExteriorBlocks",
    "CoefficientVector",
    "gram_matrix",
    "mixed_gram_matrix",
    "tested_operators",
    "interior_blocks_from",
    "assemble_interior_blocks",
    "assemble_exterior_blocks",
    "dump_blocks",
    "load_blocks",
]


@dataclass(frozen=True)
class AssemblyOptions:
    """Quadrature settings.

    ``far_points`` is the rule for both sides of well-separated pairs and
    the test side of near pairs; ``near_points`` samples the smooth kernel
    remainder after singularity extraction.  The ``*_points`` counts per
    direction control the graded test-side rules of touching pairs.
    """

    far_points: int = 7
    near_points: int = 16
    near_factor: float = _kernels.NEAR_FACTOR
    edge_points: int = 6
    vertex_points: int = 5
    self_points: int = 5

    @property
    def far_rule(self) -> QuadratureRule:
        return triangle_rule(self.far_points)

    @property
    def near_rule(self) -> QuadratureRule:
        return triangle_rule(self.near_points)


DEFAULT_OPTIONS = AssemblyOptions()


@dataclass(frozen=True)
class CoefficientVector:
    values: np.ndarray
    role: str

    ROLES = ("E", "H", "H~", "J", "M")

    def __post_init__(self):
        if self.role not in self.ROLES:
            raise ValueError(f"unknown coefficient role {self.role!r}")

    def __len__(self):
        return len(self.values)


def _local_products(basis: RwgBasis, rotate: bool) -> np.ndarray:
    """(F, 3, 3) local integrals of f_i . f_j (or f_i . n x f_j)."""
    mesh = basis.mesh
    rule = triangle_rule(7)
    pts = rule.points(mesh.corners)
    u = pts[:, :, None, :] - mesh.corners[:, None, :, :]
    v = np.cross(mesh.normals[:, None, None, :], u) if rotate else u
    loc = np.einsum("q,fqia,fqja->fij", rule.weights, u, v)
    c = basis.tri_coef
    return loc * mesh.areas[:, None, None] * c[:, :, None] * c[:, None, :]


def _scatter_local(basis: RwgBasis, loc: np.ndarray) -> sp.csr_matrix:
    tb = basis.tri_basis
    rows = np.broadcast_to(tb[:, :, None], loc.shape).ravel()
    cols = np.broadcast_to(tb[:, None, :], loc.shape).ravel()
    # duplicates are summed on conversion
    return sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(basis.n, basis.n)).tocsr()


def gram_matrix(basis: RwgBasis) -> sp.csr_matrix:
    """Real symmetric positive-definite ``<f_m, f_n>`` (at most 5 entries per row)."""
    return _scatter_local(basis, _local_products(basis, rotate=False))


def mixed_gram_matrix(basis: RwgBasis) -> sp.csr_matrix:
    """Real antisymmetric ``<f_m, n x f_n>``."""
    return _scatter_local(basis, _local_products(basis, rotate=True))


def _subset(basis: RwgBasis, sel):
    N = basis.n
    if sel is None:
        return np.arange(basis.mesh.n_triangles), np.arange(N), N
    sel = np.asarray(sel, dtype=np.int64)
    m = np.full(N, -1, dtype=np.int64)
    m[sel] = np.arange(len(sel))
    tris = np.unique(np.concatenate([basis.plus[sel], basis.minus[sel]]))
    return tris, m, len(sel)


def _edge_colouring(basis: RwgBasis, tris: np.ndarray) -> tuple[np.ndarray, int]:
    """Greedy colouring so that triangles sharing a basis function differ."""
    colours = np.full(len(tris), -1, dtype=np.int64)
    pos = {int(t): i for i, t in enumerate(tris)}
    for i, t in enumerate(tris):
        taken = set()
        for b in basis.tri_basis[t]:
            for other in (basis.plus[b], basis.minus[b]):
                j = pos.get(int(other))
                if j is not None and j != i:
                    taken.add(colours[j])
        c = 0
        while c in taken:
            c += 1
        colours[i] = c
    return colours, int(colours.max()) + 1


def tested_operators(basis: RwgBasis, ks, *, rows=None, cols=None, rotated: bool = False,
                     options: AssemblyOptions = DEFAULT_OPTIONS):
    """Assemble ``L`` and ``K`` (plus ``NL`` and ``NK`` when ``rotated``) for wavenumbers ``ks``.

    ``rows``/``cols`` restrict the test/source basis functions (global
    indices); each result has shape ``(len(ks), len(rows), len(cols))``.
    The work is spread over the active numba threads and the result does
    not depend on their number.
    """
    mesh = basis.mesh
    ks = np.atleast_1d(np.asarray(ks, dtype=np.complex128))
    if np.any(ks == 0):
        raise ValueError("operators are not defined for k = 0")
    ttris, rmap, nr = _subset(basis, rows)
    stris, cmap, nc = _subset(basis, cols)
    symmetric = not rotated and np.array_equal(ttris, stris) and np.array_equal(rmap, cmap)
    colours, n_colours = _edge_colouring(basis, ttris)
    far, near = options.far_rule, options.near_rule
    tb, tw, tn = touching_rules(options.edge_points, options.vertex_points, options.self_points)
    L, K, NL, NK = _kernels.assemble(
        mesh.corners, mesh.normals, mesh.areas, mesh.centroids, mesh.diameters, mesh.triangles,
        basis.tri_basis, basis.tri_coef, ttris, stris, rmap, cmap, nr, nc, ks,
        np.ascontiguousarray(far.bary), np.ascontiguousarray(far.weights),
        np.ascontiguousarray(near.bary), np.ascontiguousarray(near.weights),
        tb, tw, tn, colours, n_colours,
        float(options.near_factor), bool(rotated), bool(symmetric),
    )
    if rotated:
        return L, K, NL, NK
    return L, K


def _dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a)


@dataclass(frozen=True, eq=False)
class OperatorBlocks:
    """Interior-form blocks of the boundary relation ``[K_e L_e; L_m K_m] [E; H] = 0``."""

    K_e: np.ndarray
    L_e: np.ndarray
    L_m: np.ndarray
    K_m: np.ndarray
    medium: MediumParams
    basis: RwgBasis = field(repr=False)
    fill_time: float = 0.0

    @property
    def n(self) -> int:
        return self.K_e.shape[0]

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.K_e, self.L_e, self.L_m, self.K_m))

    def combined(self, alpha: float):
        """``(alpha L_e + (1-alpha) K_m, alpha K_e + (1-alpha) L_m)``."""
        return (alpha * self.L_e + (1 - alpha) * self.K_m,
                alpha * self.K_e + (1 - alpha) * self.L_m)

    def row_residuals(self, E: np.ndarray, H: np.ndarray) -> tuple[float, float]:
        """Relative residuals of the electric and magnetic rows separately."""
        r1 = self.K_e @ E + self.L_e @ H
        r2 = self.L_m @ E + self.K_m @ H
        s1 = np.linalg.norm(self.K_e @ E) + np.linalg.norm(self.L_e @ H)
        s2 = np.linalg.norm(self.L_m @ E) + np.linalg.norm(self.K_m @ H)
        return float(np.linalg.norm(r1) / s1), float(np.linalg.norm(r2) / s2)

    def residual(self, E: np.ndarray, H: np.ndarray, alpha: float = 0.5) -> float:
        """Relative residual of the alpha-combined row, the one ``H = Y E`` satisfies."""
        A, B = self.combined(alpha)
        r = A @ H + B @ E
        return float(np.linalg.norm(r) / (np.linalg.norm(A @ H) + np.linalg.norm(B @ E)))


@dataclass(frozen=True, eq=False)
class ExteriorBlocks:
    """Blocks of ``D E = L_out J + V_e`` and ``D~ H~ = K_out J + V_m``.

    ``D`` and ``D_tilde`` are sparse; ``L_out`` and ``K_out`` dense.
    """

    D: sp.csr_matrix
    D_tilde: sp.csr_matrix
    L_out: np.ndarray
    K_out: np.ndarray
    medium: MediumParams
    fill_time: float = 0.0

    @property
    def nbytes(self) -> int:
        sparse = sum(m.data.nbytes + m.indices.nbytes + m.indptr.nbytes for m in (self.D, self.D_tilde))
        return self.L_out.nbytes + self.K_out.nbytes + sparse


def interior_blocks_from(L: np.ndarray, K: np.ndarray, mixed, medium: MediumParams,
                         basis: RwgBasis, fill_time: float = 0.0) -> OperatorBlocks:
    k, eta = medium.k, medium.eta
    half = 0.5 * _dense(mixed) - K
    return OperatorBlocks(
        K_e=half,
        L_e=1j * k * eta * L,
        L_m=-1j * k * L,
        K_m=eta * half,
        medium=medium,
        basis=basis,
        fill_time=fill_time,
    )


def assemble_interior_blocks(basis: RwgBasis, medium: MediumParams, *, rows=None,
                             options: AssemblyOptions = DEFAULT_OPTIONS, mixed=None) -> OperatorBlocks:
    """Interior-form blocks for a closed surface filled with ``medium``.

    Called with the exterior medium the same routine yields the blocks of
    the equivalent problem.  ``rows`` restricts to one body's functions.
    """
    medium.check()
    t0 = time.perf_counter()
    L, K = tested_operators(basis, [medium.k], rows=rows, cols=rows, options=options)
    if mixed is None:
        mixed = mixed_gram_matrix(basis)
    if rows is not None:
        mixed = mixed[rows][:, rows]
    return interior_blocks_from(L[0], K[0], mixed, medium, basis, time.perf_counter() - t0)


def same_body_mask(basis: RwgBasis, rows, cols) -> np.ndarray:
    sid = basis.mesh.scatterer_id[basis.plus]
    rows = np.arange(basis.n) if rows is None else np.asarray(rows)
    cols = np.arange(basis.n) if cols is None else np.asarray(cols)
    return sid[rows][:, None] == sid[cols][None, :]


def assemble_exterior_blocks(basis: RwgBasis, medium: MediumParams, *, rows=None, cols=None,
                             options: AssemblyOptions = DEFAULT_OPTIONS, gram=None,
                             mixed=None) -> ExteriorBlocks:
    """Blocks of the tested exterior relations radiating the contrast current.

    ``rows``/``cols`` select a tile; the ``D`` matrices are restricted the
    same way.
    """
    medium.check()
    t0 = time.perf_counter()
    L, K, NL, _ = tested_operators(basis, [medium.k], rows=rows, cols=cols, rotated=True, options=options)
    gram = gram_matrix(basis) if gram is None else gram
    mixed = mixed_gram_matrix(basis) if mixed is None else mixed
    r = slice(None) if rows is None else rows
    c = slice(None) if cols is None else cols
    mixed_rc = _dense(mixed[r][:, c])
    residue = 0.5 * np.where(same_body_mask(basis, rows, cols), mixed_rc, 0.0)
    k, eta = medium.k, medium.eta
    return ExteriorBlocks(
        D=sp.csr_matrix(gram[r][:, c]),
        D_tilde=sp.csr_matrix(mixed[r][:, c]),
        L_out=1j * k * eta * NL[0],
        K_out=residue + K[0],
        medium=medium,
        fill_time=time.perf_counter() - t0,
    )


_MAGIC = b"SADMBLK1"
_HEADER = struct.Struct("<8sqqddddd")


def dump_blocks(path, blocks: dict[str, np.ndarray], medium: MediumParams) -> Path:
    """Write row-major complex128 blocks after a 64-byte header.

    Header: magic (8 bytes), N (int64), block count (int64), omega, Re/Im
    epsilon, Re/Im mu (float64), zero padding.  The block names follow the
    data as one comma-separated UTF-8 line.
    """
    path = Path(path)
    arrays = [_dense(a) for a in blocks.values()]
    N = arrays[0].shape[0]
    eps, mu = complex(medium.epsilon), complex(medium.mu)
    header = _HEADER.pack(_MAGIC, N, len(arrays), medium.omega, eps.real, eps.imag, mu.real, mu.imag)
    with open(path, "wb") as fh:
        fh.write(header.ljust(64, b"\0"))
        for a in arrays:
            if a.shape != (N, N):
                raise ValueError("all blocks must be N x N")
            fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())
        fh.write((",".join(blocks) + "\n").encode())
    return path


def load_blocks(path) -> tuple[dict[str, np.ndarray], MediumParams]:
    raw = Path(path).read_bytes()
    magic, N, nb, omega, er, ei, mr, mi = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a block dump")
    body = np.frombuffer(raw, dtype="<c16", count=nb * N * N, offset=64).reshape(nb, N, N)
    names = raw[64 + body.nbytes:].decode().strip().split(",")
    medium = MediumParams(complex(er, ei), complex(mr, mi), omega)
    return dict(zip(names, body.copy())), medium
