"""Scattering solvers for scenes of homogeneous dielectric bodies.

Three formulations share the same operator kernels:

* ``single_source``: one tangential-E unknown per basis function.  Each body
  contributes its differential surface admittance ``Y_s`` and the exterior
  field relations are averaged,
  ``[w (D - L_out Y_s) + (1-w) eta (D~ Y~ - K_out Y_s)] E = w V_e + (1-w) eta V_m``.
  The magnetic row is multiplied by the exterior impedance so that both
  rows carry the units of the electric one.
* ``pmchwt``: the classical two-current system with 2N unknowns.
* ``schur``: PMCHWT with the magnetic current eliminated through the
  exterior-medium magnetic relation.  The eliminated block is the EFIE
  operator of the exterior medium on the body's surface, which is singular
  at the resonances of the metal cavity of that shape.

Coefficient vectors are global (all bodies concatenated in basis order);
``SolveResult.for_scatterer`` slices them per body.
"""

from __future__ import annotations

import logging
import resource
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.linalg as la

from .admittance import COND_LIMIT, AdmittanceSet, FormulationError, condition_estimate, compute_admittance, compute_Ys
from .excitation import PlaneWave, assemble_excitation
from .mesh import RwgBasis, SurfaceMesh, build_rwg, merge_meshes
from .operators import (DEFAULT_OPTIONS, AssemblyOptions, gram_matrix, interior_blocks_from,
                        mixed_gram_matrix, tested_operators)
from .postprocess import FarFieldPattern, radiate
from .quadrature import MediumParams

log = logging.getLogger(__name__)

__all__ = [
    "Material",
    "Scatterer",
    "Scene",
    "SolveResult",
    "MemoryTracker",
    "OperatorCache",
    "solve_single_source",
    "solve_pmchwt",
    "solve_schur",
    "recover_fields",
    "SOLVERS",
]


@dataclass(frozen=True)
class Material:
    eps_r: complex = 1.0
    mu_r: complex = 1.0
    name: str = ""

    def __post_init__(self):
        eps, mu = complex(self.eps_r), complex(self.mu_r)
        if eps.imag > 0 or mu.imag > 0:
            raise ValueError(f"material {self.name or ''} is active: use Im(eps_r), Im(mu_r) <= 0 "
                             "for the exp(+jwt) convention")
        if eps == 0 or mu == 0:
            raise ValueError("eps_r and mu_r must be nonzero")

    def medium(self, frequency: float) -> MediumParams:
        return MediumParams.from_relative(self.eps_r, self.mu_r, frequency=frequency)


FREE_SPACE = Material(1.0, 1.0, "vacuum")


@dataclass(frozen=True)
class Scatterer:
    mesh: SurfaceMesh
    material: Material
    name: str = ""


def _winding_numbers(points: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Generalised winding number of each point with respect to a closed mesh."""
    a = mesh.corners[None, :, 0, :] - points[:, None, :]
    b = mesh.corners[None, :, 1, :] - points[:, None, :]
    c = mesh.corners[None, :, 2, :] - points[:, None, :]
    la_, lb, lc = (np.linalg.norm(x, axis=2) for x in (a, b, c))
    num = np.einsum("pfi,pfi->pf", a, np.cross(b, c))
    den = (la_ * lb * lc + np.einsum("pfi,pfi->pf", a, b) * lc
           + np.einsum("pfi,pfi->pf", b, c) * la_ + np.einsum("pfi,pfi->pf", c, a) * lb)
    return np.arctan2(num, den).sum(axis=1) / (2 * np.pi)


@dataclass(frozen=True, eq=False)
class Scene:
    """Disjoint homogeneous bodies in a homogeneous exterior."""

    scatterers: tuple[Scatterer, ...]
    exterior: Material = FREE_SPACE
    frequencies: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        if not self.scatterers:
            raise ValueError("a scene needs at least one scatterer")
        if any(f <= 0 for f in self.frequencies):
            raise ValueError("frequencies must be positive")
        self._check_disjoint()

    @classmethod
    def single(cls, mesh: SurfaceMesh, material: Material, exterior: Material = FREE_SPACE,
               frequencies=()) -> "Scene":
        """One scatterer per body label found in ``mesh``."""
        bodies = [Scatterer(mesh.body(b), material, f"body{b}") for b in mesh.bodies]
        return cls(tuple(bodies), exterior, tuple(frequencies))

    def _check_disjoint(self) -> None:
        boxes = [(s.mesh.vertices.min(0), s.mesh.vertices.max(0)) for s in self.scatterers]
        for i, si in enumerate(self.scatterers):
            for j in range(i + 1, len(self.scatterers)):
                (lo_i, hi_i), (lo_j, hi_j) = boxes[i], boxes[j]
                if np.any(hi_i < lo_j) or np.any(hi_j < lo_i):
                    continue
                sj = self.scatterers[j]
                wi = _winding_numbers(si.mesh.vertices, sj.mesh)
                wj = _winding_numbers(sj.mesh.vertices, si.mesh)
                if np.any(np.abs(wi) > 0.5) or np.any(np.abs(wj) > 0.5):
                    raise ValueError(f"scatterers {i} and {j} intersect")

    @cached_property
    def mesh(self) -> SurfaceMesh:
        return merge_meshes([s.mesh for s in self.scatterers])

    @cached_property
    def basis(self) -> RwgBasis:
        return build_rwg(self.mesh)

    @cached_property
    def body_rows(self) -> list[np.ndarray]:
        slices = self.basis.body_slices()
        return [slices[i] for i in range(len(self.scatterers))]

    @cached_property
    def gram(self):
        return gram_matrix(self.basis)

    @cached_property
    def mixed(self):
        return mixed_gram_matrix(self.basis)

    @property
    def n(self) -> int:
        return self.basis.n

    def exterior_medium(self, frequency: float) -> MediumParams:
        return self.exterior.medium(frequency)


class MemoryTracker:
    """Accounts the bytes of live dense matrices and records the peak."""

    def __init__(self):
        self._live: dict[str, int] = {}
        self._lock = threading.Lock()
        self.peak = 0

    def add(self, name: str, nbytes: int) -> None:
        with self._lock:
            self._live[name] = self._live.get(name, 0) + int(nbytes)
            self.peak = max(self.peak, sum(self._live.values()))

    def free(self, *names: str) -> None:
        with self._lock:
            for n in names:
                self._live.pop(n, None)

    @property
    def current(self) -> int:
        return sum(self._live.values())


def peak_rss_bytes() -> int:
    """Peak resident set size of this process (informational)."""
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss) * 1024


class OperatorCache:
    """Reuses raw operator tiles between solvers at one frequency.

    Keys are ``(k, p, q, rotated)``.  The rotated path skips the symmetric
    averaging of the plain one, so the two are never substituted for each
    other: a solver's result must not depend on what ran before it.
    """

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return self._store.get(key)

    def put(self, key, value) -> None:
        with self._lock:
            self._store[key] = value

    def discard(self, key) -> None:
        with self._lock:
            self._store.pop(key, None)

    def clear(self) -> None:
        with self._lock:
            self._store.clear()


def _tile(scene: Scene, k: complex, p: int, q: int, rotated: bool, options: AssemblyOptions,
          cache: OperatorCache | None):
    key = (complex(k), p, q, rotated)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    rows, cols = scene.body_rows[p], scene.body_rows[q]
    out = tuple(a[0] for a in tested_operators(scene.basis, [k], rows=rows, cols=cols,
                                               rotated=rotated, options=options))
    if cache is not None:
        cache.put(key, out)
    return out


def _as_index(rows: np.ndarray):
    """Contiguous index arrays become slices (views instead of copies)."""
    if len(rows) and rows[-1] - rows[0] + 1 == len(rows):
        return slice(int(rows[0]), int(rows[-1]) + 1)
    return rows


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Boundary coefficients of one solve.

    ``E`` expands ``n x E`` and ``H`` expands ``n x H`` on the boundary;
    ``H_tilde`` is the equivalent-problem field and ``J = H_tilde - H``
    the contrast current.  ``M`` (two-current solvers) expands ``E x n``.
    """

    solver: str
    scene: Scene = field(repr=False)
    frequency: float
    E: np.ndarray
    H: np.ndarray | None = None
    H_tilde: np.ndarray | None = None
    J: np.ndarray | None = None
    M: np.ndarray | None = None
    n_unknowns: int = 0
    timings: dict = field(default_factory=dict)
    peak_bytes: int = 0
    rss_bytes: int = 0
    cond: dict = field(default_factory=dict)
    alpha: float | None = None
    weight: float | None = None
    incident_amplitude: float = 1.0
    admittances: list[AdmittanceSet] | None = field(default=None, repr=False)

    def for_scatterer(self, i: int) -> dict[str, np.ndarray | None]:
        rows = self.scene.body_rows[i]
        return {name: (None if v is None else v[rows])
                for name, v in (("E", self.E), ("H", self.H), ("H_tilde", self.H_tilde),
                                ("J", self.J), ("M", self.M))}

    def radiating_currents(self) -> tuple[np.ndarray, np.ndarray | None]:
        """Physical electric current (and magnetic current) radiating outside."""
        if self.solver == "single_source":
            # J expands n x (H~ - H); the outward normal makes the source -J
            return -self.J, None
        return self.H, self.M

    def far_field(self, theta, phi) -> FarFieldPattern:
        J, M = self.radiating_currents()
        return radiate(self.scene.basis, J, M, self.scene.exterior_medium(self.frequency), theta, phi,
                       incident_amplitude=self.incident_amplitude, solver=self.solver)

    def summary(self) -> dict:
        """Flat, JSON-friendly record of this solve."""
        return {
            "solver": self.solver,
            "frequency_hz": self.frequency,
            "n_basis": self.scene.n,
            "n_unknowns": self.n_unknowns,
            "n_scatterers": len(self.scene.scatterers),
            "fill_s": self.timings.get("fill", 0.0),
            "solve_s": self.timings.get("solve", 0.0),
            "total_s": self.timings.get("total", 0.0),
            "peak_matrix_bytes": self.peak_bytes,
            "peak_rss_bytes": self.rss_bytes,
            "cond": {k: float(v) for k, v in self.cond.items()},
            "alpha": self.alpha,
            "weight": self.weight,
        }


def _pool(threads: int | None, n_tasks: int):
    return ThreadPoolExecutor(max_workers=max(1, min(threads or 1, n_tasks)))


def _factor(A: np.ndarray, what: str, frequency: float, overwrite: bool = True):
    anorm = float(np.abs(A).sum(axis=0).max())
    lu_piv = la.lu_factor(A, overwrite_a=overwrite, check_finite=False)
    cond = condition_estimate(lu_piv, anorm)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise FormulationError(f"{what} is singular (condition estimate {cond:.3g}) "
                               f"at frequency={frequency:.6g} Hz")
    return lu_piv, cond


def _scatterer_admittance(scene: Scene, p: int, frequency: float, alpha: float, options, cache: OperatorCache,
                          tracker: MemoryTracker) -> tuple[AdmittanceSet, tuple]:
    """Admittances of body ``p`` and its rotated exterior-medium self tile."""
    basis = scene.basis
    ix = _as_index(scene.body_rows[p])
    m_in = scene.scatterers[p].material.medium(frequency)
    m_out = scene.exterior_medium(frequency)
    mixed = scene.mixed[ix][:, ix]
    Li, Ki = _tile(scene, m_in.k, p, p, False, options, cache)
    tracker.add(f"in{p}", Li.nbytes + Ki.nbytes)
    inner = interior_blocks_from(Li, Ki, mixed, m_in, basis)
    del Li, Ki
    tracker.add(f"in{p}", inner.nbytes)
    Y, c_in = compute_admittance(inner, alpha, return_cond=True)
    tracker.add(f"adm{p}", Y.nbytes)
    del inner
    tracker.free(f"in{p}")
    own = _tile(scene, m_out.k, p, p, True, options, cache)
    tracker.add(f"self{p}", sum(a.nbytes for a in own))
    if m_in == m_out:
        # no contrast: reuse Y so that Y_s vanishes exactly
        Yt, c_out = Y, c_in
    else:
        outer = interior_blocks_from(own[0], own[1], mixed, m_out, basis)
        tracker.add(f"out{p}", outer.nbytes)
        Yt, c_out = compute_admittance(outer, alpha, return_cond=True)
        del outer
        tracker.free(f"out{p}")
    tracker.add(f"adm{p}", 2 * Yt.nbytes)
    return AdmittanceSet(Y, Yt, compute_Ys(Y, Yt), alpha, {"interior": c_in, "exterior": c_out}), own


def _fill_system_block(S: np.ndarray, scene: Scene, p: int, q: int, tile, Y_s: np.ndarray,
                       Y_tilde: np.ndarray | None, m_out: MediumParams, w: float, normal: bool) -> None:
    """Write the ``(p, q)`` block of the single-source system into ``S``."""
    k, eta = m_out.k, m_out.eta
    rp = _as_index(scene.body_rows[p])
    rq = _as_index(scene.body_rows[q])
    L, K, NL = tile[:3]
    # C = w L_out + (1-w) eta K_out
    if normal:
        C = (w * 1j * k * eta) * NL + ((1 - w) * eta) * K
    else:
        C = (-w * 1j * k * eta) * L + ((1 - w) * eta) * K
    if p == q:
        mixed = scene.mixed[rp][:, rq]
        C += ((1 - w) * eta * 0.5) * mixed.toarray()
        D = scene.gram[rp][:, rq] if normal else mixed
        S[rp, rq] = w * D.toarray() + ((1 - w) * eta) * (mixed @ Y_tilde)
    S[rp, rq] -= C @ Y_s


def solve_single_source(scene: Scene, pw: PlaneWave, alpha: float = 0.5, avg_weight: float = 0.5, *,
                        efie_testing: str = "normal", options: AssemblyOptions = DEFAULT_OPTIONS,
                        threads: int | None = None, cache: OperatorCache | None = None) -> SolveResult:
    """Averaged exterior relations driven by the differential surface admittance.

    ``efie_testing="normal"`` tests the exterior electric relation with
    ``n x`` (``D`` is the RWG Gram matrix).  ``"tangential"`` tests it like
    the admittance rows (``D`` becomes the mixed Gram matrix); this variant
    is less sensitive near cavity resonances of the body but singular when
    the contrast vanishes.

    Diagonal blocks are written as soon as a body's admittances exist, so
    only one self tile per worker is alive at a time.
    """
    if not 0.0 <= avg_weight <= 1.0:
        raise ValueError("avg_weight must lie in [0, 1]")
    if efie_testing not in ("normal", "tangential"):
        raise ValueError(f"efie_testing must be 'normal' or 'tangential', got {efie_testing!r}")
    f = pw.frequency
    t0 = time.perf_counter()
    tracker = MemoryTracker()
    own_cache = cache is None
    cache = OperatorCache() if own_cache else cache
    nb = len(scene.scatterers)
    m_out = scene.exterior_medium(f)
    k, eta = m_out.k, m_out.eta
    w = avg_weight
    normal = efie_testing == "normal"
    N = scene.n
    S = np.zeros((N, N), dtype=complex)
    tracker.add("system", S.nbytes)

    def body(p: int) -> AdmittanceSet:
        s, own = _scatterer_admittance(scene, p, f, alpha, options, cache, tracker)
        _fill_system_block(S, scene, p, p, own, s.Y_s, s.Y_tilde, m_out, w, normal)
        del own
        if own_cache:
            cache.discard((complex(k), p, p, True))
        tracker.free(f"self{p}")
        return s

    try:
        with _pool(threads, nb) as ex:
            sets = list(ex.map(body, range(nb)))
    except FormulationError as err:
        raise FormulationError(f"{err} (single_source)") from err
    for p in range(nb):
        for q in range(nb):
            if p == q:
                continue
            tile = _tile(scene, k, p, q, True, options, None)
            tracker.add("tile", sum(a.nbytes for a in tile[:3]))
            _fill_system_block(S, scene, p, q, tile, sets[q].Y_s, None, m_out, w, normal)
            del tile
            tracker.free("tile")
    exc = assemble_excitation(scene.basis, pw, m_out)
    V_e = exc.V_e if normal else -exc.E_t
    rhs = w * V_e + ((1 - w) * eta) * exc.V_m
    t_fill = time.perf_counter()
    lu_piv, cond = _factor(S, "single-source system", f)
    E = la.lu_solve(lu_piv, rhs)
    t_solve = time.perf_counter()
    del S, lu_piv
    tracker.free("system")
    J = np.empty(N, dtype=complex)
    for p, s in enumerate(sets):
        rows = scene.body_rows[p]
        J[rows] = s.Y_s @ E[rows]
    conds = {"system": cond}
    for p, s in enumerate(sets):
        conds.update({f"{key}_{p}": v for key, v in s.conds.items()})
    res = SolveResult("single_source", scene, f, E, J=J, n_unknowns=N,
                      timings={"fill": t_fill - t0, "solve": t_solve - t_fill,
                               "total": time.perf_counter() - t0},
                      peak_bytes=tracker.peak, rss_bytes=peak_rss_bytes(), cond=conds,
                      alpha=alpha, weight=avg_weight, incident_amplitude=pw.amplitude, admittances=sets)
    return recover_fields(res, sets)


def recover_fields(result: SolveResult, admittances: list[AdmittanceSet]) -> SolveResult:
    """Fill in ``H = Y E`` and ``H~ = Y~ E`` and check ``J = H~ - H``."""
    if result.solver != "single_source":
        raise ValueError("field recovery needs a single_source result")
    scene = result.scene
    H = np.empty_like(result.E)
    Ht = np.empty_like(result.E)
    for rows, s in zip(scene.body_rows, admittances):
        H[rows] = s.Y @ result.E[rows]
        Ht[rows] = s.Y_tilde @ result.E[rows]
    gap = np.abs(Ht - H - result.J).max()
    scale = max(np.abs(Ht).max(), np.abs(H).max(), 1e-300)
    if gap > 1e-10 * scale:
        raise FormulationError(f"contrast current is inconsistent with the admittances ({gap / scale:.2e})")
    return replace(result, H=H, H_tilde=Ht)


def _pmchwt_fill(scene: Scene, f: float, options, cache, tracker: MemoryTracker) -> np.ndarray:
    N = scene.n
    nb = len(scene.scatterers)
    m_out = scene.exterior_medium(f)
    w = m_out.omega
    Z = np.zeros((2 * N, 2 * N), dtype=complex)
    tracker.add("system", Z.nbytes)
    for p in range(nb):
        rp = _as_index(scene.body_rows[p])
        m_in = scene.scatterers[p].material.medium(f)
        for q in range(p, nb):
            rq = _as_index(scene.body_rows[q])
            L, K = _tile(scene, m_out.k, p, q, False, options, cache)[:2]
            tracker.add("tile", L.nbytes + K.nbytes)
            a = (1j * w * m_out.mu) * L
            b = K.copy()
            c = (1j * w * m_out.epsilon) * L
            if p == q:
                Li, Ki = _tile(scene, m_in.k, p, p, False, options, cache)
                tracker.add("tile_in", Li.nbytes + Ki.nbytes)
                a += (1j * w * m_in.mu) * Li
                b += Ki
                c += (1j * w * m_in.epsilon) * Li
                tracker.free("tile_in")
            tracker.add("tile", 3 * L.nbytes)
            jp, mp = rp, _shift(rp, N)
            jq, mq = rq, _shift(rq, N)
            _put(Z, jp, jq, a)
            _put(Z, jp, mq, b)
            _put(Z, mp, jq, -b)
            _put(Z, mp, mq, c)
            if q != p:
                # Galerkin reciprocity: L and K tiles are symmetric under transposition
                _put(Z, jq, jp, a.T)
                _put(Z, jq, mp, b.T)
                _put(Z, mq, jp, -b.T)
                _put(Z, mq, mp, c.T)
            tracker.free("tile")
    return Z


def _shift(idx, N: int):
    if isinstance(idx, slice):
        return slice(idx.start + N, idx.stop + N)
    return idx + N


def _put(Z: np.ndarray, r, c, block: np.ndarray) -> None:
    if isinstance(r, slice) and isinstance(c, slice):
        Z[r, c] = block
    else:
        Z[np.ix_(_indices(r), _indices(c))] = block


def _indices(idx) -> np.ndarray:
    return np.arange(idx.start, idx.stop) if isinstance(idx, slice) else idx


def solve_pmchwt(scene: Scene, pw: PlaneWave, *, options: AssemblyOptions = DEFAULT_OPTIONS,
                 threads: int | None = None, cache: OperatorCache | None = None) -> SolveResult:
    """Two-current reference solve with 2N unknowns.

    Unknowns are the physical surface currents ``J = n x H`` and
    ``M = E x n``; the rows test the tangential electric and magnetic
    continuity against the same RWG functions.
    """
    f = pw.frequency
    t0 = time.perf_counter()
    tracker = MemoryTracker()
    N = scene.n
    Z = _pmchwt_fill(scene, f, options, cache, tracker)
    exc = assemble_excitation(scene.basis, pw, scene.exterior_medium(f))
    rhs = np.concatenate([exc.E_t, exc.H_t])
    t_fill = time.perf_counter()
    lu_piv, cond = _factor(Z, "two-current system", f)
    x = la.lu_solve(lu_piv, rhs)
    t_solve = time.perf_counter()
    del Z, lu_piv
    tracker.free("system")
    Jp, M = x[:N], x[N:]
    return SolveResult("pmchwt", scene, f, -M, H=Jp, M=M, n_unknowns=2 * N,
                       timings={"fill": t_fill - t0, "solve": t_solve - t_fill,
                                "total": time.perf_counter() - t0},
                       peak_bytes=tracker.peak, rss_bytes=peak_rss_bytes(), cond={"system": cond},
                       incident_amplitude=pw.amplitude)


def solve_schur(scene: Scene, pw: PlaneWave, *, options: AssemblyOptions = DEFAULT_OPTIONS,
                threads: int | None = None, cache: OperatorCache | None = None) -> SolveResult:
    """Two-current system reduced to N unknowns.

    The magnetic current is taken from the exterior-medium magnetic relation
    ``j w eps_o L_o M = <f, H^i> + (K_o + 1/2 D~) J`` and substituted into the
    electric row.  ``cond['eliminated']`` reports the conditioning of
    ``j w eps_o L_o``, which degrades near the cavity resonances of the
    exterior medium.
    """
    f = pw.frequency
    t0 = time.perf_counter()
    tracker = MemoryTracker()
    N = scene.n
    nb = len(scene.scatterers)
    m_out = scene.exterior_medium(f)
    w = m_out.omega
    Eo = np.zeros((N, N), dtype=complex)   # j w eps_o L_o
    Q = np.zeros((N, N), dtype=complex)    # K_o + 1/2 D~
    Ksum = np.zeros((N, N), dtype=complex)  # K_o + K_i
    S = np.zeros((N, N), dtype=complex)    # j w (mu_o L_o + mu_i L_i)
    for name, arr in (("Eo", Eo), ("Q", Q), ("Ksum", Ksum), ("S", S)):
        tracker.add(name, arr.nbytes)
    for p in range(nb):
        rp = _as_index(scene.body_rows[p])
        m_in = scene.scatterers[p].material.medium(f)
        for q in range(p, nb):
            rq = _as_index(scene.body_rows[q])
            L, K = _tile(scene, m_out.k, p, q, False, options, cache)[:2]
            blocks = [(Eo, (1j * w * m_out.epsilon) * L), (Q, K), (Ksum, K), (S, (1j * w * m_out.mu) * L)]
            if p == q:
                Li, Ki = _tile(scene, m_in.k, p, p, False, options, cache)
                blocks[1] = (Q, K + 0.5 * scene.mixed[rp][:, rq].toarray())
                blocks[2] = (Ksum, K + Ki)
                blocks[3] = (S, blocks[3][1] + (1j * w * m_in.mu) * Li)
            for target, blk in blocks:
                _put(target, rp, rq, blk)
                if q != p:
                    _put(target, rq, rp, blk.T)
    exc = assemble_excitation(scene.basis, pw, m_out)
    t_fill = time.perf_counter()
    anorm = float(np.abs(Eo).sum(axis=0).max())
    lu_e = la.lu_factor(Eo, overwrite_a=True, check_finite=False)
    cond_e = condition_estimate(lu_e, anorm)
    if cond_e > COND_LIMIT:
        log.warning("eliminated block is numerically singular at %.6g Hz (cond %.3g)", f, cond_e)
    T = la.lu_solve(lu_e, np.column_stack([Q, exc.H_t]))
    del lu_e, Eo, Q
    tracker.free("Eo", "Q")
    tracker.add("T", T.nbytes)
    S += Ksum @ T[:, :N]
    rhs = exc.E_t - Ksum @ T[:, N]
    lu_s, cond_s = _factor(S, "reduced system", f)
    J = la.lu_solve(lu_s, rhs)
    M = T[:, :N] @ J + T[:, N]
    t_solve = time.perf_counter()
    return SolveResult("schur", scene, f, -M, H=J, M=M, n_unknowns=N,
                       timings={"fill": t_fill - t0, "solve": t_solve - t_fill,
                                "total": time.perf_counter() - t0},
                       peak_bytes=tracker.peak, rss_bytes=peak_rss_bytes(),
                       cond={"system": cond_s, "eliminated": cond_e}, incident_amplitude=pw.amplitude)


SOLVERS = {
    "single_source": solve_single_source,
    "pmchwt": solve_pmchwt,
    "schur": solve_schur,
}
