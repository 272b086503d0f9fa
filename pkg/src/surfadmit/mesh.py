"""Closed triangle surface meshes and the RWG basis built on them.

Vertex coordinates are in meters.  Triangles are stored with outward
orientation (right-hand rule gives the outward normal).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "MeshError",
    "MeshParseError",
    "MeshTopologyError",
    "SurfaceMesh",
    "RwgBasis",
    "load_mesh",
    "build_rwg",
    "eval_rwg",
    "merge_meshes",
]


class MeshError(ValueError):
    """Base class for mesh loading and validation failures."""


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    """Raised for open, non-manifold or inconsistently oriented surfaces.

    ``entities`` holds the offending edges (vertex-index pairs) or triangle
    indices, depending on ``kind``.
    """

    def __init__(self, message: str, kind: str, entities: list):
        super().__init__(message)
        self.kind = kind
        self.entities = entities


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    scatterer_id: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (F, 3), got {t.shape}")
        sid = self.scatterer_id
        sid = np.zeros(len(t), dtype=np.int64) if sid is None else np.asarray(sid, dtype=np.int64)
        if sid.shape != (len(t),):
            raise MeshError("scatterer_id must hold one label per triangle")
        v.setflags(write=False)
        t.setflags(write=False)
        sid.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "scatterer_id", sid)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """Longest edge of each triangle."""
        c = self.corners
        e = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, shape (E, 2)."""
        return np.unique(np.sort(_directed_edges(self.triangles), axis=1), axis=0)

    @property
    def bodies(self) -> list[int]:
        return sorted(set(self.scatterer_id.tolist()))

    def signed_volume(self, body: int | None = None) -> float:
        mask = slice(None) if body is None else self.scatterer_id == body
        c = self.corners[mask]
        return float(np.einsum("ij,ij->", c[:, 0], np.cross(c[:, 1], c[:, 2])) / 6.0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    def body(self, label: int) -> "SurfaceMesh":
        """Sub-mesh of one scatterer with compacted vertex numbering."""
        tris = self.triangles[self.scatterer_id == label]
        used, inverse = np.unique(tris, return_inverse=True)
        return SurfaceMesh(
            self.vertices[used],
            inverse.reshape(tris.shape),
            np.full(len(tris), label, dtype=np.int64),
        )

    def transformed(self, rotation=None, translation=None, scale: float = 1.0) -> "SurfaceMesh":
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return SurfaceMesh(v, self.triangles, self.scatterer_id)

    def validate(self) -> None:
        validate_topology(self.vertices, self.triangles)


def _directed_edges(tris: np.ndarray) -> np.ndarray:
    return np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])


def validate_topology(vertices: np.ndarray, triangles: np.ndarray) -> None:
    """Check the closed-manifold, orientation and non-degeneracy invariants.

    Raises MeshTopologyError naming the offending edges or triangles.
    """
    if not np.all(np.isfinite(vertices)):
        bad = np.nonzero(~np.all(np.isfinite(vertices), axis=1))[0]
        raise MeshTopologyError(f"non-finite vertex coordinates at {bad.tolist()}", "vertex", bad.tolist())
    if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise MeshTopologyError("triangle references a missing vertex", "triangle", [])
    c = vertices[triangles]
    area = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    scale = max(np.ptp(vertices, axis=0).max(), 1e-300) if len(vertices) else 1.0
    degenerate = np.nonzero(area <= 1e-14 * scale**2)[0]
    if degenerate.size:
        raise MeshTopologyError(
            f"degenerate (zero-area) triangles: {degenerate.tolist()}", "degenerate", degenerate.tolist()
        )

    directed = _directed_edges(triangles)
    undirected = np.sort(directed, axis=1)
    keys, counts = np.unique(undirected, axis=0, return_counts=True)
    boundary = keys[counts == 1]
    if len(boundary):
        edges = [tuple(map(int, e)) for e in boundary]
        raise MeshTopologyError(f"open surface, boundary edges: {edges}", "boundary", edges)
    nonmanifold = keys[counts > 2]
    if len(nonmanifold):
        edges = [tuple(map(int, e)) for e in nonmanifold]
        raise MeshTopologyError(f"non-manifold edges (shared by >2 triangles): {edges}", "non-manifold", edges)
    dkeys, dcounts = np.unique(directed, axis=0, return_counts=True)
    flipped = dkeys[dcounts > 1]
    if len(flipped):
        edges = sorted({tuple(sorted(map(int, e))) for e in flipped})
        raise MeshTopologyError(f"inconsistent orientation across edges: {edges}", "orientation", edges)


def _orient_outward(mesh: SurfaceMesh) -> SurfaceMesh:
    tris = mesh.triangles.copy()
    for b in mesh.bodies:
        if mesh.signed_volume(b) < 0.0:
            log.warning("scatterer %d is inward oriented; flipping its triangles", b)
            sel = mesh.scatterer_id == b
            tris[sel] = tris[sel][:, [0, 2, 1]]
    return SurfaceMesh(mesh.vertices, tris, mesh.scatterer_id)


def _parse_msh(text: str) -> SurfaceMesh:
    lines = [ln.strip() for ln in text.splitlines()]

    def section(name):
        try:
            start = lines.index(f"${name}")
            stop = lines.index(f"$End{name}", start)
        except ValueError:
            raise MeshParseError(f"missing ${name} section") from None
        return start, lines[start + 1 : stop]

    _, fmt = section("MeshFormat")
    if not fmt or not fmt[0].split()[0].startswith("2"):
        raise MeshParseError("only Gmsh ASCII format version 2 is supported")
    if fmt[0].split()[1] != "0":
        raise MeshParseError("binary Gmsh files are not supported")

    start, nodes = section("Nodes")
    try:
        nn = int(nodes[0])
        ids, xyz = [], []
        for i, ln in enumerate(nodes[1 : nn + 1]):
            parts = ln.split()
            ids.append(int(parts[0]))
            xyz.append([float(p) for p in parts[1:4]])
    except (ValueError, IndexError):
        raise MeshParseError(f"malformed node record near line {start + 2 + len(ids)}") from None
    if len(ids) != nn:
        raise MeshParseError(f"expected {nn} nodes, found {len(ids)}")
    index = {nid: i for i, nid in enumerate(ids)}

    start, elems = section("Elements")
    tris, tags = [], []
    try:
        ne = int(elems[0])
        for j, ln in enumerate(elems[1 : ne + 1]):
            parts = [int(p) for p in ln.split()]
            if parts[1] != 2:
                continue
            ntags = parts[2]
            tag = parts[3] if ntags > 0 else 0
            tris.append([index[p] for p in parts[3 + ntags : 6 + ntags]])
            tags.append(tag)
    except (ValueError, IndexError, KeyError):
        raise MeshParseError(f"malformed element record {j + 1}") from None
    if not tris:
        raise MeshParseError("no 3-node triangle elements found")
    # compact physical tags to 0..B-1
    _, sid = np.unique(tags, return_inverse=True)
    return SurfaceMesh(np.array(xyz), np.array(tris), sid)


def _parse_obj(text: str) -> SurfaceMesh:
    verts, tris, sid = [], [], []
    body = -1
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] in ("o", "g"):
                body += 1
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise MeshParseError(f"line {lineno}: only triangular faces are supported")
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                tris.append(idx)
                sid.append(max(body, 0))
        except MeshParseError:
            raise
        except ValueError:
            raise MeshParseError(f"line {lineno}: cannot parse {raw!r}") from None
    if not tris:
        raise MeshParseError("no faces found")
    _, sid = np.unique(sid, return_inverse=True)
    return SurfaceMesh(np.array(verts), np.array(tris), sid)


def load_mesh(path, format: str | None = None) -> SurfaceMesh:
    """Read a closed triangle mesh from a Gmsh v2 ``.msh`` or ``.obj`` file.

    Each Gmsh physical tag (or each ``o``/``g`` group of an OBJ file) becomes
    one scatterer.  Bodies with inward orientation are flipped with a
    warning; open or non-manifold surfaces raise ``MeshTopologyError``.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = path.read_text()
    if fmt in ("msh", "gmsh"):
        mesh = _parse_msh(text)
    elif fmt == "obj":
        mesh = _parse_obj(text)
    else:
        raise MeshParseError(f"unknown mesh format {fmt!r}")
    mesh.validate()
    return _orient_outward(mesh)


def merge_meshes(meshes) -> SurfaceMesh:
    """Concatenate meshes into one multi-body mesh, relabelling bodies 0..B-1."""
    verts, tris, sid = [], [], []
    offset = 0
    label = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        _, local = np.unique(m.scatterer_id, return_inverse=True)
        sid.append(local + label)
        label += local.max() + 1
        offset += m.n_vertices
    return SurfaceMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(sid))


@dataclass(frozen=True, eq=False)
class RwgBasis:
    """RWG functions, one per interior edge.

    On the plus triangle ``f_n = l_n/(2A+) (r - v+)``; on the minus triangle
    ``f_n = l_n/(2A-) (v- - r)``.  ``tri_basis[t, i]`` is the basis index of
    the edge opposite local vertex ``i`` of triangle ``t`` and ``tri_sign``
    is +1 where ``t`` is that function's plus triangle.
    """

    mesh: SurfaceMesh
    plus: np.ndarray
    minus: np.ndarray
    edge_vertices: np.ndarray
    free_plus: np.ndarray
    free_minus: np.ndarray
    length: np.ndarray
    tri_basis: np.ndarray
    tri_sign: np.ndarray

    @property
    def n(self) -> int:
        return len(self.plus)

    def __len__(self) -> int:
        return len(self.plus)

    @cached_property
    def tri_coef(self) -> np.ndarray:
        """Signed scale l/(2A) of each local half-function, shape (F, 3)."""
        return self.tri_sign * self.length[self.tri_basis] / (2.0 * self.mesh.areas[:, None])

    def body_slices(self) -> dict[int, np.ndarray]:
        sid = self.mesh.scatterer_id[self.plus]
        return {b: np.nonzero(sid == b)[0] for b in self.mesh.bodies}


def build_rwg(mesh: SurfaceMesh) -> RwgBasis:
    tris = mesh.triangles
    F = len(tris)
    # local edge i joins vertices i+1 -> i+2 (opposite vertex i)
    a = tris[:, [1, 2, 0]].ravel()
    b = tris[:, [2, 0, 1]].ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = lo * (tris.max() + 1) + hi
    uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts != 2):
        bad = np.nonzero(counts != 2)[0]
        raise MeshTopologyError("mesh is not closed", "boundary", bad.tolist())
    N = len(uniq)
    slot = np.arange(3 * F)
    plus_slot = np.empty(N, dtype=np.int64)
    minus_slot = np.empty(N, dtype=np.int64)
    is_plus = a < b
    if np.any(np.bincount(inv[is_plus], minlength=N) != 1):
        raise MeshTopologyError("inconsistent edge orientation", "orientation", [])
    plus_slot[inv[is_plus]] = slot[is_plus]
    minus_slot[inv[~is_plus]] = slot[~is_plus]

    plus, lp = np.divmod(plus_slot, 3)
    minus, lm = np.divmod(minus_slot, 3)
    ev = np.stack([lo[plus_slot], hi[plus_slot]], axis=1)
    length = np.linalg.norm(mesh.vertices[ev[:, 1]] - mesh.vertices[ev[:, 0]], axis=1)
    tri_basis = inv.reshape(F, 3)
    tri_sign = np.where(is_plus, 1.0, -1.0).reshape(F, 3)
    for arr in (plus, minus, ev, length, tri_basis, tri_sign):
        arr.setflags(write=False)
    return RwgBasis(
        mesh=mesh,
        plus=plus,
        minus=minus,
        edge_vertices=ev,
        free_plus=tris[plus, lp],
        free_minus=tris[minus, lm],
        length=length,
        tri_basis=tri_basis,
        tri_sign=tri_sign,
    )


def eval_rwg(basis: RwgBasis, n: int, tri: int, point) -> tuple[np.ndarray, float]:
    """Value and surface divergence of ``f_n`` at ``point`` on triangle ``tri``.

    Returns zeros when ``tri`` is outside the support of ``f_n``.
    """
    point = np.asarray(point, dtype=float)
    A = basis.mesh.areas[tri]
    l = basis.length[n]
    verts = basis.mesh.vertices
    if tri == basis.plus[n]:
        return l / (2 * A) * (point - verts[basis.free_plus[n]]), l / A
    if tri == basis.minus[n]:
        return l / (2 * A) * (verts[basis.free_minus[n]] - point), -l / A
    return np.zeros(3), 0.0
