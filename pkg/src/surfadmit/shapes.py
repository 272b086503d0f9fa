"""Canonical closed meshes used by tests, examples and the CLI, plus writers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import SurfaceMesh, merge_meshes

__all__ = [
    "tetrahedron",
    "icosahedron",
    "sphere",
    "sphere_array",
    "write_msh",
    "write_obj",
]


def _outward(vertices, tris, center=None):
    c = vertices[tris]
    center = vertices.mean(axis=0) if center is None else center
    nrm = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    flip = np.einsum("ij,ij->i", nrm, c.mean(axis=1) - center) < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def tetrahedron(size: float = 1.0) -> SurfaceMesh:
    v = size * np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    t = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return SurfaceMesh(v, t)


def icosahedron(radius: float = 1.0) -> SurfaceMesh:
    p = (1 + 5**0.5) / 2
    v = np.array(
        [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
         [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
         [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]],
        dtype=float,
    )
    v *= radius / np.linalg.norm(v[0])
    hull = ConvexHull(v)
    return SurfaceMesh(v, _outward(v, hull.simplices, np.zeros(3)))


def sphere(radius: float = 1.0, n_triangles: int = 320, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Near-uniform sphere triangulation with exactly ``n_triangles`` faces.

    Vertices lie on a Fibonacci lattice; their convex hull has
    ``F = 2V - 4`` triangles, so ``n_triangles`` must be even and >= 4.
    """
    if n_triangles % 2 or n_triangles < 4:
        raise ValueError("n_triangles must be an even number >= 4")
    nv = n_triangles // 2 + 2
    i = np.arange(nv) + 0.5
    z = 1.0 - 2.0 * i / nv
    phi = np.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z * z)
    v = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    hull = ConvexHull(v)
    tris = _outward(v, hull.simplices, np.zeros(3))
    return SurfaceMesh(radius * v + np.asarray(center, dtype=float), tris)


def sphere_array(nx: int, ny: int, spacing: float, radius: float, n_triangles: int) -> SurfaceMesh:
    """Rectangular grid of identical spheres in the x-y plane, centred on the origin."""
    meshes = []
    for ix in range(nx):
        for iy in range(ny):
            c = ((ix - (nx - 1) / 2) * spacing, (iy - (ny - 1) / 2) * spacing, 0.0)
            meshes.append(sphere(radius, n_triangles, c))
    return merge_meshes(meshes)


def write_msh(mesh: SurfaceMesh, path) -> Path:
    """Gmsh ASCII v2 with physical tag = scatterer_id + 1."""
    path = Path(path)
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    lines += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.vertices.tolist())]
    lines += ["$EndNodes", "$Elements", str(mesh.n_triangles)]
    for j, (tri, tag) in enumerate(zip(mesh.triangles.tolist(), mesh.scatterer_id.tolist())):
        a, b, c = (t + 1 for t in tri)
        lines.append(f"{j + 1} 2 2 {tag + 1} {tag + 1} {a} {b} {c}")
    lines.append("$EndElements")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_obj(mesh: SurfaceMesh, path) -> Path:
    path = Path(path)
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    for b in mesh.bodies:
        lines.append(f"o body{b}")
        for a, bb, c in mesh.triangles[mesh.scatterer_id == b].tolist():
            lines.append(f"f {a + 1} {bb + 1} {c + 1}")
    path.write_text("\n".join(lines) + "\n")
    return path
