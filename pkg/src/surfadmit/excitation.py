"""Incident plane waves and their Galerkin-tested boundary traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import RwgBasis
from .quadrature import MediumParams, QuadratureRule, triangle_rule

__all__ = ["PlaneWave", "ExcitationVectors", "incident_fields", "test_field", "assemble_excitation"]


@dataclass(frozen=True)
class PlaneWave:
    """``E = amplitude * e_hat * exp(-j k k_hat . r)``."""

    k_hat: tuple[float, float, float] = (0.0, 0.0, 1.0)
    e_hat: tuple[float, float, float] = (1.0, 0.0, 0.0)
    amplitude: float = 1.0
    frequency: float = 1e8

    def __post_init__(self):
        k = np.asarray(self.k_hat, dtype=float)
        e = np.asarray(self.e_hat, dtype=float)
        if k.shape != (3,) or e.shape != (3,):
            raise ValueError("k_hat and e_hat must be 3-vectors")
        if abs(np.linalg.norm(k) - 1) > 1e-12 or abs(np.linalg.norm(e) - 1) > 1e-12:
            raise ValueError("k_hat and e_hat must be unit vectors")
        if abs(k @ e) > 1e-12:
            raise ValueError("e_hat must be perpendicular to k_hat")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")

    @classmethod
    def normalized(cls, k_hat, e_hat, amplitude: float = 1.0, frequency: float = 1e8) -> "PlaneWave":
        """Normalise ``k_hat`` and project ``e_hat`` onto its orthogonal plane first."""
        k = np.asarray(k_hat, dtype=float)
        k = k / np.linalg.norm(k)
        e = np.asarray(e_hat, dtype=float)
        e = e - (e @ k) * k
        n = np.linalg.norm(e)
        if n < 1e-12:
            raise ValueError("polarisation is parallel to the propagation direction")
        return cls(tuple(k), tuple(e / n), amplitude, frequency)

    def at(self, frequency: float) -> "PlaneWave":
        return PlaneWave(self.k_hat, self.e_hat, self.amplitude, frequency)


def incident_fields(pw: PlaneWave, r, medium: MediumParams):
    """Incident ``(E, H)`` at points ``r`` of shape (..., 3)."""
    r = np.asarray(r, dtype=float)
    k_hat = np.asarray(pw.k_hat)
    phase = pw.amplitude * np.exp(-1j * medium.k * (r @ k_hat))
    E = phase[..., None] * np.asarray(pw.e_hat)
    H = np.cross(k_hat, E) / medium.eta
    return E, H


def test_field(basis: RwgBasis, field, rule: QuadratureRule | None = None) -> np.ndarray:
    """``<f_m, field>`` where ``field`` maps (F, q, 3) points to (F, q, 3) values."""
    mesh = basis.mesh
    rule = rule or triangle_rule(7)
    pts = rule.points(mesh.corners)
    vals = field(pts)
    u = pts[:, :, None, :] - mesh.corners[:, None, :, :]
    loc = np.einsum("q,fqia,fqa->fi", rule.weights, u, vals) * (mesh.areas[:, None] * basis.tri_coef)
    out = np.zeros(basis.n, dtype=complex)
    np.add.at(out, basis.tri_basis.ravel(), loc.ravel())
    return out


@dataclass(frozen=True, eq=False)
class ExcitationVectors:
    """Tested incident traces.

    ``V_e = <f, n x E^i>`` and ``V_m = <f, n x n x H^i>`` drive the
    single-source system; ``E_t = <f, E^i>`` and ``H_t = <f, H^i>`` drive
    the two-current reference formulation.
    """

    V_e: np.ndarray
    V_m: np.ndarray
    E_t: np.ndarray
    H_t: np.ndarray

    def __len__(self):
        return len(self.V_e)


def assemble_excitation(basis: RwgBasis, pw: PlaneWave, medium: MediumParams,
                        rule: QuadratureRule | None = None) -> ExcitationVectors:
    normals = basis.mesh.normals[:, None, :]
    cache = {}

    def fields(pts):
        if "v" not in cache:
            cache["v"] = incident_fields(pw, pts, medium)
        return cache["v"]

    E_t = test_field(basis, lambda p: fields(p)[0], rule)
    H_t = test_field(basis, lambda p: fields(p)[1], rule)
    V_e = test_field(basis, lambda p: np.cross(normals, fields(p)[0]), rule)
    # n x n x H = -H_t for a unit normal
    V_m = -H_t
    return ExcitationVectors(V_e, V_m, E_t, H_t)
