"""Far-field radiation of RWG-expanded surface currents, RCS and pattern CSVs.

Far-field convention: ``E_far(r^) = lim_{r->inf} r exp(+j k r) E_s(r)``
(consistent with exp(+j w t)); RCS is ``4 pi |E_far|^2 / |E_inc|^2``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import RwgBasis
from .quadrature import MediumParams, triangle_rule

__all__ = [
    "FarFieldPattern",
    "spherical_unit_vectors",
    "radiate",
    "cut_angles",
    "pattern_cut",
    "write_pattern_csv",
    "read_pattern_csv",
    "pattern_difference",
    "rcs_deviation_db",
]

CONVENTION = "E_far = lim r*exp(+jkr)*E_s; time dependence exp(+jwt)"


def spherical_unit_vectors(theta, phi):
    """Return (r_hat, theta_hat, phi_hat), each of shape (n, 3)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    r = np.stack([st * cp, st * sp, ct], axis=-1)
    t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    p = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return r, t, p


@dataclass(frozen=True, eq=False)
class FarFieldPattern:
    theta: np.ndarray
    phi: np.ndarray
    E_theta: np.ndarray
    E_phi: np.ndarray
    frequency: float
    incident_amplitude: float = 1.0
    solver: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def sigma(self) -> np.ndarray:
        """Bistatic RCS in m^2."""
        return 4 * np.pi * (np.abs(self.E_theta) ** 2 + np.abs(self.E_phi) ** 2) / self.incident_amplitude**2

    @property
    def sigma_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.sigma)

    @property
    def vectors(self) -> np.ndarray:
        """Complex far-field vectors, shape (n, 3)."""
        _, t, p = spherical_unit_vectors(self.theta, self.phi)
        return self.E_theta[:, None] * t + self.E_phi[:, None] * p

    def __len__(self):
        return len(self.theta)


def _current_moments(basis: RwgBasis, coeffs: np.ndarray, k: complex, rhat: np.ndarray, rule) -> np.ndarray:
    """int sum_n c_n f_n(r') exp(+j k r^.r') dS' for each direction (n_dir, 3)."""
    mesh = basis.mesh
    pts = rule.points(mesh.corners)  # (F, q, 3)
    # current density at quadrature points
    c = basis.tri_coef * coeffs[basis.tri_basis]  # (F, 3)
    u = pts[:, :, None, :] - mesh.corners[:, None, :, :]  # (F, q, 3, 3)
    Jq = np.einsum("fi,fqia->fqa", c, u)
    wq = rule.weights[None, :] * mesh.areas[:, None]
    phase = np.exp(1j * k * np.einsum("da,fqa->dfq", rhat, pts))
    return np.einsum("dfq,fq,fqa->da", phase, wq, Jq)


def radiate(basis: RwgBasis, J, M=None, medium: MediumParams = None, theta=None, phi=None,
            *, incident_amplitude: float = 1.0, solver: str = "", rule=None) -> FarFieldPattern:
    """Far field of the electric current ``J`` (and magnetic current ``M``).

    ``J`` expands ``n x H`` and ``M`` expands ``E x n`` on the RWG basis,
    both radiating in the homogeneous ``medium``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
    J = np.asarray(J, dtype=complex)
    if J.shape != (basis.n,):
        raise ValueError(f"J has length {J.shape}, basis has {basis.n} functions")
    rule = rule or triangle_rule(7)
    k, eta = medium.k, medium.eta
    rhat, th, ph = spherical_unit_vectors(theta, phi)
    N = _current_moments(basis, J, k, rhat, rule)
    # -j w mu / (4 pi) = -j k eta / (4 pi)
    Eth = -1j * k * eta / (4 * np.pi) * np.einsum("da,da->d", N, th)
    Eph = -1j * k * eta / (4 * np.pi) * np.einsum("da,da->d", N, ph)
    if M is not None:
        M = np.asarray(M, dtype=complex)
        if M.shape != (basis.n,):
            raise ValueError("M has the wrong length")
        Lm = _current_moments(basis, M, k, rhat, rule)
        rxL = np.cross(rhat, Lm)
        Eth = Eth + 1j * k / (4 * np.pi) * np.einsum("da,da->d", rxL, th)
        Eph = Eph + 1j * k / (4 * np.pi) * np.einsum("da,da->d", rxL, ph)
    return FarFieldPattern(theta, np.array(phi), Eth, Eph, medium.frequency, incident_amplitude, solver)


def cut_angles(phi_deg: float | None = None, theta_deg: float | None = None, resolution_deg: float = 1.0):
    """(theta, phi) in radians along a half great-circle cut.

    A phi-cut sweeps theta over [0, 180] degrees; a theta-cut sweeps phi over
    [0, 360] degrees.
    """
    if (phi_deg is None) == (theta_deg is None):
        raise ValueError("give exactly one of phi_deg or theta_deg")
    if phi_deg is not None:
        n = int(round(180.0 / resolution_deg)) + 1
        th = np.linspace(0.0, 180.0, n)
        return np.radians(th), np.full(n, np.radians(phi_deg))
    n = int(round(360.0 / resolution_deg)) + 1
    ph = np.linspace(0.0, 360.0, n)
    return np.full(n, np.radians(theta_deg)), np.radians(ph)


def pattern_cut(field_fn, phi_deg: float | None = None, theta_deg: float | None = None,
                resolution_deg: float = 1.0) -> FarFieldPattern:
    """Evaluate ``field_fn(theta, phi) -> FarFieldPattern`` on one cut."""
    th, ph = cut_angles(phi_deg, theta_deg, resolution_deg)
    return field_fn(th, ph)


_COLUMNS = ["theta_deg", "phi_deg", "re_E_theta", "im_E_theta", "re_E_phi", "im_E_phi", "sigma_dBsm"]


def write_pattern_csv(pattern: FarFieldPattern, path, extra: dict | None = None) -> Path:
    path = Path(path)
    header = {
        "frequency_hz": repr(float(pattern.frequency)),
        "solver": pattern.solver,
        "incident_amplitude": repr(float(pattern.incident_amplitude)),
        "convention": CONVENTION,
    }
    header.update({k: str(v) for k, v in (extra or {}).items()})
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    sdb = pattern.sigma_db
    for i in range(len(pattern)):
        w.writerow([
            repr(float(np.degrees(pattern.theta[i]))), repr(float(np.degrees(pattern.phi[i]))),
            repr(float(pattern.E_theta[i].real)), repr(float(pattern.E_theta[i].imag)),
            repr(float(pattern.E_phi[i].real)), repr(float(pattern.E_phi[i].imag)),
            repr(float(sdb[i])),
        ])
    path.write_text(buf.getvalue())
    return path


def read_pattern_csv(path) -> FarFieldPattern:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            else:
                rows.append(line)
    data = list(csv.reader(rows))
    if not data or data[0] != _COLUMNS:
        raise ValueError(f"{path}: unexpected CSV columns")
    arr = np.array(data[1:], dtype=float).reshape(-1, len(_COLUMNS))
    return FarFieldPattern(
        np.radians(arr[:, 0]), np.radians(arr[:, 1]),
        arr[:, 2] + 1j * arr[:, 3], arr[:, 4] + 1j * arr[:, 5],
        float(meta.get("frequency_hz", "nan")),
        float(meta.get("incident_amplitude", "1")),
        meta.get("solver", ""),
        meta,
    )


def pattern_difference(a: FarFieldPattern, b: FarFieldPattern, atol_deg: float = 1e-9) -> dict:
    """Relative L2 and max differences of the complex far-field vectors (b is the reference)."""
    if len(a) != len(b) or not (
        np.allclose(a.theta, b.theta, atol=np.radians(atol_deg))
        and np.allclose(np.mod(a.phi - b.phi + np.pi, 2 * np.pi) - np.pi, 0, atol=np.radians(atol_deg))
    ):
        raise ValueError("patterns are sampled on different direction grids")
    va, vb = a.vectors, b.vectors
    diff = np.linalg.norm(va - vb, axis=1)
    ref = np.linalg.norm(vb, axis=1)
    return {
        "l2_rel": float(np.linalg.norm(diff) / np.linalg.norm(ref)) if np.any(ref) else float(np.linalg.norm(diff)),
        "max_rel": float(diff.max() / ref.max()) if ref.max() > 0 else float(diff.max()),
        "max_db": float(np.max(np.abs(a.sigma_db - b.sigma_db))) if np.all(ref > 0) and np.all(np.linalg.norm(va, axis=1) > 0) else float("inf"),
    }


def rcs_deviation_db(a: FarFieldPattern, ref: FarFieldPattern, window_db: float = 30.0) -> tuple[float, int]:
    """Worst ``|sigma_a - sigma_ref|`` in dB over directions where the reference
    RCS lies within ``window_db`` of its peak; returns (deviation, index)."""
    if len(a) != len(ref):
        raise ValueError("patterns are sampled on different direction grids")
    rdb = ref.sigma_db
    mask = rdb >= np.max(rdb) - window_db
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(mask, np.abs(a.sigma_db - rdb), -np.inf)
    i = int(np.argmax(dev))
    return float(dev[i]), i
