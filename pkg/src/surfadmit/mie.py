"""Plane-wave scattering by a homogeneous dielectric sphere (Mie series).

Coefficients follow Bohren & Huffman, computed for an exp(-i w t) convention
and conjugated on output to the package-wide exp(+j w t) convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .postprocess import FarFieldPattern, spherical_unit_vectors
from .quadrature import C0

__all__ = [
    "MieSolution",
    "n_max",
    "spherical_jn_down",
    "spherical_yn_up",
    "mie_coefficients",
    "mie_far_field",
    "rayleigh_backscatter",
]


def n_max(x: float) -> int:
    """Series truncation order ``x + 4 x^(1/3) + 10``."""
    return int(math.ceil(x + 4.0 * x ** (1.0 / 3.0) + 10.0))


def spherical_jn_down(nmax: int, x: float) -> np.ndarray:
    """j_0..j_nmax(x) by Miller's downward recurrence, normalised with j_0."""
    if x == 0:
        out = np.zeros(nmax + 1)
        out[0] = 1.0
        return out
    start = nmax + int(math.sqrt(40 * (nmax + x))) + 20
    j = np.zeros(start + 2)
    j[start] = 1e-300
    for n in range(start, 0, -1):
        j[n - 1] = (2 * n + 1) / x * j[n] - j[n + 1]
        if abs(j[n - 1]) > 1e250:
            j[n - 1 :] *= 1e-250
    j0 = math.sin(x) / x
    j1 = math.sin(x) / x**2 - math.cos(x) / x
    scale = j0 / j[0] if abs(j0) > abs(j1) else j1 / j[1]
    return j[: nmax + 1] * scale


def spherical_yn_up(nmax: int, x: float) -> np.ndarray:
    y = np.empty(nmax + 1)
    y[0] = -math.cos(x) / x
    if nmax >= 1:
        y[1] = -math.cos(x) / x**2 - math.sin(x) / x
    for n in range(1, nmax):
        y[n + 1] = (2 * n + 1) / x * y[n] - y[n - 1]
    return y


def _log_derivative(nmax: int, z: complex) -> np.ndarray:
    """D_n(z) = psi_n'(z)/psi_n(z), downward recurrence."""
    start = max(nmax, int(abs(z))) + 16
    D = np.zeros(start + 1, dtype=complex)
    for n in range(start, 0, -1):
        D[n - 1] = n / z - 1.0 / (D[n] + n / z)
    return D[: nmax + 1]


def mie_coefficients(m: complex, x: float, nmax: int | None = None):
    """Bohren-Huffman a_n, b_n (n = 1..nmax) for relative index ``m`` (Im m >= 0)."""
    nmax = nmax or n_max(x)
    n = np.arange(1, nmax + 1)
    j = spherical_jn_down(nmax, x)
    y = spherical_yn_up(nmax, x)
    psi = x * j
    xi = x * (j + 1j * y)
    D = _log_derivative(nmax, m * x)[1:]
    da = D / m + n / x
    db = D * m + n / x
    a = (da * psi[1:] - psi[:-1]) / (da * xi[1:] - xi[:-1])
    b = (db * psi[1:] - psi[:-1]) / (db * xi[1:] - xi[:-1])
    return a, b


def _pi_tau(nmax: int, mu: np.ndarray):
    pi = np.zeros((nmax + 1, mu.size))
    tau = np.zeros((nmax + 1, mu.size))
    pi[1] = 1.0
    for n in range(1, nmax + 1):
        if n >= 2:
            pi[n] = ((2 * n - 1) * mu * pi[n - 1] - n * pi[n - 2]) / (n - 1)
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


@dataclass(frozen=True)
class MieSolution:
    radius: float
    eps_r: complex
    frequency: float
    a: np.ndarray
    b: np.ndarray

    @property
    def k(self) -> float:
        return 2 * math.pi * self.frequency / C0

    @property
    def x(self) -> float:
        return self.k * self.radius

    @property
    def n_max(self) -> int:
        return len(self.a)

    @property
    def last_term(self) -> float:
        """Magnitude of the final series term, a truncation diagnostic."""
        n = self.n_max
        return float((2 * n + 1) * (abs(self.a[-1]) + abs(self.b[-1])))

    @classmethod
    def solve(cls, radius: float, eps_r: complex, frequency: float, nmax: int | None = None) -> "MieSolution":
        x = 2 * math.pi * frequency / C0 * radius
        # exp(+jwt) permittivities have Im <= 0; the series wants Im m >= 0
        m = np.conj(np.sqrt(complex(eps_r)))
        a, b = mie_coefficients(m, x, nmax or n_max(x))
        return cls(radius, complex(eps_r), frequency, a, b)

    def amplitudes(self, scattering_angle: np.ndarray):
        """Bohren-Huffman S1, S2 (exp(-iwt) convention)."""
        mu = np.cos(np.atleast_1d(scattering_angle))
        n = np.arange(1, self.n_max + 1)
        pi, tau = _pi_tau(self.n_max, mu)
        f = ((2 * n + 1) / (n * (n + 1)))[:, None]
        S1 = np.sum(f * (self.a[:, None] * pi + self.b[:, None] * tau), axis=0)
        S2 = np.sum(f * (self.a[:, None] * tau + self.b[:, None] * pi), axis=0)
        return S1, S2

    def efficiencies(self):
        n = np.arange(1, self.n_max + 1)
        x2 = self.x**2
        qext = 2 / x2 * np.sum((2 * n + 1) * (self.a + self.b).real)
        qsca = 2 / x2 * np.sum((2 * n + 1) * (np.abs(self.a) ** 2 + np.abs(self.b) ** 2))
        return float(qext), float(qsca)

    def extinction_forward(self) -> float:
        """Extinction efficiency from the forward amplitude (optical theorem)."""
        S1, _ = self.amplitudes(np.array([0.0]))
        return float(4 / self.x**2 * S1[0].real)


def mie_far_field(radius: float, eps_r: complex, frequency: float, theta, phi, *,
                  k_hat=(0.0, 0.0, 1.0), e_hat=(1.0, 0.0, 0.0), amplitude: float = 1.0,
                  nmax: int | None = None) -> FarFieldPattern:
    """Far field of a sphere centred at the origin for plane-wave incidence.

    The incident field is ``amplitude * e_hat * exp(-j k k_hat . r)``; the
    returned components use the exp(+j w t) far-field convention.
    """
    sol = MieSolution.solve(radius, eps_r, frequency, nmax)
    if np.allclose(complex(eps_r), 1.0):
        zero = np.zeros(np.size(theta), dtype=complex)
        return FarFieldPattern(np.atleast_1d(theta).astype(float), np.broadcast_to(phi, np.shape(zero)).astype(float),
                               zero, zero.copy(), frequency, amplitude, "mie")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape).copy()
    z = np.asarray(k_hat, dtype=float)
    z = z / np.linalg.norm(z)
    xv = np.asarray(e_hat, dtype=float)
    xv = xv / np.linalg.norm(xv)
    yv = np.cross(z, xv)
    rhat, th, ph = spherical_unit_vectors(theta, phi)
    ct = np.clip(rhat @ z, -1.0, 1.0)
    tl = np.arccos(ct)
    pl = np.arctan2(rhat @ yv, rhat @ xv)
    S1, S2 = sol.amplitudes(tl)
    st_ = np.sin(tl)
    cp, sp = np.cos(pl), np.sin(pl)
    th_l = (ct * cp)[:, None] * xv + (ct * sp)[:, None] * yv - st_[:, None] * z
    ph_l = -sp[:, None] * xv + cp[:, None] * yv
    F = (-1j / sol.k) * amplitude * (
        (cp * np.conj(S2))[:, None] * th_l - (sp * np.conj(S1))[:, None] * ph_l
    )
    Et = np.einsum("da,da->d", F, th)
    Ep = np.einsum("da,da->d", F, ph)
    pat = FarFieldPattern(theta, phi, Et, Ep, frequency, amplitude, "mie",
                          {"n_max": sol.n_max, "last_term": sol.last_term})
    return pat


def rayleigh_backscatter(radius: float, eps_r: complex, frequency: float) -> float:
    """Small-sphere backscatter RCS 4 pi k^4 a^6 |(eps-1)/(eps+2)|^2."""
    k = 2 * math.pi * frequency / C0
    return float(4 * math.pi * k**4 * radius**6 * abs((eps_r - 1) / (eps_r + 2)) ** 2)
