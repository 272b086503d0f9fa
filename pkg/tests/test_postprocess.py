import math

import numpy as np
import pytest

from surfadmit.mesh import build_rwg, eval_rwg
from surfadmit.postprocess import (FarFieldPattern, cut_angles, pattern_difference, radiate, rcs_deviation_db,
                                   read_pattern_csv, spherical_unit_vectors, write_pattern_csv)
from surfadmit.quadrature import MediumParams, triangle_rule
from surfadmit.shapes import sphere


def _pattern(n=181, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    th, ph = cut_angles(phi_deg=45.0)
    th, ph = th[:n], ph[:n]
    return FarFieldPattern(th, ph, scale * (rng.normal(size=n) + 1j * rng.normal(size=n)),
                           scale * (rng.normal(size=n) + 1j * rng.normal(size=n)), 3e8, solver="x")


def test_cut_sampling():
    th, ph = cut_angles(phi_deg=0.0)
    assert len(th) == 181 and th[0] == 0 and th[-1] == pytest.approx(math.pi)
    assert np.all(ph == 0)
    th, ph = cut_angles(theta_deg=90.0, resolution_deg=2.0)
    assert len(ph) == 181 and np.all(th == pytest.approx(math.pi / 2))
    for bad in (dict(), dict(phi_deg=0.0, theta_deg=0.0)):
        with pytest.raises(ValueError):
            cut_angles(**bad)


def test_csv_round_trip(tmp_path):
    pat = _pattern()
    path = write_pattern_csv(pat, tmp_path / "p.csv", extra={"n_unknowns": 42})
    back = read_pattern_csv(path)
    # fields are written with repr and come back exactly; angles pass through degrees
    for name in ("E_theta", "E_phi"):
        np.testing.assert_array_equal(getattr(back, name), getattr(pat, name))
    for name in ("theta", "phi"):
        np.testing.assert_allclose(getattr(back, name), getattr(pat, name), rtol=1e-15, atol=1e-15)
    assert back.frequency == pat.frequency and back.solver == "x"
    assert back.meta["n_unknowns"] == "42" and "exp(+jwt)" in back.meta["convention"]


def test_csv_rejects_foreign_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="columns"):
        read_pattern_csv(p)


def test_difference_metrics():
    a = _pattern()
    z = pattern_difference(a, a)
    assert z["l2_rel"] == 0 and z["max_rel"] == 0 and z["max_db"] == 0
    b = FarFieldPattern(a.theta, a.phi, 1.01 * a.E_theta, 1.01 * a.E_phi, a.frequency)
    d = pattern_difference(b, a)
    assert d["l2_rel"] == pytest.approx(0.01, rel=1e-10)
    assert d["max_db"] == pytest.approx(20 * math.log10(1.01), rel=1e-10)


def test_difference_requires_same_grid():
    a = _pattern()
    with pytest.raises(ValueError, match="grid"):
        pattern_difference(a, _pattern(n=180))
    shifted = FarFieldPattern(a.theta, a.phi + 0.1, a.E_theta, a.E_phi, a.frequency)
    with pytest.raises(ValueError):
        pattern_difference(a, shifted)
    # a full turn in phi is the same direction
    wrapped = FarFieldPattern(a.theta, a.phi + 2 * math.pi, a.E_theta, a.E_phi, a.frequency)
    assert pattern_difference(a, wrapped)["l2_rel"] < 1e-14


def test_rcs_deviation_ignores_deep_nulls():
    ref = _pattern()
    Et = ref.E_theta.copy()
    Et[10] *= 1e-3
    Ep = ref.E_phi.copy()
    Ep[10] *= 1e-3
    ref = FarFieldPattern(ref.theta, ref.phi, Et, Ep, ref.frequency)
    a = FarFieldPattern(ref.theta, ref.phi, Et.copy(), Ep.copy(), ref.frequency)
    a.E_theta[10] *= 5
    a.E_phi[10] *= 5
    assert rcs_deviation_db(a, ref)[0] == 0.0
    assert rcs_deviation_db(a, ref, window_db=100)[0] == pytest.approx(20 * math.log10(5))


def test_single_function_radiates_like_its_dipole_moment():
    b = build_rwg(sphere(0.05, 20))
    med = MediumParams.from_relative(1.0, frequency=30e6)  # k * size ~ 0.03
    rule = triangle_rule(7)
    n = 4
    p = np.zeros(3)
    for t in (b.plus[n], b.minus[n]):
        for q, w in zip(rule.points(b.mesh.corners[t]), rule.weights):
            p += w * b.mesh.areas[t] * eval_rwg(b, n, t, q)[0]
    J = np.zeros(b.n, dtype=complex)
    J[n] = 1.0
    th = np.linspace(0.2, 2.9, 6)
    ph = np.linspace(0.0, 5.0, 6)
    pat = radiate(b, J, None, med, th, ph)
    _, t, f = spherical_unit_vectors(th, ph)
    want = -1j * med.k * med.eta / (4 * math.pi)
    np.testing.assert_allclose(pat.E_theta, want * (t @ p), rtol=0, atol=0.05 * abs(want) * np.linalg.norm(p))
    np.testing.assert_allclose(pat.E_phi, want * (f @ p), rtol=0, atol=0.05 * abs(want) * np.linalg.norm(p))


def test_rcs_normalises_by_incident_amplitude(small_sphere):
    b = build_rwg(small_sphere)
    med = MediumParams.from_relative(1.0, frequency=2e8)
    J = np.random.default_rng(3).normal(size=b.n) + 0j
    th, ph = cut_angles(phi_deg=0.0, resolution_deg=10)
    one = radiate(b, J, None, med, th, ph)
    three = radiate(b, 3 * J, None, med, th, ph, incident_amplitude=3.0)
    np.testing.assert_allclose(three.sigma, one.sigma, rtol=1e-13)
    with pytest.raises(ValueError):
        radiate(b, J[:-1], None, med, th, ph)
