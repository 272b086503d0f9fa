import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surfadmit.excitation import PlaneWave, assemble_excitation, incident_fields
from surfadmit.mesh import build_rwg
from surfadmit.quadrature import MediumParams, triangle_rule

VAC = MediumParams.from_relative(1.0, frequency=2e8)


@pytest.mark.parametrize("kw", [
    dict(k_hat=(0, 0, 2.0)),
    dict(e_hat=(1.0, 1.0, 0)),
    dict(e_hat=(0, 0, 1.0)),
    dict(frequency=0.0),
    dict(k_hat=(0, 1.0)),
])
def test_invalid_plane_wave_rejected(kw):
    with pytest.raises(ValueError):
        PlaneWave(**kw)


def test_normalized_projects_polarisation():
    pw = PlaneWave.normalized((0, 0, 3), (1, 0, 1))
    assert pw.k_hat == (0, 0, 1) and pw.e_hat == (1, 0, 0)
    with pytest.raises(ValueError, match="parallel"):
        PlaneWave.normalized((0, 0, 1), (0, 0, 2))


@settings(max_examples=20)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 1), st.floats(0, 2 * np.pi))
def test_plane_wave_is_transverse(x, y, z, psi):
    k = np.array([x, y, z]) / np.linalg.norm([x, y, z])
    u = np.cross(k, [0.3, -0.7, 0.2])
    pw = PlaneWave.normalized(k, np.cos(psi) * u + np.sin(psi) * np.cross(k, u), frequency=VAC.frequency)
    pts = np.random.default_rng(2).normal(size=(5, 3))
    E, H = incident_fields(pw, pts, VAC)
    assert np.abs(E @ k).max() < 1e-12 and np.abs(H @ k).max() < 1e-12
    np.testing.assert_allclose(np.linalg.norm(E, axis=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(H, axis=1) * VAC.eta, 1.0, rtol=1e-12)


def test_excitation_is_linear_in_amplitude(small_sphere):
    b = build_rwg(small_sphere)
    a = assemble_excitation(b, PlaneWave(frequency=2e8), VAC)
    c = assemble_excitation(b, PlaneWave(amplitude=3.5, frequency=2e8), VAC)
    for name in ("V_e", "V_m", "E_t", "H_t"):
        np.testing.assert_allclose(getattr(c, name), 3.5 * getattr(a, name), rtol=1e-13)
    assert len(a) == b.n


def test_magnetic_trace_is_minus_tangential_h(small_sphere):
    b = build_rwg(small_sphere)
    v = assemble_excitation(b, PlaneWave((0, 1, 0), (0, 0, 1), frequency=2e8), VAC)
    np.testing.assert_array_equal(v.V_m, -v.H_t)


def test_tested_trace_converges_with_rule(small_sphere):
    b = build_rwg(small_sphere)
    pw = PlaneWave(frequency=2e8)
    lo = assemble_excitation(b, pw, VAC, triangle_rule(7)).V_e
    hi = assemble_excitation(b, pw, VAC, triangle_rule(49)).V_e
    assert np.linalg.norm(lo - hi) <= 1e-5 * np.linalg.norm(hi)
