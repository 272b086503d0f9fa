import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import adaptive_triangle_integral, brute_pair, green_mp, polar_inplane_integrals
from surfadmit.quadrature import (green, panel_pair_K, panel_pair_L, static_panel_integrals, touching_rules,
                                  triangle_rule)

TRI = np.array([[0.1, 0.2, 0.0], [1.3, 0.1, 0.2], [0.4, 1.1, -0.1]])
NRM = np.cross(TRI[1] - TRI[0], TRI[2] - TRI[0])
NRM /= np.linalg.norm(NRM)


def _adaptive_static(c, obs):
    nrm = np.cross(c[1] - c[0], c[2] - c[0])
    nrm /= np.linalg.norm(nrm)
    rho = obs - (nrm @ (obs - c[0])) * nrm
    I0 = adaptive_triangle_integral(c, lambda q: 1 / np.linalg.norm(obs - q))
    Iv = np.array([adaptive_triangle_integral(c, lambda q, j=j: (q - rho)[j] / np.linalg.norm(obs - q))
                   for j in range(3)])
    return I0, Iv


@pytest.mark.parametrize("obs", [
    np.array([0.5, 0.5, 0.3]),
    np.array([3.0, 2.0, 1.0]),
    TRI.mean(0) + 0.05 * NRM,
    TRI.mean(0) - 0.2 * NRM,
    TRI[1] + 0.01 * NRM,
])
def test_static_integrals_match_adaptive_quadrature(obs):
    I0, Iv = static_panel_integrals(TRI, obs)
    r0, rv = _adaptive_static(TRI, obs)
    assert abs(I0 - r0) <= 1e-8 * abs(r0)
    assert np.abs(Iv - rv).max() <= 1e-8 * np.abs(rv).max()


@pytest.mark.parametrize("bary", [(1 / 3, 1 / 3, 1 / 3), (0.7, 0.2, 0.1), (-0.3, 0.6, 0.7), (0.5, 0.5, 0.0)])
def test_static_integrals_in_plane_match_polar_oracle(bary):
    rho = np.asarray(bary) @ TRI
    I0, Iv = static_panel_integrals(TRI, rho)
    r0, rv = polar_inplane_integrals(TRI, rho)
    assert abs(I0 - r0) <= 1e-8 * abs(r0)
    assert np.abs(Iv - rv).max() <= 1e-8 * np.abs(rv).max()


coord = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=15, deadline=None)
@given(st.lists(coord, min_size=9, max_size=9), st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3))
def test_static_integrals_random_geometry(corners, obs):
    c = np.array(corners).reshape(3, 3)
    area = 0.5 * np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0]))
    edges = np.linalg.norm(c[[1, 2, 0]] - c, axis=1)
    # reasonably shaped panels; observation point off the panel's plane
    assume(area > 1e-2 and area > 0.05 * edges.max() ** 2)
    nrm = np.cross(c[1] - c[0], c[2] - c[0]) / (2 * area)
    obs = np.asarray(obs)
    assume(abs(nrm @ (obs - c[0])) > 0.05)
    I0, Iv = static_panel_integrals(c, obs)
    r0, rv = _adaptive_static(c, obs)
    assert abs(I0 - r0) <= 1e-8 * abs(r0)
    assert np.abs(Iv - rv).max() <= 1e-8 * max(np.abs(rv).max(), 1e-3 * abs(r0))


def test_degenerate_panel_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        static_panel_integrals(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), np.ones(3))


@pytest.mark.parametrize("k", [1.0, 2.5 - 0.4j, 30.0])
def test_green_matches_extended_precision(k):
    r, s = np.array([0.1, 0.2, 0.3]), np.array([1.0, -1.0, 0.5])
    ref = green_mp(r, s, k)
    assert abs(green(r, s, k) - ref) <= 1e-13 * abs(ref)


def test_green_rejects_coincident_points():
    with pytest.raises(ValueError):
        green([0, 0, 0], [0, 0, 0], 1.0)


@pytest.mark.parametrize("k", [2.0, 5.0 - 1.0j])
def test_green_solves_helmholtz(k):
    r0 = np.array([0.3, -0.2, 0.4])
    h = 1e-3
    lap = -6 * green(r0, 0 * r0, k)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        lap += green(r0 + e, 0 * r0, k) + green(r0 - e, 0 * r0, k)
    lap /= h**2
    assert abs(lap + k**2 * green(r0, 0 * r0, k)) <= 1e-5 * abs(k**2 * green(r0, 0 * r0, k))


CT = np.array([[0.0, 0, 0], [0.1, 0, 0], [0, 0.1, 0]])


def test_separated_pair_high_order_matches_brute_force():
    cs = CT + np.array([0.5, 0.3, 0.2])
    rule = triangle_rule(49)
    L = panel_pair_L(CT, cs, 3.0, rule=rule).total
    K = panel_pair_K(CT, cs, 3.0, rule=rule)
    bl, bk = brute_pair(CT, cs, 3.0)
    assert np.abs(L - bl).max() <= 1e-8 * np.abs(bl).max()
    assert np.abs(K - bk).max() <= 1e-8 * np.abs(bk).max()


def test_separated_pair_default_rule_accuracy():
    cs = CT + np.array([0.5, 0.3, 0.2])
    L = panel_pair_L(CT, cs, 3.0).total
    K = panel_pair_K(CT, cs, 3.0)
    bl, bk = brute_pair(CT, cs, 3.0)
    assert np.abs(L - bl).max() <= 1e-7 * np.abs(bl).max()
    assert np.abs(K - bk).max() <= 1e-5 * np.abs(bk).max()


def test_near_pair_singularity_extraction():
    cs = np.array([[0.0, 0, 0.05], [0.1, 0, 0.06], [0, 0.1, 0.05]])
    L = panel_pair_L(CT, cs, 3.0).total
    K = panel_pair_K(CT, cs, 3.0)
    bl, bk = brute_pair(CT, cs, 3.0, levels=2, n=6)
    assert np.abs(L - bl).max() <= 5e-4 * np.abs(bl).max()
    assert np.abs(K - bk).max() <= 2e-3 * np.abs(bk).max()


def test_self_pair_properties():
    p = panel_pair_L(CT, CT, 2.0)
    # the Galerkin self interaction is symmetric up to the test-side rule and
    # the PV K of a flat panel vanishes
    assert np.abs(p.total - p.total.T).max() <= 1e-7 * np.abs(p.total).max()
    assert np.abs(panel_pair_K(CT, CT, 2.0)).max() == 0.0


def test_rules_integrate_polynomials_exactly():
    c = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    for order in (1, 3, 7, 16, 49):
        rule = triangle_rule(order)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
        pts = rule.points(c)
        for p in range(rule.degree + 1):
            # int_T x^p dA = p! / (p + 2)! over the unit right triangle
            exact = 1.0 / ((p + 1) * (p + 2))
            assert 0.5 * rule.weights @ pts[:, 0] ** p == pytest.approx(exact, rel=1e-12)


def test_unknown_rule_size():
    with pytest.raises(ValueError):
        triangle_rule(5)


def test_touching_rules_are_normalised():
    bary, weights, counts = touching_rules()
    for r in range(len(counts)):
        n = counts[r]
        assert weights[r, :n].sum() == pytest.approx(1.0, abs=1e-13)
        assert np.all(bary[r, :n] >= -1e-14)
        np.testing.assert_allclose(bary[r, :n].sum(axis=1), 1.0, atol=1e-14)
