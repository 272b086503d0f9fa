import numpy as np
import pytest
import scipy.sparse.linalg as spl
from hypothesis import given, settings, strategies as st

from surfadmit.excitation import PlaneWave, incident_fields
from surfadmit.excitation import test_field as project_field
from surfadmit.mesh import build_rwg, eval_rwg
from surfadmit.operators import (AssemblyOptions, CoefficientVector, assemble_exterior_blocks,
                                 assemble_interior_blocks, dump_blocks, gram_matrix, load_blocks,
                                 mixed_gram_matrix)
from surfadmit.operators import tested_operators as assemble
from surfadmit.quadrature import MediumParams, triangle_rule
from surfadmit.shapes import sphere, sphere_array


@pytest.fixture(scope="module")
def basis(small_sphere):
    return build_rwg(small_sphere)


@pytest.fixture(scope="module")
def ops(basis):
    L, K, NL, NK = assemble(basis, [2.0 - 0.1j], rotated=True)
    return L[0], K[0], NL[0], NK[0]


def test_gram_is_symmetric_positive_definite(basis):
    G = gram_matrix(basis)
    assert abs(G - G.T).max() <= 1e-15 * abs(G).max()
    assert np.linalg.eigvalsh(G.toarray()).min() > 0
    assert G.getnnz(axis=1).max() <= 5


def test_mixed_gram_is_antisymmetric(basis):
    X = mixed_gram_matrix(basis)
    assert abs(X + X.T).max() <= 1e-15 * abs(X).max()
    assert np.abs(X.diagonal()).max() <= 1e-15 * abs(X).max()


def test_gram_entries_match_pointwise_quadrature(basis):
    G = gram_matrix(basis).toarray()
    X = mixed_gram_matrix(basis).toarray()
    rule = triangle_rule(7)
    mesh = basis.mesh
    m = 3
    for n in np.nonzero(G[m])[0]:
        g = x = 0.0
        for t in {basis.plus[m], basis.minus[m]} & {basis.plus[n], basis.minus[n]}:
            for p, w in zip(rule.points(mesh.corners[t]), rule.weights):
                fm, _ = eval_rwg(basis, m, t, p)
                fn, _ = eval_rwg(basis, n, t, p)
                g += w * mesh.areas[t] * fm @ fn
                x += w * mesh.areas[t] * fm @ np.cross(mesh.normals[t], fn)
        assert G[m, n] == pytest.approx(g, rel=1e-12)
        assert X[m, n] == pytest.approx(x, rel=1e-12, abs=1e-15)


def test_galerkin_operators_are_symmetric(basis):
    L, K = assemble(basis, [2.0 - 0.1j])
    assert np.array_equal(L[0], L[0].T)
    assert np.array_equal(K[0], K[0].T)


def test_rotated_assembly_reproduces_plain_operators(basis, ops):
    L, K = assemble(basis, [2.0 - 0.1j])
    # the rotated path skips the symmetric averaging, so agreement is to quadrature accuracy
    assert np.abs(L[0] - ops[0]).max() <= 2e-5 * np.abs(L).max()
    assert np.abs(K[0] - ops[1]).max() <= 1e-3 * np.abs(K).max()


def _brute_entry(basis, m, n, k, rule):
    mesh = basis.mesh
    P = []
    for fn in (m, n):
        pts = []
        for t in (basis.plus[fn], basis.minus[fn]):
            for p, w in zip(rule.points(mesh.corners[t]), rule.weights):
                f, d = eval_rwg(basis, fn, t, p)
                pts.append((p, w * mesh.areas[t], f, d, mesh.normals[t]))
        P.append(pts)
    L = K = NL = 0j
    for p, wp, fp, dp, npn in P[0]:
        for q, wq, fq, dq, _ in P[1]:
            R = p - q
            r = np.linalg.norm(R)
            G = np.exp(-1j * k * r) / (4 * np.pi * r)
            L += wp * wq * G * (fp @ fq - dp * dq / k**2)
            grad = -(1 + 1j * k * r) * G / r**2 * R
            K += wp * wq * fp @ np.cross(grad, fq)
            # <f_m, n x v> = -<n x f_m, v>
            nf = np.cross(npn, fp)
            NL -= wp * wq * (G * (nf @ fq) + dq / k**2 * (nf @ grad))
    return L, K, NL


def test_far_entries_match_brute_force(basis, ops):
    L, K, NL, _ = ops
    c = basis.mesh.centroids
    mid = (c[basis.plus] + c[basis.minus]) / 2
    m = 0
    n = int(np.argmax(np.linalg.norm(mid - mid[m], axis=1)))
    ref = _brute_entry(basis, m, n, 2.0 - 0.1j, triangle_rule(49))
    for got, want in zip((L[m, n], K[m, n], NL[m, n]), ref):
        assert abs(got - want) <= 2e-5 * abs(want)


def test_tiles_match_full_assembly(basis, ops):
    rows = np.arange(10, 40)
    cols = np.arange(50, 95)
    L, K, NL, NK = assemble(basis, [2.0 - 0.1j], rows=rows, cols=cols, rotated=True)
    for tile, full in zip((L, K, NL, NK), ops):
        np.testing.assert_allclose(tile[0], full[np.ix_(rows, cols)], rtol=0, atol=1e-13 * np.abs(full).max())


def test_several_wavenumbers_in_one_pass(basis):
    ks = [1.0, 2.0 - 0.3j]
    L, K = assemble(basis, ks)
    for i, k in enumerate(ks):
        Li, Ki = assemble(basis, [k])
        np.testing.assert_allclose(L[i], Li[0], rtol=0, atol=1e-14 * np.abs(Li).max())
        np.testing.assert_allclose(K[i], Ki[0], rtol=0, atol=1e-14 * np.abs(Ki).max())


def test_zero_wavenumber_rejected(basis):
    with pytest.raises(ValueError):
        assemble(basis, [0.0])


def test_interior_block_relations(basis):
    med = MediumParams.from_relative(2.25, frequency=1e8)
    blk = assemble_interior_blocks(basis, med)
    np.testing.assert_allclose(blk.K_m, med.eta * blk.K_e, rtol=1e-14)
    np.testing.assert_allclose(blk.L_e, -med.eta * blk.L_m, rtol=1e-14)


@pytest.mark.parametrize("F,bound", [(80, 0.07), (320, 0.035)])
def test_interior_relation_annihilates_source_free_fields(F, bound):
    """Projected traces of a plane wave inside the medium satisfy the combined row
    up to the projection's discretisation error."""
    b = build_rwg(sphere(0.5, F))
    med = MediumParams.from_relative(2.25, frequency=150e6)
    blk = assemble_interior_blocks(b, med)
    G = gram_matrix(b).tocsc()
    nrm = b.mesh.normals[:, None, :]
    pw = PlaneWave((0.0, 0.6, 0.8), (1.0, 0.0, 0.0), frequency=150e6)
    e = spl.spsolve(G, project_field(b, lambda p: np.cross(nrm, incident_fields(pw, p, med)[0])))
    h = spl.spsolve(G, project_field(b, lambda p: np.cross(nrm, incident_fields(pw, p, med)[1])))
    assert blk.residual(e, h, 0.5) < bound
    # an unrelated field pair is far from the null space
    assert blk.residual(e, np.roll(h, 7), 0.5) > 0.3


def test_exterior_residue_only_on_same_body():
    mesh = sphere_array(2, 1, 3.0, 0.5, 40)
    b = build_rwg(mesh)
    med = MediumParams.from_relative(1.0, frequency=1e8)
    ext = assemble_exterior_blocks(b, med)
    L, K, NL, _ = assemble(b, [med.k], rotated=True)
    X = mixed_gram_matrix(b).toarray()
    s = b.body_slices()
    a, c = s[0], s[1]
    np.testing.assert_allclose(ext.K_out[np.ix_(a, c)], K[0][np.ix_(a, c)], rtol=0, atol=0)
    np.testing.assert_allclose(ext.K_out[np.ix_(a, a)], K[0][np.ix_(a, a)] + 0.5 * X[np.ix_(a, a)], atol=1e-15)
    np.testing.assert_allclose(ext.L_out, 1j * med.k * med.eta * NL[0], rtol=1e-15)
    assert ext.nbytes > ext.L_out.nbytes + ext.K_out.nbytes


def test_block_dump_round_trip(tmp_path, basis):
    med = MediumParams.from_relative(2.25 - 0.1j, frequency=2e8)
    blk = assemble_interior_blocks(basis, med)
    path = dump_blocks(tmp_path / "b.bin", {"K_e": blk.K_e, "L_e": blk.L_e}, med)
    back, m2 = load_blocks(path)
    assert list(back) == ["K_e", "L_e"]
    assert np.array_equal(back["K_e"], blk.K_e) and np.array_equal(back["L_e"], blk.L_e)
    assert m2 == med
    raw = path.read_bytes()
    assert raw[:8] == b"SADMBLK1" and len(raw) >= 64 + 2 * blk.K_e.nbytes


def test_block_dump_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"\0" * 128)
    with pytest.raises(ValueError):
        load_blocks(p)


def test_coefficient_roles():
    assert len(CoefficientVector(np.zeros(3), "H~")) == 3
    with pytest.raises(ValueError):
        CoefficientVector(np.zeros(3), "Q")


@settings(max_examples=8, deadline=None)
@given(st.floats(0.5, 6.0), st.floats(-1.0, 0.0))
def test_symmetry_holds_for_any_lossy_wavenumber(kr, ki):
    b = build_rwg(sphere(0.3, 20))
    L, K = assemble(b, [complex(kr, ki)], options=AssemblyOptions(near_points=7))
    assert np.abs(L[0] - L[0].T).max() <= 1e-14 * np.abs(L).max()
    assert np.abs(K[0] - K[0].T).max() <= 1e-14 * np.abs(K).max()
