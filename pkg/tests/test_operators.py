import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from afslab import disorder as dis
from afslab import geometry as geo
from afslab import operators as op
from afslab.errors import MissingPotential, NearSingular, TooLarge

# dense-inverse oracle value for dnorm(B_9(0), E=0.5, uniform(0,1) seed 2024 index 0, Y=9)
DNORM_GOLDEN = 684.2333604802416


def free(sites):
    return dis.constant(0.0, sites)


def cube1(L, c=0):
    return geo.CubeSpec((c,), L)


def seeded(cube, seed=2024, index=0, amp=1.0):
    spec = dis.DisorderSpec.uniform(0, 1, amplitude=amp, master_seed=seed)
    return dis.sample(spec, index, geo.cube_sites(cube))


def dense_laplacian(sites):
    n = len(sites)
    d1 = np.abs(sites[:, None, :] - sites[None, :, :]).sum(-1)
    return 2 * sites.shape[1] * np.eye(n) - (d1 == 1)


def test_single_site_and_pair():
    for d in (1, 2, 3):
        x = np.zeros((1, d), dtype=int)
        H = op.assemble(x, dis.from_values(x, [0.7]))
        assert H.dense().tolist() == [[2 * d + 0.7]]
    pair = np.array([[0], [1]])
    H = op.assemble(pair, free(pair))
    assert H.dense().tolist() == [[2, -1], [-1, 2]]
    assert np.allclose(op.spectrum(H), [1, 3])


def test_path_closed_form():
    c = cube1(11, 5)
    H = op.assemble(c, free(geo.cube_sites(c)))
    j = np.arange(1, 12)
    assert np.allclose(op.spectrum(H), np.sort(2 - 2 * np.cos(j * np.pi / 12)), atol=1e-12)


def test_matrix_matches_dense_definition_2d_and_irregular():
    c = geo.CubeSpec((1, -1), 7)
    V = seeded(c)
    H = op.assemble(c, V)
    sites = geo.cube_sites(c)
    assert np.allclose(H.dense(), dense_laplacian(sites) + np.diag(V.values))
    assert (H.matrix != H.matrix.T).nnz == 0
    odd = np.array([[0, 0], [0, 1], [1, 1], [3, 3], [2, 1]])
    H2 = op.assemble(odd, free(odd))
    srt = np.unique(odd, axis=0)
    assert np.allclose(H2.dense(), dense_laplacian(srt))


def test_missing_potential():
    c = cube1(5)
    with pytest.raises(MissingPotential):
        op.assemble(c, free(np.array([[0]])))


def test_spectrum_trace_and_range():
    c = geo.CubeSpec((0,), 81)
    V = seeded(c, amp=3.0)
    H = op.assemble(c, V)
    ev = op.spectrum(H)
    assert np.all(np.diff(ev) >= 0)
    assert ev.sum() == pytest.approx(np.trace(H.dense()), rel=1e-9)
    assert ev.min() >= -1e-12 and ev.max() <= 4 + V.values.max() + 1e-12
    with pytest.raises(TooLarge):
        op.spectrum(H, cap=10)


def test_green_examples():
    x = np.array([[0]])
    H = op.assemble(x, dis.from_values(x, [0.25]))
    assert op.green_block(H, 1.0, [0], [0])[0, 0] == pytest.approx(1 / (2.25 - 1.0))
    pair = np.array([[0], [1]])
    G = op.green_block(op.assemble(pair, free(pair)), 0.0, pair, pair)
    assert np.allclose(G, np.array([[2, 1], [1, 2]]) / 3)


def test_green_block_dense_oracle_and_symmetry():
    c = cube1(81)
    V = seeded(c)
    H = op.assemble(c, V)
    Ginv = np.linalg.inv(H.dense() - 0.5 * np.eye(81))
    rows, cols = np.array([0, 10, 40, 80]), np.array([3, 40, 79])
    assert np.allclose(op.green_block(H, 0.5, rows, cols), Ginv[np.ix_(rows, cols)], rtol=1e-8, atol=1e-12)
    G = op.green_block(H, 0.5, np.arange(81), np.arange(81))
    assert np.allclose(G, G.T, rtol=1e-9, atol=1e-14)


def test_green_near_singular():
    pair = np.array([[0], [1]])
    H = op.assemble(pair, free(pair))
    with pytest.raises(NearSingular) as info:
        op.green_block(H, 1.0, [0], [0])
    assert info.value.distance < 1e-12


def test_commutator():
    assert op.commutator_norm(geo.CubeSpec((0, 0), 9)) == 16
    for cube in (cube1(9), geo.CubeSpec((0, 0), 9), geo.CubeSpec((0, 0, 0), 5)):
        assert 0 < op.commutator_norm(cube, "exact") <= 8 * cube.d
    inner, amb = cube1(9), cube1(27)
    sites = geo.cube_sites(amb)
    phi = np.diag((np.abs(sites[:, 0]) <= 3).astype(float))
    lap = dense_laplacian(sites)
    oracle = np.linalg.norm(phi @ lap - lap @ phi, 2)
    assert op.commutator_norm(inner, "exact", amb) == pytest.approx(oracle, rel=1e-12)


def test_dnorm_examples():
    c = cube1(9)
    assert op.dnorm(c, -10.0, free(geo.cube_sites(c)), Y=9) < 72 / 10
    V = seeded(c)
    H = op.assemble(c, V)
    sites = geo.cube_sites(c)
    G = np.linalg.inv(H.dense() - 0.5 * np.eye(9))
    core = np.abs(sites[:, 0]) <= 1
    ann = np.abs(sites[:, 0]) >= 3
    oracle = 72 * np.linalg.norm(G[np.ix_(ann, core)], 2)
    got = op.dnorm(c, 0.5, V, Y=9)
    assert got == pytest.approx(oracle, rel=1e-10)
    assert got == pytest.approx(DNORM_GOLDEN, rel=1e-10)
    assert op.classify_NS(c, 0.5, DNORM_GOLDEN * (1 + 1e-9), V, 9)
    assert not op.classify_NS(c, 0.5, DNORM_GOLDEN * (1 - 1e-9), V, 9)


def test_dnorm_on_three_site_cube_uses_whole_cube():
    c = cube1(3)
    V = seeded(c)
    H = op.assemble(c, V)
    G = np.linalg.inv(H.dense() + 2 * np.eye(3))
    assert op.dnorm(c, -2.0, V, Y=9) == pytest.approx(72 * np.linalg.norm(G[:, [1]]), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-2, 8), st.sampled_from([3, 9, 15]))
def test_dnorm_bounded_by_inverse_distance(seed, E, L):
    c = cube1(L)
    V = seeded(c, seed=seed, amp=4.0)
    H = op.assemble(c, V)
    dist = H.spectral_distance(E)
    dn = op.dnorm(c, E, V, Y=9, H=H)
    if dist >= 1e-12:
        assert dn <= 72 / dist * (1 + 1e-9)
    else:
        assert dn == math.inf


def test_classifiers():
    pair_cube = cube1(3)
    c = pair_cube
    H = op.assemble(c, free(geo.cube_sites(c)))
    E = float(op.spectrum(H)[0])
    assert not op.classify_NS(c, E, 1e300, free(geo.cube_sites(c)), 9)
    assert not op.classify_NR(c, E, 1e-300, free(geo.cube_sites(c)))
    assert op.classify_NR(cube1(9), -10.0, 1.0, free(geo.cube_sites(cube1(9))))
    V = seeded(cube1(9))
    flags = [op.classify_NS(cube1(9), 0.5, eps, V, 9) for eps in np.logspace(0, 4, 30)]
    assert flags == sorted(flags)  # once NS, stays NS for larger eps
    with pytest.raises(ValueError):
        op.classify_NR(c, 0.0, 0.0, V)


def test_probe_consistency():
    c = cube1(9)
    V = seeded(c)
    r = op.probe(c, 0.5, V, 9, eps_ns=200.0, eps_nr=0.01)
    assert r.is_NR == (r.spectral_distance >= 0.01)
    assert r.is_NS == (r.dnorm <= 200.0)
    assert set(r.to_dict()) >= {"dnorm", "spectral_distance", "is_NS", "is_NR"}


def test_cnr():
    assert len(op.concentric_sizes(9, 3)) == 2
    big = geo.CubeSpec((0,), 81)
    ok, detail = op.classify_CNR((0,), 9, 9, -10.0, 1.0, free(geo.cube_sites(big)))
    assert ok and len(detail) == 8
    V = seeded(big, amp=10.0)
    ok, detail = op.classify_CNR((0,), 9, 9, 5.0, 1e-3, V)
    assert len(detail) == 8 and ok == all(nr for _, _, nr in detail)
    assert [s for s, _, _ in detail] == [27, 33, 39, 45, 51, 57, 63, 69]


def test_gri_free_example():
    inner, amb = cube1(9), cube1(27)
    A = np.array([[x] for x in range(-13, 14) if abs(x) > 4])
    lhs, rhs = op.gri_residual(inner, amb, -5.0, A, free(geo.cube_sites(amb)))
    assert math.isfinite(lhs) and math.isfinite(rhs) and lhs <= rhs * (1 + 1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-1, 9), st.integers(-6, 6), st.sampled_from([1, 2]))
def test_gri_random(seed, E, shift, d):
    inner = geo.CubeSpec((shift,) + (0,) * (d - 1), 9)
    amb = geo.CubeSpec((0,) * d, 27 if d == 1 else 21)
    assume(op.gri_geometry_ok(inner, amb))
    V = seeded(amb, seed=seed, amp=5.0)
    sites = geo.cube_sites(amb)
    A = sites[~inner.contains(sites)][:: 3]
    try:
        lhs, rhs = op.gri_residual(inner, amb, E, A, V)
    except NearSingular:
        return
    assert lhs <= rhs * (1 + 1e-8) + 1e-300


def test_gri_geometry_rejected():
    from afslab.errors import InvalidGeometry
    with pytest.raises(InvalidGeometry):
        op.gri_residual(cube1(9), cube1(11), -5.0, np.array([[5]]), free(geo.cube_sites(cube1(11))))


def test_gri_rhs_inflates_near_inner_eigenvalue():
    inner, amb = cube1(9), cube1(27)
    V = seeded(amb, amp=2.0)
    ev = op.spectrum(op.assemble(inner, V))
    A = np.array([[x] for x in range(-13, 14) if abs(x) > 6])
    rhs = [op.gri_residual(inner, amb, ev[4] + delta, A, V)[1] for delta in (1e-1, 1e-2, 1e-3)]
    assert rhs[0] < rhs[1] < rhs[2]
    assert rhs[2] / rhs[1] == pytest.approx(10, rel=0.2)


def test_boundary_max_green():
    assert op.boundary_max_green((0,), 3, -1.0, free(geo.cube_sites(cube1(3)))) == pytest.approx(1 / 7)
    c = cube1(9)
    sites = geo.cube_sites(c)
    V = dis.from_values(sites, np.cos(sites[:, 0]))  # even in x
    H = op.assemble(c, V)
    G = op.green_block(H, 0.3, np.array([4]), np.array([0, 8]))
    assert G[0, 0] == pytest.approx(G[0, 1], rel=1e-12)
    assert op.boundary_max_green((0,), 9, -1e6, V) <= 1e-5
    ev = op.spectrum(op.assemble(cube1(5), free(geo.cube_sites(cube1(5)))))
    assert op.boundary_max_green((0,), 5, float(ev[0]), free(geo.cube_sites(cube1(5)))) == math.inf
