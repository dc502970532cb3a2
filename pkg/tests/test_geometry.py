from itertools import combinations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afslab import geometry as geo
from afslab.errors import InvalidGeometry


def as_set(a):
    return {tuple(int(v) for v in row) for row in np.atleast_2d(a)}


def test_cube_sites_examples():
    s = geo.cube_sites(geo.CubeSpec((0,), 9))
    assert s[:, 0].tolist() == list(range(-4, 5))
    assert len(geo.cube_sites(geo.CubeSpec((0, 0), 9))) == 81
    assert geo.cube_sites(geo.CubeSpec((0, 0, 0), 1)).tolist() == [[0, 0, 0]]


def test_cube_sites_lexicographic():
    s = geo.cube_sites(geo.CubeSpec((2, -1), 5))
    assert [tuple(r) for r in s] == sorted(tuple(r) for r in s)


@pytest.mark.parametrize("size", [0, -3, 4, 2.5])
def test_bad_cube(size):
    with pytest.raises(InvalidGeometry):
        geo.CubeSpec((0,), size)


def test_index_of_roundtrip():
    c = geo.CubeSpec((3, -2), 7)
    s = geo.cube_sites(c)
    assert np.array_equal(c.index_of(s), np.arange(len(s)))
    assert c.index_of(np.array([[100, 100]]))[0] == -1


def test_core_shell():
    core, shell = geo.core_shell(geo.CubeSpec((0,), 9))
    assert as_set(geo.cube_sites(core)) == {(-1,), (0,), (1,)}
    assert as_set(shell) == {(x,) for x in (-4, -3, -2, 2, 3, 4)}
    core, shell = geo.core_shell(geo.CubeSpec((0, 0), 27))
    assert core.volume == 81 and len(shell) == 648
    core, shell = geo.core_shell(geo.CubeSpec((0,), 3))
    assert as_set(geo.cube_sites(core)) == {(0,)} and as_set(shell) == {(-1,), (1,)}
    with pytest.raises(InvalidGeometry):
        geo.core_shell(geo.CubeSpec((0,), 7))


def test_boundary_annulus():
    assert as_set(geo.boundary_annulus(geo.CubeSpec((0,), 9))) == {(-4,), (-3,), (3,), (4,)}
    assert len(geo.boundary_annulus(geo.CubeSpec((0, 0), 9))) == 56
    assert as_set(geo.boundary_annulus(geo.CubeSpec((0,), 5))) == {(-2,), (-1,), (1,), (2,)}
    with pytest.raises(InvalidGeometry):
        geo.boundary_annulus(geo.CubeSpec((0,), 3))


def test_covering_centers():
    assert as_set(geo.covering_centers(np.array([[0]]), 3)) == {(0,)}
    assert as_set(geo.covering_centers(np.arange(-4, 5)[:, None], 3)) == {(-3,), (0,), (3,)}
    ann = geo.boundary_annulus(geo.CubeSpec((0,), 9))
    assert as_set(geo.covering_centers(ann, 3)) == {(-3,), (3,)}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-30, 30), st.integers(-30, 30)), min_size=1, max_size=25),
       st.sampled_from([1, 3, 5, 9]))
def test_covering_centers_brute_force(pts, ell):
    A = np.array(pts)
    got = as_set(geo.covering_centers(A, ell))
    half = (ell - 1) // 2
    want = set()
    for p in pts:
        for c in [(x, y) for x in range(-40, 41) if x % ell == 0 for y in range(-40, 41) if y % ell == 0]:
            if max(abs(p[0] - c[0]), abs(p[1] - c[1])) <= half:
                want.add(c)
    assert got == want


def test_cells_tile():
    part = geo.CellPartition(5)
    pts = geo.cube_sites(geo.CubeSpec((1, 2), 31))
    centers = part.center_of(pts)
    assert np.all(np.mod(centers, 5) == 0)
    assert np.all(geo.max_norm(pts - centers) <= 2)
    assert len(part.neighbours((0, 0))) == 8


def test_cube_partitions_into_cells():
    c = geo.CubeSpec((0, 0), 27)
    assert len(geo.CellPartition(9).centers_in(c)) == 9


def test_skeleton_examples():
    sk = geo.skeleton(geo.CubeSpec((0,), 27), 3)
    assert sk.vertices[:, 0].tolist() == list(range(-12, 13, 3))
    assert sk.R == 4
    sk1 = geo.skeleton(geo.CubeSpec((0,), 3), 3)
    assert len(sk1.vertices) == 1 and sk1.R == 0
    sk2 = geo.skeleton(geo.CubeSpec((0, 0), 27), 3)
    assert len(sk2.vertices) == 81 and sk2.layer_sizes() == [1, 8, 16, 24, 32]
    with pytest.raises(InvalidGeometry):
        geo.skeleton(geo.CubeSpec((0,), 27), 5)
    with pytest.raises(InvalidGeometry):
        geo.skeleton(geo.CubeSpec((1,), 9), 3)


def test_skeleton_layers_match_bfs():
    sk = geo.skeleton(geo.CubeSpec((0, 0), 45), 5)
    g = nx.Graph()
    g.add_nodes_from(range(len(sk.vertices)))
    g.add_edges_from(sk.edges)
    origin = int(np.nonzero(geo.max_norm(sk.vertices) == 0)[0][0])
    dist = nx.single_source_shortest_path_length(g, origin)
    assert all(dist[i] == sk.radius_of[i] for i in range(len(sk.vertices)))
    for r in range(sk.R):
        assert as_set(sk.ball(r)) <= as_set(sk.ball(r + 1))


def brute_disjoint(centers, L):
    centers = [tuple(c) for c in centers]
    for m in range(len(centers), 0, -1):
        for sub in combinations(centers, m):
            if all(max(abs(a - b) for a, b in zip(p, q)) >= L for p, q in combinations(sub, 2)):
                return m
    return 0


def test_max_disjoint_examples():
    assert geo.max_disjoint_count([], 9) == (0, True)
    assert geo.max_disjoint_count([[0]], 9) == (1, True)
    assert geo.max_disjoint_count([[0], [3], [9]], 9) == (2, True)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=12, unique=True))
def test_max_disjoint_brute_force(raw):
    centers = np.array(raw) * 3
    count, exact = geo.max_disjoint_count(centers, 9)
    assert exact and count == brute_disjoint(centers, 9)


def test_max_disjoint_greedy_is_lower_bound():
    rng = np.random.default_rng(1)
    centers = np.unique(rng.integers(-10, 10, size=(40, 2)) * 3, axis=0)
    count, exact = geo.max_disjoint_count(centers, 9)
    assert not exact
    sub = centers[:geo.EXACT_DISJOINT_LIMIT]
    exact_count, _ = geo.max_disjoint_count(sub, 9)
    greedy = geo.max_disjoint_count(centers, 9)[0]
    assert count >= 1 and greedy == count
    # adding flagged centers never decreases the exact count
    assert geo.max_disjoint_count(sub[:10], 9)[0] <= exact_count


def test_annulus_cover_count_below_Y():
    # covering the width-2 annulus of any odd sub-cube uses fewer than Y^d cells
    Y, ell = 9, 3
    for size in range(5, Y * ell, 2):
        ann = geo.boundary_annulus(geo.CubeSpec((0, 0), size))
        assert len(geo.covering_centers(ann, ell)) < Y ** 2
