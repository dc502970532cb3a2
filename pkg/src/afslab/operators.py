"""Local Hamiltonians, resolvent blocks and the cube classifiers.

``H_Lambda`` is the lattice Laplacian (diagonal ``2d``, hopping ``-1`` between
l1-nearest neighbours inside ``Lambda``) plus the potential.  The decorated
norm of a cube ``B_L(x)`` at scale ``k`` is

    dnorm = C_W * || 1_Gamma G_B(E) chi ||,   C_W = Y_k^d * ||W||

with ``Gamma`` the width-2 outer annulus of the cube and ``chi`` the
indicator of its core cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .disorder import DisorderRealization
from .errors import InvalidGeometry, NearSingular, TooLarge

DENSE_CAP = 8192
NEAR_SINGULAR_TOL = 1e-12
RESIDUAL_TOL = 1e-8
_DENSE_SOLVE_MAX = 3000


def _neighbour_pairs(sites: np.ndarray):
    """Index pairs ``(i, j)``, ``i < j``, of l1-nearest neighbours within ``sites``."""
    n, d = sites.shape
    lookup = {tuple(s): i for i, s in enumerate(sites.tolist())}
    rows, cols = [], []
    lo, hi = sites.min(axis=0), sites.max(axis=0)
    is_box = int(np.prod(hi - lo + 1)) == n
    if is_box:
        dims = hi - lo + 1
        weights = np.append(np.cumprod(dims[::-1])[::-1][1:], 1)
        rel = sites - lo
        idx = rel @ weights
        order = np.empty(n, dtype=int)
        order[idx] = np.arange(n)
        for axis in range(d):
            ok = rel[:, axis] < dims[axis] - 1
            i = np.nonzero(ok)[0]
            j = order[idx[ok] + weights[axis]]
            rows.append(i)
            cols.append(j)
        return np.concatenate(rows), np.concatenate(cols)
    for i, s in enumerate(sites.tolist()):
        for axis in range(d):
            t = list(s)
            t[axis] += 1
            j = lookup.get(tuple(t))
            if j is not None:
                rows.append(i)
                cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


@dataclass(frozen=True)
class LocalHamiltonian:
    sites: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)
    cube: Optional[geo.CubeSpec] = None

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        if self.n > DENSE_CAP:
            raise TooLarge(f"{self.n} sites exceed the dense eigensolver cap {DENSE_CAP}")
        return sla.eigvalsh(self.dense())

    @cached_property
    def eigh(self):
        if self.n > DENSE_CAP:
            raise TooLarge(f"{self.n} sites exceed the dense eigensolver cap {DENSE_CAP}")
        return sla.eigh(self.dense())

    def spectral_distance(self, E: float) -> float:
        if self.n <= DENSE_CAP:
            return float(np.min(np.abs(self.eigenvalues - E)))
        val = spla.eigsh(self.matrix, k=1, sigma=E, which="LM", return_eigenvectors=False)
        return float(np.min(np.abs(val - E)))

    def index_of(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.cube is not None:
            idx = self.cube.index_of(pts)
        else:
            lookup = {tuple(s): i for i, s in enumerate(self.sites.tolist())}
            idx = np.array([lookup.get(tuple(p), -1) for p in pts.tolist()], dtype=int)
        if np.any(idx < 0):
            raise InvalidGeometry("requested sites lie outside the Hamiltonian's domain")
        return idx


def assemble(domain, V: DisorderRealization) -> LocalHamiltonian:
    """Build ``H_Lambda`` on a cube or a finite site set, in canonical site order."""
    cube = domain if isinstance(domain, geo.CubeSpec) else None
    if cube is not None:
        sites = geo.cube_sites(cube)
    else:
        sites = np.atleast_2d(np.asarray(domain, dtype=np.int64))
        if sites.size == 0:
            raise InvalidGeometry("empty domain")
        sites = np.unique(sites, axis=0)  # lexicographic
    n, d = sites.shape
    pot = V.values_at(sites)
    i, j = _neighbour_pairs(sites)
    data = np.concatenate([2.0 * d + pot, -np.ones(2 * len(i))])
    rows = np.concatenate([np.arange(n), i, j])
    cols = np.concatenate([np.arange(n), j, i])
    H = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return LocalHamiltonian(sites, pot, H, cube)


def spectrum(H: LocalHamiltonian, cap: int = DENSE_CAP) -> np.ndarray:
    if H.n > cap:
        raise TooLarge(f"{H.n} sites exceed the dense cap {cap}; use green_block instead")
    return H.eigenvalues


def _as_index(H: LocalHamiltonian, sel) -> np.ndarray:
    # 2-D arrays are sites, 1-D arrays are row indices
    sel = np.asarray(sel)
    if sel.ndim == 2:
        return H.index_of(sel)
    return sel.astype(int)


def green_columns(H: LocalHamiltonian, E: float, cols: np.ndarray, check: bool = True) -> np.ndarray:
    """Full columns ``(H - E)^{-1} e_c`` for the given column indices."""
    if check:
        dist = H.spectral_distance(E)
        if dist < NEAR_SINGULAR_TOL:
            raise NearSingular(dist, NEAR_SINGULAR_TOL)
    rhs = np.zeros((H.n, len(cols)))
    rhs[cols, np.arange(len(cols))] = 1.0
    A = H.matrix - E * sp.identity(H.n, format="csr")
    if H.n <= _DENSE_SOLVE_MAX:
        Ad = A.toarray()
        X = sla.lu_solve(sla.lu_factor(Ad, check_finite=False), rhs, check_finite=False)
        resid = np.linalg.norm(Ad @ X - rhs, axis=0)
    else:
        X = spla.splu(A.tocsc()).solve(rhs)
        resid = np.linalg.norm(A @ X - rhs, axis=0)
    scale = np.maximum(np.linalg.norm(X, axis=0), 1.0)
    if np.any(resid > RESIDUAL_TOL * scale):
        raise NearSingular(H.spectral_distance(E), NEAR_SINGULAR_TOL)
    return X


def green_block(H: LocalHamiltonian, E: float, rows, cols) -> np.ndarray:
    """Block ``1_rows (H - E)^{-1} 1_cols``.

    ``rows``/``cols`` are site arrays of shape ``(m, d)`` or 1-D index arrays.
    Raises :class:`NearSingular` when ``dist(E, spectrum) < 1e-12``.
    """
    r = _as_index(H, rows)
    c = _as_index(H, cols)
    return green_columns(H, E, c)[r, :]


def commutator_matrix(cube: geo.CubeSpec, ambient: Optional[geo.CubeSpec] = None) -> np.ndarray:
    """``W = [Phi, H_ambient]`` with ``Phi`` the indicator of ``Lambda_{R-1}`` of ``cube``."""
    if cube.size < 3:
        raise InvalidGeometry("commutator needs cube size >= 3")
    if ambient is None:
        ambient = geo.CubeSpec(cube.center, cube.size + 4)
    if not ambient.contains_cube(cube):
        raise InvalidGeometry("ambient cube must contain the cube")
    sites = geo.cube_sites(ambient)
    phi = (geo.max_norm(sites - np.asarray(cube.center)) <= cube.radius - 1).astype(float)
    i, j = _neighbour_pairs(sites)
    n = len(sites)
    lap = sp.csr_matrix((-np.ones(2 * len(i)), (np.r_[i, j], np.r_[j, i])), shape=(n, n))
    P = sp.diags(phi)
    return (P @ lap - lap @ P).toarray()


def commutator_norm(cube: geo.CubeSpec, mode: str = "bound", ambient: Optional[geo.CubeSpec] = None) -> float:
    """``||W||``: the a priori bound ``8d`` (default) or the exact spectral norm."""
    if cube.size < 3:
        raise InvalidGeometry("commutator needs cube size >= 3")
    if mode == "bound":
        return 8.0 * cube.d
    if mode == "exact":
        W = commutator_matrix(cube, ambient)
        return float(np.linalg.norm(W, 2))
    raise ValueError(f"unknown commutator mode {mode!r}")


def coupling_constant(d: int, Y: int, w_norm: float) -> float:
    return float(Y) ** d * w_norm


def _core_and_annulus(cube: geo.CubeSpec):
    if cube.size % 3:
        raise InvalidGeometry(f"cube size {cube.size} is not divisible by 3")
    sites = geo.cube_sites(cube)
    rel = geo.max_norm(sites - np.asarray(cube.center))
    core = np.nonzero(rel <= (cube.size // 3 - 1) // 2)[0]
    annulus = np.nonzero(rel > cube.radius - 2)[0]
    return core, annulus


def dnorm(cube: geo.CubeSpec, E: float, V: DisorderRealization, Y: int, w_mode: str = "bound",
          H: Optional[LocalHamiltonian] = None) -> float:
    """Decorated Green-function norm of a cube; ``inf`` when ``E`` is (near) spectral.

    ``Y`` is the scale's growth factor entering ``C_W = Y^d ||W||``.
    """
    if H is None:
        H = assemble(cube, V)
    core, annulus = _core_and_annulus(cube)
    try:
        cols = green_columns(H, E, core)
    except NearSingular:
        return math.inf
    w = commutator_norm(cube, w_mode)
    block = cols[annulus, :]
    return coupling_constant(cube.d, Y, w) * float(np.linalg.norm(block, 2))


def classify_NR(cube: geo.CubeSpec, E: float, eps: float, V: DisorderRealization,
                H: Optional[LocalHamiltonian] = None) -> bool:
    if eps <= 0:
        raise ValueError("threshold must be positive")
    if H is None:
        H = assemble(cube, V)
    return H.spectral_distance(E) >= eps


def classify_NS(cube: geo.CubeSpec, E: float, eps: float, V: DisorderRealization, Y: int,
                w_mode: str = "bound", H: Optional[LocalHamiltonian] = None) -> bool:
    if eps <= 0:
        raise ValueError("threshold must be positive")
    if H is None:
        H = assemble(cube, V)
    if H.spectral_distance(E) < NEAR_SINGULAR_TOL:
        return False
    return dnorm(cube, E, V, Y, w_mode, H=H) <= eps


@dataclass
class ProbeResult:
    cube: geo.CubeSpec
    E: float
    dnorm: float
    spectral_distance: float
    is_NS: bool
    is_NR: bool
    cnr_detail: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"center": list(self.cube.center), "size": self.cube.size, "E": self.E,
                "dnorm": self.dnorm, "spectral_distance": self.spectral_distance,
                "is_NS": self.is_NS, "is_NR": self.is_NR}


def probe(cube: geo.CubeSpec, E: float, V: DisorderRealization, Y: int, eps_ns: float,
          eps_nr: float, w_mode: str = "bound") -> ProbeResult:
    H = assemble(cube, V)
    dist = H.spectral_distance(E)
    dn = dnorm(cube, E, V, Y, w_mode, H=H)
    return ProbeResult(cube, E, dn, dist, dist >= NEAR_SINGULAR_TOL and dn <= eps_ns, dist >= eps_nr)


def concentric_sizes(L_k: int, Y_next: int) -> list:
    """Side lengths of the ``Y_next - 1`` concentric cubes checked for CNR.

    Cell radii ``r = K, ..., 3K - 1`` (``Y_next = 2K + 1``) around the center,
    each cube being the union of cells within skeleton distance ``r``.
    """
    if L_k % 3 or Y_next % 2 == 0 or Y_next < 3:
        raise InvalidGeometry("need L_k divisible by 3 and odd Y >= 3")
    ell = L_k // 3
    K = (Y_next - 1) // 2
    return [(2 * r + 1) * ell for r in range(K, 3 * K)]


def classify_CNR(center, L_k: int, Y_next: int, E: float, eps: float, V: DisorderRealization):
    """``(is_CNR, detail)`` for the cube ``B_{Y_next L_k}(center)``.

    ``detail`` lists ``(size, spectral_distance, is_NR)`` for every concentric cube.
    """
    if eps <= 0:
        raise ValueError("threshold must be positive")
    detail = []
    for size in concentric_sizes(L_k, Y_next):
        H = assemble(geo.CubeSpec(center, size), V)
        dist = H.spectral_distance(E)
        detail.append((size, dist, dist >= eps))
    return all(nr for _, _, nr in detail), detail


def gri_geometry_ok(inner: geo.CubeSpec, ambient: geo.CubeSpec) -> bool:
    """Inner cube inside ambient with ``d(outer boundary, inner boundary of ambient) >= 2``."""
    if not ambient.contains_cube(inner):
        return False
    w, u = np.asarray(inner.center), np.asarray(ambient.center)
    gaps = np.r_[(u + ambient.radius) - (w + inner.radius), (w - inner.radius) - (u - ambient.radius)]
    return bool(gaps.min() - 1 >= 2)


def gri_residual(inner: geo.CubeSpec, ambient: geo.CubeSpec, E: float, A, V: DisorderRealization):
    """Both sides of the geometric resolvent inequality for one geometry.

    ``lhs = ||1_A G_amb chi||`` and ``rhs = ||W|| ||1_A G_amb Gamma|| ||Gamma G_inner chi||``
    where ``chi`` is the inner cube's core cell, ``Gamma`` its width-2 annulus
    and ``W`` the exact commutator for this geometry.
    """
    if not gri_geometry_ok(inner, ambient):
        raise InvalidGeometry("inner cube must sit in the ambient cube with boundary separation >= 2")
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    if np.any(inner.contains(A)) or not np.all(ambient.contains(A)):
        raise InvalidGeometry("A must lie in the ambient cube outside the inner cube")
    H_in = assemble(inner, V)
    H_amb = assemble(ambient, V)
    for H in (H_in, H_amb):
        dist = H.spectral_distance(E)
        if dist < NEAR_SINGULAR_TOL:
            raise NearSingular(dist)
    core, annulus = _core_and_annulus(inner)
    inner_sites = geo.cube_sites(inner)
    amb_core = H_amb.index_of(inner_sites[core])
    amb_annulus = H_amb.index_of(inner_sites[annulus])
    a_idx = H_amb.index_of(A)

    G_amb_core = green_columns(H_amb, E, amb_core, check=False)[a_idx, :]
    G_amb_ann = green_columns(H_amb, E, amb_annulus, check=False)[a_idx, :]
    G_in = green_columns(H_in, E, core, check=False)[annulus, :]
    w = commutator_norm(inner, "exact", ambient)
    lhs = float(np.linalg.norm(G_amb_core, 2))
    rhs = w * float(np.linalg.norm(G_amb_ann, 2)) * float(np.linalg.norm(G_in, 2))
    return lhs, rhs


def boundary_max_green(x, L: int, E: float, V: DisorderRealization) -> float:
    """``max_{y in inner boundary of B_L(x)} |G_{B_L(x)}(x, y; E)|``; ``inf`` if near-singular."""
    cube = geo.CubeSpec(x, L)
    H = assemble(cube, V)
    try:
        col = green_columns(H, E, H.index_of(np.atleast_2d(cube.center)))[:, 0]
    except NearSingular:
        return math.inf
    bidx = H.index_of(geo.interior_boundary(cube))
    return float(np.abs(col[bidx]).max())
