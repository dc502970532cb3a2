"""Cubes, cells, admissible centers, annuli and skeleton graphs on Z^d.

Sites are stored as integer arrays of shape ``(n, d)``.  Every function that
returns a site set returns it in lexicographic order (first coordinate varies
slowest); this is the basis order used for all matrix assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Optional

import numpy as np

from .errors import InvalidGeometry

EXACT_DISJOINT_LIMIT = 20


def max_norm(x) -> np.ndarray:
    return np.abs(np.asarray(x)).max(axis=-1)


def l1_norm(x) -> np.ndarray:
    return np.abs(np.asarray(x)).sum(axis=-1)


@dataclass(frozen=True)
class CubeSpec:
    """Lattice cube ``B_L(center) = {y : |y - center| <= L/2}`` (max-norm).

    ``size`` is the number of sites per axis and must be odd.
    """

    center: tuple
    size: int
    scale_index: Optional[int] = None

    def __post_init__(self):
        center = tuple(int(c) for c in np.atleast_1d(self.center))
        object.__setattr__(self, "center", center)
        if len(center) < 1:
            raise InvalidGeometry("dimension must be >= 1")
        if int(self.size) != self.size or self.size < 1 or self.size % 2 == 0:
            raise InvalidGeometry(f"cube size must be an odd positive integer, got {self.size}")

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> int:
        return (self.size - 1) // 2

    @property
    def volume(self) -> int:
        return self.size ** self.d

    @classmethod
    def ball(cls, center, radius: int, scale_index=None) -> "CubeSpec":
        """``Lambda_r(center) = B_{2r+1}(center)``."""
        return cls(center, 2 * radius + 1, scale_index)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return max_norm(pts - np.asarray(self.center)) <= self.radius

    def contains_cube(self, other: "CubeSpec") -> bool:
        offset = max_norm(np.subtract(other.center, self.center))
        return bool(offset + other.radius <= self.radius)

    def index_of(self, pts) -> np.ndarray:
        """Row index of each site in :func:`cube_sites` order (-1 if outside)."""
        pts = np.atleast_2d(pts)
        rel = pts - (np.asarray(self.center) - self.radius)
        inside = np.all((rel >= 0) & (rel < self.size), axis=1)
        weights = self.size ** np.arange(self.d - 1, -1, -1)
        idx = rel @ weights
        return np.where(inside, idx, -1)


def cube_sites(c: CubeSpec) -> np.ndarray:
    axes = [np.arange(x - c.radius, x + c.radius + 1) for x in c.center]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def ball_sites(center, radius: int) -> np.ndarray:
    if radius < 0:
        return np.zeros((0, len(center)), dtype=int)
    return cube_sites(CubeSpec.ball(center, radius))


def core_shell(c: CubeSpec):
    """Split a cube into its central cell (the core) and the remaining shell.

    Returns ``(core, shell)`` where ``core`` is a :class:`CubeSpec` of size
    ``L/3`` and ``shell`` the array of the other ``L^d - (L/3)^d`` sites.
    """
    if c.size % 3:
        raise InvalidGeometry(f"cube size {c.size} is not divisible by 3")
    core = CubeSpec(c.center, c.size // 3)
    sites = cube_sites(c)
    shell = sites[~core.contains(sites)]
    return core, shell


def annulus_mask(c: CubeSpec, width: int = 2) -> np.ndarray:
    """Boolean mask over :func:`cube_sites` for the outer ``width`` layers.

    For radius below ``width`` the inner ball is empty and the whole cube is
    returned; use :func:`boundary_annulus` when a proper annulus is required.
    """
    sites = cube_sites(c)
    return max_norm(sites - np.asarray(c.center)) > c.radius - width


def boundary_annulus(c: CubeSpec) -> np.ndarray:
    """Width-2 boundary annulus ``Lambda_R \\ Lambda_{R-2}``, ``R = (L-1)/2``."""
    if c.size < 5:
        raise InvalidGeometry(f"annulus needs size >= 5, got {c.size}")
    return cube_sites(c)[annulus_mask(c)]


def interior_boundary(c: CubeSpec) -> np.ndarray:
    """Sites of the cube with a lattice neighbour outside it."""
    sites = cube_sites(c)
    return sites[max_norm(sites - np.asarray(c.center)) == c.radius]


def cell_center(pts, cell_size: int) -> np.ndarray:
    """Admissible center of the cell (spacing ``cell_size``, origin-anchored) holding each site."""
    if cell_size < 1 or cell_size % 2 == 0:
        raise InvalidGeometry(f"cell size must be odd and positive, got {cell_size}")
    pts = np.atleast_2d(pts)
    half = (cell_size - 1) // 2
    return cell_size * np.floor_divide(pts + half, cell_size)


def covering_centers(A, cell_size: int) -> np.ndarray:
    """Admissible centers whose cells intersect ``A``, in lexicographic order."""
    A = np.atleast_2d(np.asarray(A))
    if A.size == 0:
        return np.zeros((0, A.shape[1] if A.ndim == 2 else 1), dtype=int)
    centers = np.unique(cell_center(A, cell_size), axis=0)
    return centers


def is_admissible(center, cell_size: int) -> bool:
    return bool(np.all(np.mod(center, cell_size) == 0))


@dataclass(frozen=True)
class CellPartition:
    """Origin-anchored partition of Z^d into cubes of odd size ``cell_size``."""

    cell_size: int

    def __post_init__(self):
        if self.cell_size < 1 or self.cell_size % 2 == 0:
            raise InvalidGeometry(f"cell size must be odd and positive, got {self.cell_size}")

    def center_of(self, pts) -> np.ndarray:
        return cell_center(pts, self.cell_size)

    def cell(self, center) -> CubeSpec:
        if not is_admissible(center, self.cell_size):
            raise InvalidGeometry(f"{tuple(center)} is not an admissible center")
        return CubeSpec(center, self.cell_size)

    def centers_in(self, c: CubeSpec) -> np.ndarray:
        """Admissible centers whose cells lie inside ``c``."""
        cands = covering_centers(cube_sites(c), self.cell_size)
        half = (self.cell_size - 1) // 2
        keep = max_norm(cands - np.asarray(c.center)) + half <= c.radius
        return cands[keep]

    def neighbours(self, center) -> np.ndarray:
        center = np.asarray(center)
        offs = np.array([o for o in product((-1, 0, 1), repeat=len(center)) if any(o)])
        return center + self.cell_size * offs


@dataclass(frozen=True)
class SkeletonGraph:
    """Cell-center graph of a cube; edges join centers at max-distance ``cell_size``."""

    cube: CubeSpec
    cell_size: int
    vertices: np.ndarray = field(repr=False)
    radius_of: np.ndarray = field(repr=False)

    @property
    def R(self) -> int:
        return int(self.radius_of.max()) if len(self.radius_of) else 0

    def layer(self, r: int) -> np.ndarray:
        return self.vertices[self.radius_of == r]

    def ball(self, r: int) -> np.ndarray:
        return self.vertices[self.radius_of <= r]

    def layer_sizes(self) -> list:
        return [int((self.radius_of == r).sum()) for r in range(self.R + 1)]

    @cached_property
    def edges(self) -> list:
        idx = {tuple(v): i for i, v in enumerate(self.vertices)}
        out = []
        for i, v in enumerate(self.vertices):
            for w in CellPartition(self.cell_size).neighbours(v):
                j = idx.get(tuple(w))
                if j is not None and j > i:
                    out.append((i, j))
        return out


def skeleton(c: CubeSpec, cell_size: int) -> SkeletonGraph:
    if c.size % cell_size or (c.size // cell_size) % 2 == 0:
        raise InvalidGeometry(f"cube size {c.size} is not an odd multiple of cell size {cell_size}")
    if not is_admissible(c.center, cell_size):
        raise InvalidGeometry(f"center {c.center} is not admissible for cell size {cell_size}")
    R = (c.size // cell_size - 1) // 2
    steps = cube_sites(CubeSpec((0,) * c.d, 2 * R + 1))
    vertices = np.asarray(c.center) + cell_size * steps
    # king-move graph distance equals the max-norm step count
    return SkeletonGraph(c, cell_size, vertices, max_norm(steps))


def cubes_disjoint(c1, c2, size: int) -> bool:
    return bool(max_norm(np.subtract(c1, c2)) >= size)


def max_disjoint_count(centers, cube_size: int):
    """Largest number of pairwise disjoint ``cube_size``-cubes among ``centers``.

    Returns ``(count, exact)``.  Up to :data:`EXACT_DISJOINT_LIMIT` centers the
    count is exact (branch and bound on the conflict graph); above it a greedy
    lexicographic maximal collection is returned and ``exact`` is False, so the
    count is only a lower bound.
    """
    centers = np.unique(np.atleast_2d(np.asarray(centers, dtype=int)), axis=0) if len(centers) else []
    n = len(centers)
    if n == 0:
        return 0, True
    diff = max_norm(centers[:, None, :] - centers[None, :, :])
    conflict = (diff < cube_size) & ~np.eye(n, dtype=bool)
    if n > EXACT_DISJOINT_LIMIT:
        chosen = []
        for i in range(n):
            if not any(conflict[i, j] for j in chosen):
                chosen.append(i)
        return len(chosen), False

    masks = [sum(1 << j for j in range(n) if conflict[i, j]) for i in range(n)]
    best = 0

    def search(candidates: int, size: int):
        nonlocal best
        if size + bin(candidates).count("1") <= best:
            return
        if not candidates:
            best = size
            return
        i = (candidates & -candidates).bit_length() - 1
        search(candidates & ~masks[i] & ~(1 << i), size + 1)
        search(candidates & ~(1 << i), size)

    search((1 << n) - 1, 0)
    return best, True
