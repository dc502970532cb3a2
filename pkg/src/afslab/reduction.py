"""Fixed-energy to variable-energy reduction and eigenfunction correlators.

The tail bounds are plain arithmetic on the reduction parameters.  The
energy sweep and the localization bound check run on concrete realizations,
with every "for some E in I" event approximated on a finite energy grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from . import operators as op
from .disorder import DisorderRealization
from .errors import InvalidGeometry, InvalidSpec

GROUP_RTOL = 1e-10
CONFIDENCE = 0.95


@dataclass(frozen=True)
class ReductionParams:
    """Parameters ``a, b, c, q`` of the reduction on an energy interval.

    ``f`` bounds the probability that the spectra of two disjoint cubes come
    within ``eps`` of each other; ``f_provenance`` says where it came from.
    """

    a: float
    b: float
    c: float
    q: float
    interval: tuple = (0.0, 1.0)
    f: Callable = field(default=lambda eps: 0.0, compare=False, repr=False)
    f_provenance: str = "zero"

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0 or self.q < 0:
            raise InvalidSpec("invalid-params: a, b, c must be positive and q >= 0")
        lo, hi = self.interval
        if not hi > lo:
            raise InvalidSpec("invalid-params: empty energy interval")
        # small relative slack so that b = a c^2 computed in floats is accepted
        if self.b > min(self.a * self.c ** 2, self.c) * (1 + 1e-12):
            raise InvalidSpec(f"invalid-params: b = {self.b} exceeds min(a c^2, c) = "
                              f"{min(self.a * self.c ** 2, self.c)}")

    @property
    def width(self) -> float:
        return self.interval[1] - self.interval[0]

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "q": self.q,
                "interval": list(self.interval), "f": self.f_provenance}


def etv_tail_value(width: float, q: float, b: float, c: float, f: Callable) -> float:
    """``|I| q / b + f(2c)`` without checking the parameter relation."""
    return width * q / b + f(2 * c)


def etv_tail_bound(params: ReductionParams) -> float:
    return etv_tail_value(params.width, params.q, params.b, params.c, params.f)


def corollary_bound(a: float, q: float, width: float, f: Callable):
    """``(threshold, tail)`` of the simplified bound for ``a, q`` in ``(0, 1]``."""
    if not (0 < a <= 1 and 0 < q <= 1):
        raise InvalidSpec("invalid-params: a and q must lie in (0, 1]")
    if width <= 0:
        raise InvalidSpec("invalid-params: interval width must be positive")
    c = q ** 0.25
    return max(a, math.sqrt(q)), width * c + f(2 * c)


def two_cube_f(C: float, L: int, d: int) -> Callable:
    """Analytic two-cube spectral-distance bound ``C L^(2d) eps`` (uniform family)."""
    return lambda eps: min(1.0, C * L ** (2 * d) * eps)


def tabulated_f(eps_grid, probs) -> Callable:
    """Monotone step function from an empirical curve, rounded up to the next grid point."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    order = np.argsort(eps_grid)
    eps_grid = eps_grid[order]
    probs = np.maximum.accumulate(np.asarray(probs, dtype=float)[order])

    def f(eps):
        i = int(np.searchsorted(eps_grid, eps, side="left"))
        return 1.0 if i >= len(eps_grid) else float(probs[i])
    return f


def _groups(evals: np.ndarray, rtol: float = GROUP_RTOL) -> list:
    # evals sorted ascending; split where the gap is not tiny relative to the magnitude
    scale = np.maximum(1.0, np.abs(evals))
    breaks = np.nonzero(np.diff(evals) > rtol * scale[1:])[0] + 1
    return np.split(np.arange(len(evals)), breaks)


def efc_pair(V: DisorderRealization, x, y, domain, window=None, H=None) -> float:
    """Eigenfunction correlator ``sum_j |<1_x, P_j 1_y>|`` over the spectral projectors of ``H_domain``.

    This is the supremum of ``|<1_x, phi(H) 1_y>|`` over Borel ``phi`` with
    ``|phi| <= 1``.  With ``window = (lo, hi)`` only eigenvalues in the window
    count, i.e. the supremum is over ``phi`` supported there.
    """
    if H is None:
        H = op.assemble(domain, V)
    ix, iy = H.index_of(np.atleast_2d(x))[0], H.index_of(np.atleast_2d(y))[0]
    evals, vecs = H.eigh
    prod = vecs[ix, :] * vecs[iy, :]
    total = 0.0
    for g in _groups(evals):
        if window is not None and not (window[0] <= evals[g[0]] <= window[1]):
            continue
        total += abs(prod[g].sum())
    return float(total)


def spectral_function_value(V: DisorderRealization, x, y, domain, signs, H=None) -> float:
    """``<1_x, phi(H) 1_y>`` for ``phi`` taking value ``signs[g]`` on eigenvalue group ``g``."""
    if H is None:
        H = op.assemble(domain, V)
    ix, iy = H.index_of(np.atleast_2d(x))[0], H.index_of(np.atleast_2d(y))[0]
    evals, vecs = H.eigh
    prod = vecs[ix, :] * vecs[iy, :]
    groups = _groups(evals)
    return float(sum(s * prod[g].sum() for s, g in zip(signs, groups)))


def n_groups(H) -> int:
    return len(_groups(H.eigh[0]))


def _boundary_green_on_grid(H, cube: geo.CubeSpec, E: np.ndarray) -> np.ndarray:
    evals, vecs = H.eigh
    ic = H.index_of(np.atleast_2d(cube.center))[0]
    ib = H.index_of(geo.interior_boundary(cube))
    # G(x, y; E) = sum_j psi_j(x) psi_j(y) / (lambda_j - E)
    weights = vecs[ic, :][None, :] / (evals[None, :] - E[:, None])
    return np.abs(weights @ vecs[ib, :].T).max(axis=1)


@dataclass
class SweepReport:
    z: tuple
    L: int
    interval: tuple
    grid_step: float
    a: float
    c: float
    n_grid: int
    n_skipped: int
    exceedances: int
    uncovered: int
    intervals_used: int
    interval_cap: int

    @property
    def covered(self) -> bool:
        return self.uncovered == 0

    def to_dict(self) -> dict:
        return {**self.__dict__, "z": list(self.z), "interval": list(self.interval),
                "covered": self.covered}


def energy_sweep_structure(V: DisorderRealization, z, L: int, interval, grid_step: float,
                           a: float, c: float) -> SweepReport:
    """Locate the energies where the boundary Green function of ``B_L(z)`` exceeds ``2a``.

    Checks that each such grid energy lies within ``2c`` of an eigenvalue of
    ``H_{B_L(z)}`` and counts the eigenvalue-centred intervals needed.
    """
    if grid_step <= 0:
        raise InvalidSpec("grid_step must be positive")
    cube = geo.CubeSpec(z, L)
    H = op.assemble(cube, V)
    evals = H.eigh[0]
    lo, hi = interval
    E = lo + grid_step * np.arange(int(math.floor((hi - lo) / grid_step + 1e-9)) + 1)
    dist = np.abs(E[:, None] - evals[None, :]).min(axis=1)
    keep = dist >= op.NEAR_SINGULAR_TOL
    E = E[keep]
    F = _boundary_green_on_grid(H, cube, E) if len(E) else np.zeros(0)
    exceed = E[F > 2 * a]
    used = set()
    uncovered = 0
    for e in exceed:
        near = np.nonzero(np.abs(evals - e) <= 2 * c)[0]
        if len(near):
            used.add(int(near[np.argmin(np.abs(evals[near] - e))]))
        else:
            uncovered += 1
    return SweepReport(tuple(cube.center), L, (lo, hi), grid_step, a, c, int(keep.size),
                       int((~keep).sum()), int(len(exceed)), uncovered, len(used), (3 * L) ** cube.d)


def dnorm_on_grid(cube: geo.CubeSpec, V: DisorderRealization, Y: int, E: np.ndarray,
                  w_mode: str = "bound") -> np.ndarray:
    """Decorated norm of ``cube`` at each grid energy via one eigendecomposition."""
    H = op.assemble(cube, V)
    evals, vecs = H.eigh
    core, annulus = op._core_and_annulus(cube)
    E = np.asarray(E, dtype=float)
    inv = 1.0 / (evals[None, :] - E[:, None])
    blocks = np.einsum("aj,ej,cj->eac", vecs[annulus, :], inv, vecs[core, :])
    norms = np.linalg.norm(blocks, ord=2, axis=(1, 2))
    C = op.coupling_constant(cube.d, Y, op.commutator_norm(cube, w_mode))
    out = C * norms
    near = np.abs(E[:, None] - evals[None, :]).min(axis=1) < op.NEAR_SINGULAR_TOL
    out[near] = np.inf
    return out


def both_singular_somewhere(V: DisorderRealization, x, y, L: int, eps: float, E_grid,
                            Y: int = 9, w_mode: str = "bound") -> bool:
    """Grid version of "for some E in I both ``B_L(x)`` and ``B_L(y)`` are (E, eps)-S"."""
    dx = dnorm_on_grid(geo.CubeSpec(x, L), V, Y, E_grid, w_mode)
    dy = dnorm_on_grid(geo.CubeSpec(y, L), V, Y, E_grid, w_mode)
    return bool(np.any((dx > eps) & (dy > eps)))


def hoeffding_interval(values, level: float = CONFIDENCE):
    """Two-sided interval for the mean of ``[0, 1]``-valued samples."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise InvalidSpec("no samples")
    m = float(values.mean())
    half = math.sqrt(math.log(2 / (1 - level)) / (2 * n))
    return m, max(0.0, m - half), min(1.0, m + half)


@dataclass
class DLCheck:
    n: int
    eps: float
    efc_mean: float
    efc_ci: tuple
    h_hat: float
    h_ci: tuple
    bound_upper: float
    verdict: str

    def to_dict(self) -> dict:
        return {**self.__dict__, "efc_ci": list(self.efc_ci), "h_ci": list(self.h_ci)}


def dl_bound_check(efc_values, hits, eps: float, x, y, L: int, ambient: geo.CubeSpec) -> DLCheck:
    """Compare the mean correlator with ``4 eps + h`` using confidence-interval endpoints.

    ``hits[i]`` says whether realization ``i`` had both cubes singular at some
    grid energy.  "pass" needs the upper end of the correlator interval below
    ``4 eps`` plus the upper end of the ``h`` interval; "fail" needs the lower
    end above it; anything else is "inconclusive".
    """
    from .harness import clopper_pearson

    for p in (x, y):
        if not ambient.contains_cube(geo.CubeSpec(p, L + 2)):
            raise InvalidGeometry(f"B_(L+1)({tuple(np.atleast_1d(p))}) is not inside the ambient cube")
    hits = np.asarray(hits, dtype=bool)
    m, m_lo, m_hi = hoeffding_interval(efc_values)
    k, n = int(hits.sum()), len(hits)
    h_lo, h_hi = clopper_pearson(k, n)
    bound = 4 * eps + h_hi
    if m_hi <= bound:
        verdict = "pass"
    elif m_lo > bound:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return DLCheck(n, eps, m, (m_lo, m_hi), k / n, (h_lo, h_hi), bound, verdict)
