"""Seeded IID random potentials.

Each site value is a pure function of ``(master_seed, realization_index,
site coordinates)``: the uniform variate comes from a SplitMix64 hash chain
over those integers, so realizations do not depend on evaluation order or on
how work is split between processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import InvalidSpec, MissingPotential

FAMILIES = ("uniform", "holder", "almost_zero_order")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(values) -> np.ndarray:
    # zigzag so that negative coordinates map to distinct words
    v = np.asarray(values, dtype=np.int64)
    return ((v << 1) ^ (v >> 63)).astype(np.uint64)


def site_uniforms(master_seed: int, realization_index: int, sites) -> np.ndarray:
    """Uniform variates in (0, 1), one per site, from a counter-based hash."""
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    with np.errstate(over="ignore"):
        h = np.full(len(sites), np.uint64(int(master_seed) & _MASK64), dtype=np.uint64)
        h = _mix(h)
        h = _mix(h ^ _as_u64(np.full(len(sites), realization_index)))
        for i in range(sites.shape[1]):
            h = _mix(h ^ _as_u64(sites[:, i]))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


_AZO_EDGE = math.exp(-math.e ** 2)


def _azo_core(t, C):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    u = -np.log(t[pos])
    out[pos] = np.exp(-C * u / np.log(u))
    return out


def azo_cdf(t, C: float) -> np.ndarray:
    """Base distribution function of the almost-zero-order family on [0, 1].

    ``t**(C / ln ln(1/t))`` below ``exp(-e^2)``, then linear up to ``F(1) = 1``.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    edge_val = math.exp(-C * math.e ** 2 / 2)
    low = t <= _AZO_EDGE
    out = np.empty_like(t)
    out[low] = _azo_core(t[low], C)
    out[~low] = edge_val + (1 - edge_val) * (t[~low] - _AZO_EDGE) / (1 - _AZO_EDGE)
    return out


def azo_inverse(u, C: float, tol: float = 1e-14) -> np.ndarray:
    """Invert :func:`azo_cdf` by vectorised bisection to absolute tolerance ``tol``."""
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    n_iter = int(math.ceil(math.log2(1.0 / tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = azo_cdf(mid, C) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DisorderSpec:
    family: str = "uniform"
    amplitude: float = 1.0
    master_seed: int = 0
    a: float = 0.0
    b: float = 1.0
    beta: float = 1.0
    C: float = 1.0
    C_prime: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown disorder family {self.family!r}")
        if self.amplitude < 0:
            raise InvalidSpec("amplitude must be >= 0")
        if self.family == "holder" and not (0 < self.beta <= 1):
            raise InvalidSpec(f"Hölder order must lie in (0, 1], got {self.beta}")
        if self.family == "uniform" and not self.b > self.a:
            raise InvalidSpec("uniform family needs b > a")
        if self.family == "almost_zero_order" and (self.C <= 0 or self.C_prime <= 0):
            raise InvalidSpec("almost_zero_order needs C > 0 and C' > 0")

    @classmethod
    def uniform(cls, a=0.0, b=1.0, amplitude=1.0, master_seed=0):
        return cls("uniform", amplitude, master_seed, a=a, b=b)

    @classmethod
    def holder(cls, beta, amplitude=1.0, master_seed=0):
        return cls("holder", amplitude, master_seed, beta=beta)

    @classmethod
    def almost_zero_order(cls, C=1.0, C_prime=1.0, amplitude=1.0, master_seed=0):
        return cls("almost_zero_order", amplitude, master_seed, C=C, C_prime=C_prime)

    @property
    def regularity(self) -> float:
        """Hölder order of the marginal distribution (0 for almost_zero_order)."""
        return {"uniform": 1.0, "holder": self.beta, "almost_zero_order": 0.0}[self.family]

    def transform(self, u) -> np.ndarray:
        """Map uniform variates to potential values."""
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            return self.amplitude * (self.a + (self.b - self.a) * u)
        if self.family == "holder":
            return self.amplitude * u ** (1.0 / self.beta)
        return self.amplitude * azo_inverse(u, self.C)

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lam = self.amplitude
        if lam == 0:
            return (t >= 0).astype(float)
        x = t / lam
        if self.family == "uniform":
            return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        if self.family == "holder":
            return np.clip(x, 0.0, 1.0) ** self.beta
        return azo_cdf(x, self.C)

    def to_dict(self) -> dict:
        keys = {"uniform": ("a", "b"), "holder": ("beta",), "almost_zero_order": ("C", "C_prime")}
        out = {"family": self.family, "amplitude": self.amplitude, "master_seed": self.master_seed}
        out.update({k: getattr(self, k) for k in keys[self.family]})
        return out

    def with_seed(self, master_seed: int) -> "DisorderSpec":
        return DisorderSpec(**{**self.__dict__, "master_seed": master_seed})


def continuity_modulus(spec: DisorderSpec, eps: float) -> float:
    """``sup_t [F(t + eps) - F(t)]`` for the potential's distribution function."""
    if not 0 < eps < 0.5:
        raise InvalidSpec(f"eps must lie in (0, 1/2), got {eps}")
    lam = spec.amplitude
    if lam == 0:
        return 1.0
    if spec.family == "uniform":
        return min(1.0, eps / (lam * (spec.b - spec.a)))
    if spec.family == "holder":
        return min(1.0, (eps / lam) ** spec.beta)
    return _azo_modulus(eps / lam, spec.C)


def _azo_modulus(e: float, C: float) -> float:
    if e >= 1:
        return 1.0

    def gain(t):
        return float(azo_cdf(min(t + e, 1.0), C) - azo_cdf(t, C))

    grid = np.unique(np.concatenate([[0.0], np.logspace(-300, 0, 3001) * (1 - e),
                                     np.linspace(0, 1 - e, 2001),
                                     np.clip(_AZO_EDGE - e + np.linspace(-e, e, 201), 0, 1 - e)]))
    vals = azo_cdf(np.minimum(grid + e, 1.0), C) - azo_cdf(grid, C)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -gain(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-16})
        best = max(best, -float(res.fun))
    return best


def modulus_bound(spec: DisorderSpec, eps: float) -> float:
    """The almost-zero-order envelope ``C' eps^(C / ln|ln eps|)``."""
    if not 0 < eps < 0.5:
        raise InvalidSpec(f"eps must lie in (0, 1/2), got {eps}")
    return spec.C_prime * eps ** (spec.C / math.log(abs(math.log(eps))))


def _site_keys(sites: np.ndarray) -> Optional[np.ndarray]:
    d = sites.shape[1]
    bits = 63 // d
    if bits < 8 or np.abs(sites).max(initial=0) >= 1 << (bits - 1):
        return None
    shifted = (sites + (1 << (bits - 1))).astype(np.int64)
    key = np.zeros(len(sites), dtype=np.int64)
    for i in range(d):
        key = (key << bits) | shifted[:, i]
    return key


@dataclass(frozen=True)
class DisorderRealization:
    spec: DisorderSpec
    realization_index: int
    sites: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def values_at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        mine = _site_keys(self.sites)
        theirs = _site_keys(pts) if mine is not None else None
        if mine is None or theirs is None:
            table = {tuple(s): v for s, v in zip(self.sites.tolist(), self.values)}
            try:
                return np.array([table[tuple(p)] for p in pts.tolist()])
            except KeyError as exc:
                raise MissingPotential(f"no potential value at site {exc.args[0]}") from None
        order = np.argsort(mine, kind="stable")
        pos = np.searchsorted(mine, theirs, sorter=order)
        pos = np.minimum(pos, len(mine) - 1)
        found = mine[order[pos]] == theirs
        if not found.all():
            bad = tuple(pts[np.argmin(found)])
            raise MissingPotential(f"no potential value at site {bad}")
        return self.values[order[pos]]

    def restrict(self, pts) -> "DisorderRealization":
        pts = np.atleast_2d(pts)
        return DisorderRealization(self.spec, self.realization_index, pts, self.values_at(pts))


def sample(spec: DisorderSpec, realization_index: int, sites) -> DisorderRealization:
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    u = site_uniforms(spec.master_seed, realization_index, sites)
    return DisorderRealization(spec, realization_index, sites, spec.transform(u))


def constant(value: float, sites) -> DisorderRealization:
    """Deterministic potential, handy for free (``V = 0``) and symmetric test cases."""
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    spec = DisorderSpec.uniform(0.0, 1.0, amplitude=0.0)
    return DisorderRealization(spec, -1, sites, np.full(len(sites), float(value)))


def from_values(sites, values) -> DisorderRealization:
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    values = np.asarray(values, dtype=float)
    if values.shape != (len(sites),):
        raise InvalidSpec("one value per site expected")
    return DisorderRealization(DisorderSpec.uniform(0.0, 1.0, amplitude=0.0), -1, sites, values)
