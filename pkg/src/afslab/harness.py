"""Monte-Carlo estimators and per-realization lemma checks.

Every estimator draws realization ``i`` for ``i`` in ``range(start, start + n)``
from the counter-based generator, so results depend only on the disorder
spec, its master seed and the index range.  Work items run serially or in a
process pool; ``Executor.map`` keeps the input order, so aggregates are the
same for any worker count.

Scale parameters passed in here normally come from the deterministic engine.
At desk scale ``L_0`` is far below the theorem's threshold, so these runs
test the implications, not the hypotheses of the main theorem; each report
says so in ``params["note"]``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from scipy import stats

from . import geometry as geo
from . import operators as op
from .disorder import DisorderRealization, DisorderSpec, sample
from .errors import InvalidSpec, TooLarge
from .reduction import efc_pair

CONFIDENCE = 0.95
REL_TOL = 1e-8
DESK_NOTE = "desk-scale parameters: implications are tested, the L0 threshold is not met"


def clopper_pearson(k: int, n: int, level: float = CONFIDENCE):
    """Exact two-sided binomial interval for ``k`` successes out of ``n``."""
    if n < 1 or not 0 <= k <= n:
        raise InvalidSpec(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    alpha = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class EstimatorResult:
    event: str
    n: int
    successes: int
    seed: int
    params: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    @property
    def p_hat(self) -> float:
        return self.successes / self.n

    @property
    def ci(self):
        return clopper_pearson(self.successes, self.n)

    def to_dict(self) -> dict:
        lo, hi = self.ci
        return {"event": self.event, "n": self.n, "successes": self.successes,
                "p_hat": self.p_hat, "ci_lo": lo, "ci_hi": hi, "seed": self.seed,
                "params": self.params}

    def row(self) -> dict:
        lo, hi = self.ci
        return {"event": self.event, "n": self.n, "successes": self.successes,
                "p_hat": self.p_hat, "ci_lo": lo, "ci_hi": hi, "seed": self.seed}


@dataclass
class LemmaCheck:
    lemma: str
    index: int
    hypotheses_hold: bool
    conclusion_holds: bool
    margins: dict = field(default_factory=dict)

    @property
    def violation(self) -> bool:
        return self.hypotheses_hold and not self.conclusion_holds

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "index": self.index, "hypotheses_hold": self.hypotheses_hold,
                "conclusion_holds": self.conclusion_holds, "violation": self.violation,
                "margins": self.margins}


def run_items(fn, items, workers: int = 1) -> list:
    """``[fn(i) for i in items]``, optionally on a process pool; order is preserved."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _check_n(n: int):
    if n < 1:
        raise InvalidSpec(f"need at least one sample, got n={n}")


def _check_cap(L: int, d: int):
    if L ** d > op.DENSE_CAP:
        raise TooLarge(f"cube with {L ** d} sites exceeds the solver cap {op.DENSE_CAP}")


def _origin(d: int) -> tuple:
    return (0,) * d


# ---------------------------------------------------------------- singular probability

def _singular_item(i, spec, L, d, E, eps, Y, w_mode):
    cube = geo.CubeSpec(_origin(d), L)
    V = sample(spec, i, geo.cube_sites(cube))
    H = op.assemble(cube, V)
    dist = H.spectral_distance(E)
    dn = op.dnorm(cube, E, V, Y, w_mode, H=H)
    ns = dist >= op.NEAR_SINGULAR_TOL and dn <= eps
    return {"index": i, "dnorm": dn, "spectral_distance": dist, "singular": not ns}


def estimate_singular_prob(L: int, E: float, b: float, n: int, disorder: DisorderSpec, d: int = 1,
                           Y: int = 9, w_mode: str = "bound", workers: int = 1,
                           start: int = 0) -> EstimatorResult:
    """Frequency of ``B_L(0)`` failing to be (E, L^-b)-NS."""
    _check_n(n)
    _check_cap(L, d)
    eps = float(L) ** (-float(b))
    fn = partial(_singular_item, spec=disorder, L=L, d=d, E=E, eps=eps, Y=Y, w_mode=w_mode)
    recs = run_items(fn, range(start, start + n), workers)
    params = {"L": L, "d": d, "E": E, "b": float(b), "eps": eps, "Y": Y, "w_mode": w_mode,
              "start": start, "disorder": disorder.to_dict(), "note": DESK_NOTE}
    return EstimatorResult("singular", n, sum(r["singular"] for r in recs), disorder.master_seed,
                           params, recs)


# ---------------------------------------------------------------- Wegner

def _distance_item(i, spec, L, d, E):
    cube = geo.CubeSpec(_origin(d), L)
    V = sample(spec, i, geo.cube_sites(cube))
    return {"index": i, "spectral_distance": op.assemble(cube, V).spectral_distance(E)}


def wegner_constant(disorder: DisorderSpec) -> Optional[float]:
    """``2 / (density lower bound)`` for the uniform family, ``None`` otherwise."""
    if disorder.family != "uniform" or disorder.amplitude == 0:
        return None
    return 2.0 * disorder.amplitude * (disorder.b - disorder.a)


@dataclass
class WegnerReport:
    result: EstimatorResult
    curve: list
    constant: Optional[float]
    slope: Optional[float]

    def bound(self, eps: float) -> Optional[float]:
        if self.constant is None:
            return None
        d, L = self.result.params["d"], self.result.params["L"]
        return self.constant * L ** d * eps

    @property
    def within_bound(self) -> Optional[bool]:
        """Upper CI below ``C L^d eps`` at every grid point (uniform family only)."""
        if self.constant is None:
            return None
        return all(r.ci[1] <= self.bound(e) for e, r in self.curve)

    def rows(self) -> list:
        out = []
        for e, r in self.curve:
            row = {"eps": e, **r.row()}
            row["bound"] = self.bound(e)
            out.append(row)
        return out


def _loglog_slope(curve) -> Optional[float]:
    pts = [(math.log(e), math.log(r.p_hat)) for e, r in curve if r.successes > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def estimate_wegner(L: int, s: float, E: float, n: int, disorder: DisorderSpec, d: int = 1,
                    eps_grid=None, workers: int = 1, start: int = 0) -> WegnerReport:
    """Frequency of ``dist(spectrum of B_L(0), E) < eps`` at ``eps = L^-s`` and over ``eps_grid``."""
    _check_n(n)
    _check_cap(L, d)
    eps0 = float(L) ** (-float(s))
    fn = partial(_distance_item, spec=disorder, L=L, d=d, E=E)
    recs = run_items(fn, range(start, start + n), workers)
    dist = np.array([r["spectral_distance"] for r in recs])
    params = {"L": L, "d": d, "E": E, "s": float(s), "start": start, "disorder": disorder.to_dict()}

    def at(eps):
        return EstimatorResult("not-NR", n, int((dist < eps).sum()), disorder.master_seed,
                               {**params, "eps": eps})

    main = at(eps0)
    main.records = recs
    grid = [] if eps_grid is None else [float(e) for e in eps_grid]
    curve = [(e, at(e)) for e in grid]
    return WegnerReport(main, curve, wegner_constant(disorder), _loglog_slope(curve))


# ---------------------------------------------------------------- CNR failure

def _cnr_item(i, spec, L_k, Y_next, d, E, eps):
    big = geo.CubeSpec(_origin(d), L_k * Y_next)
    V = sample(spec, i, geo.cube_sites(big))
    ok, detail = op.classify_CNR(_origin(d), L_k, Y_next, E, eps, V)
    return {"index": i, "cnr": ok, "not_nr_sizes": [s for s, _, nr in detail if not nr]}


def estimate_cnr_failure(L_k: int, Y_next: int, E: float, s_k: float, n: int, disorder: DisorderSpec,
                         d: int = 1, workers: int = 1, start: int = 0) -> EstimatorResult:
    """Frequency of ``B_{L_{k+1}}(0)`` failing to be (E, L_{k+1}^-s_k)-CNR.

    ``params["per_size"]`` holds the per-cube not-NR counts on the same
    samples, so the union bound can be checked directly.
    """
    _check_n(n)
    L_next = L_k * Y_next
    _check_cap(L_next, d)
    eps = float(L_next) ** (-float(s_k))
    fn = partial(_cnr_item, spec=disorder, L_k=L_k, Y_next=Y_next, d=d, E=E, eps=eps)
    recs = run_items(fn, range(start, start + n), workers)
    sizes = op.concentric_sizes(L_k, Y_next)
    per_size = {sz: sum(sz in r["not_nr_sizes"] for r in recs) for sz in sizes}
    params = {"L_k": L_k, "Y_next": Y_next, "L_next": L_next, "d": d, "E": E, "s_k": float(s_k),
              "eps": eps, "start": start, "per_size": per_size, "disorder": disorder.to_dict(),
              "note": DESK_NOTE}
    return EstimatorResult("not-CNR", n, sum(not r["cnr"] for r in recs), disorder.master_seed,
                           params, recs)


# ---------------------------------------------------------------- dominated decay and the layer chain

@dataclass(frozen=True)
class LemmaScale:
    """Scale-k data needed by the per-realization checks."""

    d: int
    L_k: int
    Y_k: int
    b_k: float
    s_k: float
    Y_next: int
    S_next: int
    w_mode: str = "bound"

    @classmethod
    def from_early(cls, es, w_mode: str = "bound") -> "LemmaScale":
        return cls(es.d, es.L, es.Y, float(es.b), float(es.s), es.Y_next, es.S_next, w_mode)

    @property
    def L_next(self) -> int:
        return self.L_k * self.Y_next

    @property
    def N_next(self) -> int:
        return self.Y_next - 5 * self.S_next - 1

    @property
    def eps_ns(self) -> float:
        return float(self.L_k) ** (-self.b_k)

    @property
    def eps_cnr(self) -> float:
        return float(self.L_next) ** (-self.s_k)

    @property
    def C_W(self) -> float:
        w = 8.0 * self.d if self.w_mode == "bound" else op.commutator_norm(
            geo.CubeSpec(_origin(self.d), self.L_k), self.w_mode)
        return op.coupling_constant(self.d, self.Y_k, w)

    def to_dict(self) -> dict:
        return {**self.__dict__, "L_next": self.L_next, "N_next": self.N_next}


def _cell_dnorms(V, scale: LemmaScale, u, E):
    """Decorated norms of ``B_{L_k}(c)`` for every admissible center ``c`` of the big cube."""
    big = geo.CubeSpec(u, scale.L_next)
    part = geo.CellPartition(scale.L_k // 3)
    centers = part.centers_in(geo.CubeSpec(u, scale.L_next - scale.L_k + scale.L_k // 3))
    dn = np.array([op.dnorm(geo.CubeSpec(c, scale.L_k), E, V, scale.Y_k, scale.w_mode) for c in centers])
    assert all(big.contains_cube(geo.CubeSpec(c, scale.L_k)) for c in centers)
    return centers, dn


def lemma_hypotheses(V: DisorderRealization, scale: LemmaScale, u, E: float) -> dict:
    """CNR of the big cube and the disjoint-singular-cube count at admissible centers."""
    cnr, detail = op.classify_CNR(u, scale.L_k, scale.Y_next, E, scale.eps_cnr, V)
    centers, dn = _cell_dnorms(V, scale, u, E)
    singular = centers[~(dn <= scale.eps_ns)]
    count, exact = geo.max_disjoint_count(singular, scale.L_k) if len(singular) else (0, True)
    # an inexact (greedy) count is only a lower bound, so it cannot confirm the hypothesis
    few = count <= scale.S_next and exact
    return {"cnr": bool(cnr), "detail": detail, "singular": singular, "count": int(count),
            "exact": bool(exact), "hold": bool(cnr and few)}


def check_dominated_decay(V: DisorderRealization, scale: LemmaScale, u, E: float, index: int = -1) -> LemmaCheck:
    """Dominated decay on one realization: CNR plus few singular cubes imply decay of the big cube."""
    u = tuple(np.atleast_1d(u))
    hyp = lemma_hypotheses(V, scale, u, E)
    cnr, detail, singular, count, exact = (hyp[k] for k in ("cnr", "detail", "singular", "count", "exact"))
    big = geo.CubeSpec(u, scale.L_next)
    lhs = op.dnorm(big, E, V, scale.Y_next, scale.w_mode)
    L = float(scale.L_k)
    rhs = L ** (scale.d / 8) * L ** (-scale.b_k * scale.N_next)
    margins = {"dnorm": lhs, "bound": rhs, "ratio": lhs / rhs if rhs > 0 else math.inf,
               "cnr": cnr, "min_cnr_distance": min(dd for _, dd, _ in detail),
               "singular_cells": int(len(singular)), "disjoint_singular": int(count),
               "disjoint_exact": bool(exact)}
    return LemmaCheck("dominated-decay", index, hyp["hold"], bool(lhs <= rhs * (1 + REL_TOL)), margins)


@dataclass
class AppendixReport:
    index: int
    qualifying: bool
    f: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    nonsingular: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    F_consistent: bool = True

    @property
    def holds(self) -> bool:
        return self.F_consistent and all(v <= 1 + REL_TOL for v in self.worst.values())

    def to_dict(self) -> dict:
        return {"index": self.index, "qualifying": self.qualifying, "holds": self.holds,
                "worst": self.worst, "counts": self.counts, "F_consistent": self.F_consistent,
                "nonsingular": {str(k): v for k, v in self.nonsingular.items()}}


def check_appendix_chain(V: DisorderRealization, scale: LemmaScale, u, E: float,
                         index: int = -1) -> AppendixReport:
    """Per-step inequalities (A), (B), (C) for the layer functions of ``B_{L_{k+1}}(u)``.

    A realization qualifies when the hypotheses of the dominated-decay check hold.

    ``f_y(r) = max`` over skeleton layer ``r`` of ``|G_B(c, y)|`` (cell norm), for
    every ``y`` in the boundary annulus of the big cube.  ``worst`` holds the
    largest ``lhs / rhs`` per property over all ``y`` and all instances.
    """
    u = tuple(np.atleast_1d(u))
    big = geo.CubeSpec(u, scale.L_next)
    ell = scale.L_k // 3
    sk = geo.skeleton(big, ell)
    R, K = sk.R, (scale.Y_next - 1) // 2
    I_lo, I_hi = R - scale.Y_next, R - 2
    hyp = lemma_hypotheses(V, scale, u, E)
    cnr = hyp["cnr"]

    H = op.assemble(big, V)
    empty = AppendixReport(index, False, np.zeros(0), np.zeros(0))
    if H.spectral_distance(E) < op.NEAR_SINGULAR_TOL:
        empty.counts = {"near_singular": 1}
        return empty
    _, ann = op._core_and_annulus(big)
    G = op.green_columns(H, E, ann, check=False)   # columns: y in the annulus
    sites = geo.cube_sites(big)
    cell_of = H.index_of(sites)
    owner = geo.cell_center(sites, ell)
    # layer index of every site's cell
    # cell norms: sqrt of summed squares over the cell's sites
    vkey = {tuple(v): j for j, v in enumerate(sk.vertices)}
    site_vertex = np.array([vkey[tuple(o)] for o in owner.tolist()])
    cell_sq = np.zeros((len(sk.vertices), G.shape[1]))
    np.add.at(cell_sq, site_vertex, G[cell_of, :] ** 2)
    cell_norm = np.sqrt(cell_sq)                    # vertex x y
    f = np.stack([cell_norm[sk.radius_of == r].max(axis=0) for r in range(R + 1)])  # r x y
    F = np.maximum.accumulate(f, axis=0)
    F_check = np.stack([f[: r + 1].max(axis=0) for r in range(R + 1)])

    nonsingular = {}
    for r in range(I_lo, I_hi + 1):
        ok = True
        for c in sk.layer(r):
            if not op.classify_NS(geo.CubeSpec(tuple(c), scale.L_k), E, scale.eps_ns, V, scale.Y_k,
                                  scale.w_mode):
                ok = False
                break
        nonsingular[r] = ok

    C_W, Lk, Ln = scale.C_W, float(scale.L_k), float(scale.L_next)
    a_const = Lk ** (-scale.b_k) / C_W
    b_const = C_W * Ln ** scale.s_k
    c_const = Lk ** (-2 * scale.b_k) * Ln ** scale.s_k / C_W

    def ratio(lhs, rhs):
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(lhs == 0, 0.0, lhs / rhs)
        return float(np.max(q))

    worst = {"A": 0.0, "B": 0.0, "C": 0.0}
    counts = {"A": 0, "B": 0, "C": 0}
    for r, ok in nonsingular.items():
        if ok and r + 1 <= R:
            rhs = a_const * f[r - 1: r + 2].max(axis=0)
            worst["A"] = max(worst["A"], ratio(f[r], rhs))
            counts["A"] += 1
    if cnr:
        for rp in range(K, R - 1):
            for r in range(rp + 1):
                worst["B"] = max(worst["B"], ratio(f[r], b_const * f[rp]))
                counts["B"] += 1
        for rp in range(I_lo, I_hi + 1):
            if rp + 6 > R or not all(nonsingular.get(rho, False) for rho in range(rp + 3, rp + 6)):
                continue
            worst["C"] = max(worst["C"], ratio(F[rp + 5], c_const * F[rp + 6]))
            counts["C"] += 1
    counts["cnr"] = cnr
    counts["disjoint_singular"] = hyp["count"]
    return AppendixReport(index, hyp["hold"], f, F, nonsingular, worst, counts,
                          bool(np.array_equal(F, F_check)))


def _lemma_item(i, spec, scale, E, which):
    big = geo.CubeSpec(_origin(scale.d), scale.L_next)
    V = sample(spec, i, geo.cube_sites(big))
    if which == "dominated-decay":
        return check_dominated_decay(V, scale, _origin(scale.d), E, index=i).to_dict()
    return check_appendix_chain(V, scale, _origin(scale.d), E, index=i).to_dict()


@dataclass
class LemmaSuite:
    lemma: str
    n: int
    qualifying: int
    violations: int
    seed: int
    params: dict
    records: list = field(repr=False, default_factory=list)
    worst: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"lemma": self.lemma, "n": self.n, "qualifying": self.qualifying,
                "violations": self.violations, "seed": self.seed,
                **{f"worst_{k}": v for k, v in self.worst.items()}}


def run_lemma_suite(which: str, scale: LemmaScale, E: float, n: int, disorder: DisorderSpec,
                    workers: int = 1, start: int = 0) -> LemmaSuite:
    """Run the dominated-decay check or the appendix chain ("appendix-chain") over ``n`` samples."""
    if which not in ("dominated-decay", "appendix-chain"):
        raise InvalidSpec(f"unknown lemma suite {which!r}")
    _check_n(n)
    _check_cap(scale.L_next, scale.d)
    fn = partial(_lemma_item, spec=disorder, scale=scale, E=E, which=which)
    recs = run_items(fn, range(start, start + n), workers)
    params = {"scale": scale.to_dict(), "E": E, "start": start, "disorder": disorder.to_dict(),
              "note": DESK_NOTE}
    if which == "dominated-decay":
        qual = [r for r in recs if r["hypotheses_hold"]]
        bad = sum(r["violation"] for r in recs)
        worst = {"ratio": max((r["margins"]["ratio"] for r in qual), default=0.0)}
    else:
        qual = [r for r in recs if r["qualifying"]]
        bad = sum(not r["holds"] for r in qual)
        worst = {k: max((r["worst"][k] for r in qual), default=0.0) for k in "ABC"}
    return LemmaSuite(which, n, len(qual), bad, disorder.master_seed, params, recs, worst)


# ---------------------------------------------------------------- recursion

@dataclass
class RecursionReport:
    verdict: str
    lhs_ci: tuple
    rhs_upper: float
    p_k: dict
    p_next: dict
    w_next: dict
    a_next: int
    S_next: int

    def to_dict(self) -> dict:
        return {**self.__dict__, "lhs_ci": list(self.lhs_ci)}


def check_recursion_empirically(p_k: EstimatorResult, p_next: EstimatorResult, w_next: EstimatorResult,
                                a_next: int, S_next: int) -> RecursionReport:
    """Confront ``p_{k+1} <= (a p_k)^(S+1) / 2 + w / 2`` with confidence-interval endpoints.

    "pass": upper end of ``p_{k+1}`` below the right side at the upper ends.
    "fail": lower end of ``p_{k+1}`` above it.  Otherwise "inconclusive".
    """
    for r, ev in ((p_k, "singular"), (p_next, "singular"), (w_next, "not-CNR")):
        if r.event != ev:
            raise InvalidSpec(f"expected a {ev!r} estimate, got {r.event!r}")
    pk, pn, w = p_k.params, p_next.params, w_next.params
    if pn["L"] != pk["L"] * w["Y_next"] or w["L_k"] != pk["L"] or w["L_next"] != pn["L"]:
        raise InvalidSpec("mismatched scales between estimates")
    if not (pk["E"] == pn["E"] == w["E"]) or not (pk["d"] == pn["d"] == w["d"]):
        raise InvalidSpec("mismatched energy or dimension between estimates")
    if not (pk["disorder"]["family"] == pn["disorder"]["family"] == w["disorder"]["family"]):
        raise InvalidSpec("mismatched disorder between estimates")
    rhs = 0.5 * (a_next * p_k.ci[1]) ** (S_next + 1) + 0.5 * w_next.ci[1]
    lo, hi = p_next.ci
    verdict = "pass" if hi <= rhs else ("fail" if lo > rhs else "inconclusive")
    return RecursionReport(verdict, (lo, hi), rhs, p_k.to_dict(), p_next.to_dict(), w_next.to_dict(),
                           a_next, S_next)


# ---------------------------------------------------------------- EFC scaling

def _efc_item(i, spec, L, d, window):
    cube = geo.CubeSpec(_origin(d), L)
    V = sample(spec, i, geo.cube_sites(cube))
    r = cube.radius
    x, y = (-r,) + (0,) * (d - 1), (r,) + (0,) * (d - 1)
    return {"index": i, "L": L, "efc": efc_pair(V, x, y, cube, window=window)}


def double_log(value: float, L: int) -> float:
    if not 0 < value < 1:
        return math.nan
    return math.log(math.log(1 / value)) / math.log(L)


def efc_scaling_probe(L_list, n: int, disorder: DisorderSpec, d: int = 1, window=None,
                      workers: int = 1, start: int = 0) -> list:
    """Mean correlator between opposite faces of ``B_L(0)`` (``|x - y| = L - 1``) for each ``L``."""
    _check_n(n)
    rows = []
    for L in L_list:
        _check_cap(L, d)
        fn = partial(_efc_item, spec=disorder, L=L, d=d, window=window)
        recs = run_items(fn, range(start, start + n), workers)
        vals = np.array([r["efc"] for r in recs])
        m = float(vals.mean())
        rows.append({"L": L, "n": n, "mean_efc": m, "median_efc": float(np.median(vals)),
                     "diagnostic": double_log(m, L), "seed": disorder.master_seed})
    return rows


def spearman(xs, ys) -> float:
    return float(stats.spearmanr(xs, ys).statistic)
