"""Adaptive feedback scaling: parameter recursion and its finite certificate.

Integer sequences (``L_k, Y_k, S_k, N_k, a_k``) are exact Python integers and
the exponents ``b_k, s_k, A_k, rho_k`` exact fractions for as long as the
exact mode lasts.  Everything involving logarithms or ``theta_0`` is carried
as an outward-rounded ``mpmath.iv`` interval, and every inequality of the
certificate is decided on interval endpoints: a check passes only if the
whole left interval lies strictly below the whole right interval.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import gmpy2
import mpmath
from mpmath import iv

from .errors import InvalidSpec, ThresholdViolated

PREC_BITS = 200          # ~60 significant digits, above the required 50
EXACT_LIMIT = 120
Y_FIRST = 9
S_FIRST = 1

Number = Union[int, Fraction]


@contextlib.contextmanager
def precision(bits: int = PREC_BITS):
    """Temporarily raise the working precision of the interval context."""
    old = iv.prec
    iv.prec = max(old, bits)
    try:
        yield
    finally:
        iv.prec = old


def I(x):
    """Outward-rounded interval enclosing an int, Fraction, or interval."""
    if isinstance(x, Fraction):
        return iv.mpf(x.numerator) / iv.mpf(x.denominator)
    if isinstance(x, int):
        return iv.mpf(x)
    return x


def lo(x) -> mpmath.mpf:
    # make_mpf keeps the endpoint bits; mpf() would round to mp.prec
    return mpmath.mp.make_mpf(I(x)._mpi_[0])


def hi(x) -> mpmath.mpf:
    return mpmath.mp.make_mpf(I(x)._mpi_[1])


def imin(*xs):
    xs = [I(x) for x in xs]
    return iv.mpf([min(lo(x) for x in xs), min(hi(x) for x in xs)])


def imax(*xs):
    xs = [I(x) for x in xs]
    return iv.mpf([max(lo(x) for x in xs), max(hi(x) for x in xs)])


def mid(x) -> mpmath.mpf:
    x = I(x)
    with mpmath.workprec(PREC_BITS):
        return (lo(x) + hi(x)) / 2


def ilog(x):
    """Interval logarithm; big integers are handled without overflow."""
    if isinstance(x, int) and x.bit_length() > 4000:
        shift = x.bit_length() - 1000
        top = x >> shift
        return iv.log(iv.mpf([top, top + 1])) + shift * iv.log(2)
    return iv.log(I(x))


def log_add_exp(x, y):
    """Interval enclosure of ``ln(e^x + e^y)``."""
    x, y = I(x), I(y)
    m = imax(x, y)
    gap_hi = min(hi(x), hi(y)) - max(lo(x), lo(y))
    if gap_hi < -20000:
        # ln(1 + e^g) <= e^g < 2^-20000 for g << 0
        return iv.mpf([lo(m), hi(m)]) + iv.mpf([0, mpmath.mpf(2) ** -20000])
    if hi(x) <= lo(y):
        return y + iv.log(1 + iv.exp(x - y))
    if hi(y) <= lo(x):
        return x + iv.log(1 + iv.exp(y - x))
    # overlapping: bound the max and the correction separately
    return iv.mpf([lo(m), hi(m)]) + iv.mpf([0, 1]) * iv.log(2)


def iroot(n: int, k: int) -> int:
    """``floor(n ** (1/k))`` for a non-negative integer ``n``."""
    if n < 0 or k < 1:
        raise ValueError("iroot needs n >= 0 and k >= 1")
    return int(gmpy2.iroot(gmpy2.mpz(n), k)[0])


def parse_exact(value) -> Number:
    """Parse ints, Fractions, ``"a/b"`` and ``"base^exp"`` strings into exact numbers."""
    if isinstance(value, (int, Fraction)):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10 ** 12)
    s = str(value).replace(" ", "").replace("**", "^")
    if "^" in s:
        base, exp = s.split("^", 1)
        base, exp = parse_exact(base), int(exp)
        out = Fraction(base) ** exp
        return int(out) if out.denominator == 1 else out
    out = Fraction(s)
    return int(out) if out.denominator == 1 else out


@dataclass(frozen=True)
class ProbabilityInput:
    """``p_0`` either exactly or through an enclosure of ``ln(1/p_0)``."""

    exact: Optional[Fraction] = None
    ln_inverse: Optional[object] = None
    provenance: str = "exact"

    @classmethod
    def of(cls, p0) -> "ProbabilityInput":
        if isinstance(p0, ProbabilityInput):
            return p0
        return cls(exact=Fraction(parse_exact(p0)))

    @classmethod
    def from_upper_bound(cls, p_upper: float, provenance: str) -> "ProbabilityInput":
        """Use an (empirical) upper confidence bound as ``p_0``."""
        return cls(exact=Fraction(p_upper), provenance=provenance)

    def ln_inv(self):
        if self.exact is not None:
            return -ilog(self.exact)
        return I(self.ln_inverse)

    def describe(self) -> str:
        if self.exact is not None:
            return str(self.exact)
        return f"exp(-{mpmath.nstr(mid(self.ln_inverse), 20)})"


@dataclass(frozen=True)
class BaseParams:
    d: int
    beta: Fraction
    b0: Fraction
    p0: ProbabilityInput
    L0: int
    eta: Fraction
    s0: Fraction
    tau: Fraction
    a1: int
    rho1: Fraction
    theta0: object = field(repr=False)
    sigma0: object = field(repr=False)
    tau0: object = field(repr=False)
    K: int = 0

    @property
    def ln_L0(self):
        return ilog(self.L0)


def derive_base(d: int, beta, b0, p0, L0) -> BaseParams:
    beta, b0 = Fraction(parse_exact(beta)), Fraction(parse_exact(b0))
    L0 = int(parse_exact(L0))
    p0 = ProbabilityInput.of(p0)
    if d < 1:
        raise InvalidSpec("dimension must be >= 1")
    if not 0 < beta <= 1:
        raise InvalidSpec("beta must lie in (0, 1]")
    if b0 <= Fraction(d) / beta:
        raise InvalidSpec(f"invalid-b0: b0 = {b0} must exceed d/beta = {Fraction(d) / beta}")
    if L0 < 2:
        raise InvalidSpec("L0 must be >= 2")
    a1 = (3 * Y_FIRST - 4) ** d
    with precision():
        ln_inv = p0.ln_inv()
        if p0.exact is not None:
            if not 0 < p0.exact < Fraction(1, a1 ** 2):
                raise ThresholdViolated(f"threshold-violated: p0 = {p0.exact} is not below 23^(-2d)")
        elif not lo(ln_inv) > 2 * hi(ilog(a1)):
            raise ThresholdViolated("threshold-violated: p0 is not certifiably below 23^(-2d)")
        eta = (beta * b0 - d) / 2
        s0 = b0 - eta / beta
        tau = Fraction(1, 16 * d)
        theta0 = (1 - 2 * ilog(a1) / ln_inv) / 3
        if not (lo(theta0) > 0 and hi(theta0) < lo(Fraction(1, 3))):
            raise ThresholdViolated("theta0 does not lie in (0, 1/3)")
        ln_L0 = ilog(L0)
        sigma0 = ln_inv / ln_L0
        tau0 = imin(ilog(Y_FIRST) / ln_L0, 3 * theta0 / (1 + 3 * theta0), I(tau))
        K = _first_k(theta0, sigma0, d)
    return BaseParams(d, beta, b0, p0, L0, eta, s0, tau, a1, eta / 2, theta0, sigma0, tau0, K)


def _first_k(theta0, sigma0, d: int, k_cap: int = 100000) -> int:
    """``min{k >= 1 : (1 + theta0)^k >= 2d / sigma0}`` decided on intervals."""
    target = iv.log(2 * d / sigma0)
    step = iv.log(1 + theta0)
    for k in range(1, k_cap):
        val = k * step
        if lo(val) >= hi(target):
            return k
        if hi(val) >= lo(target):
            raise InvalidSpec(f"cannot decide the switch scale at k = {k} with {PREC_BITS}-bit intervals")
    raise InvalidSpec("switch scale exceeds the search cap")


def l0_threshold(d: int, beta, b0, p0) -> dict:
    """The four lower bounds on ``L_0`` and their maximum.

    Each candidate carries its exact integer value when it is one, an
    interval for its natural log, and ``log2`` as a float.
    """
    beta, b0 = Fraction(parse_exact(beta)), Fraction(parse_exact(b0))
    p0 = ProbabilityInput.of(p0)
    eta = (beta * b0 - d) / 2
    tau = Fraction(1, 16 * d)
    if eta <= 0:
        raise InvalidSpec("invalid-b0: need b0 > d/beta")

    def power(base: Fraction, exponent: Fraction):
        exact = None
        if exponent.denominator == 1 and Fraction(base).denominator == 1 and exponent >= 0:
            exact = int(base) ** int(exponent)
        return exact, I(exponent) * ilog(base) if exact is None else ilog(exact)

    with precision():
        cands = {}
        cands["11^(1/tau^2)"] = power(Fraction(11), 1 / tau ** 2)
        cands["9^(4(6d+eta)/eta)"] = power(Fraction(9), 4 * (6 * d + eta) / eta)
        for name, expo in (("p0^(-8/(3eta))", Fraction(8) / (3 * eta)), ("p0^(-8/b0)", Fraction(8) / b0)):
            if p0.exact is not None and p0.exact.numerator == 1:
                cands[name] = power(Fraction(p0.exact.denominator), expo)
            else:
                cands[name] = (None, I(expo) * p0.ln_inv())
        out = {}
        for name, (exact, ln) in cands.items():
            out[name] = {"exact": exact, "ln": ln, "log2": float(mid(ln) / mpmath.log(2))}
        winner = max(out, key=lambda n: hi(out[n]["ln"]))
        # certify the winner dominates every candidate
        for name, c in out.items():
            if name != winner and not (hi(c["ln"]) <= lo(out[winner]["ln"]) or
                                       (c["exact"] is not None and out[winner]["exact"] is not None)):
                winner = max(out, key=lambda n: lo(out[n]["ln"]))
        if all(c["exact"] is not None for c in out.values()):
            winner = max(out, key=lambda n: out[n]["exact"])
    return {"candidates": out, "max": winner, "max_exact": out[winner]["exact"],
            "max_ln": out[winner]["ln"], "max_log2": out[winner]["log2"]}


@dataclass
class ScaleRecord:
    k: int
    Y: object
    S: object
    L: Optional[int]
    ln_L: object = field(repr=False)
    N: object = None
    a: object = None
    b: object = None
    s: object = None
    A: object = None
    B: object = None
    D: object = None
    sigma: object = field(default=None, repr=False)
    rho: object = None
    ln_q: object = field(default=None, repr=False)
    mode: str = "exact"

    @property
    def exact(self) -> bool:
        return self.mode == "exact"


def initial_record(base: BaseParams) -> ScaleRecord:
    with precision():
        # Y_0 follows the k <= K branch of the Y recursion
        return ScaleRecord(0, Y_FIRST, S_FIRST, base.L0, base.ln_L0, Y_FIRST - 5 * S_FIRST - 1,
                           (3 * Y_FIRST - 4) ** base.d, base.b0, base.s0, Fraction(1), None, None,
                           base.sigma0, None, None, "exact")


def _floor_power_interval(ln_L, tau: Fraction):
    """Enclosure of ``floor(L^tau)`` from an enclosure of ``ln L``."""
    return iv.exp(I(tau) * ln_L) - iv.mpf([0, 1])


def advance_scale(rec: ScaleRecord, base: BaseParams, exact_limit: int = EXACT_LIMIT) -> ScaleRecord:
    j = rec.k + 1
    d, K = base.d, base.K
    with precision():
        exact = rec.exact and j <= exact_limit
        if j <= K:
            Y, S = Y_FIRST, S_FIRST
        elif exact:
            Y = iroot(rec.L, 16 * d)
            S = Y // 9
        else:
            Y = _floor_power_interval(rec.ln_L, base.tau)
            S = Y / 9 - iv.mpf([0, 1])
        if exact:
            N = Y - 5 * S - 1
            L = Y * rec.L
            ln_L = ilog(L)
            a = (3 * Y - 4) ** d
            b = Fraction(4, 5) * N * rec.b
            A = rec.A * Fraction(4, 5) * N
        else:
            N = I(Y) - 5 * I(S) - 1
            L = None
            ln_L = rec.ln_L + ilog(Y)
            a = (3 * I(Y) - 4) ** d
            b = I(Fraction(4, 5)) * N * I(rec.b)
            A = I(rec.A) * I(Fraction(4, 5)) * N
        s = Fraction(5, 6) * b if isinstance(b, Fraction) else I(Fraction(5, 6)) * b
        if j <= K + 1:
            B = 1 + base.theta0
            D = None if j == 1 else Fraction(4, 3)
        else:
            B = Fraction(2, 3) * (S + 1) if isinstance(S, int) else I(Fraction(2, 3)) * (S + 1)
            D = B
        sigma = I(B) * I(rec.sigma)
        if j == 1:
            rho = base.rho1
        elif isinstance(D, Fraction) and isinstance(rec.rho, Fraction):
            rho = D * rec.rho
        else:
            rho = I(D) * I(rec.rho)
        ln_q = iv.log(2) - I(rho) * ln_L
    return ScaleRecord(j, Y, S, L, ln_L, N, a, b, s, A, B, D, sigma, rho, ln_q,
                       "exact" if exact else "log")


def _degenerate(rec: ScaleRecord) -> bool:
    # Y < 9 means S = 0: no singular-cube budget and, for Y = 1, a = (3Y - 4)^d <= 0
    with precision():
        return bool(rec.Y < Y_FIRST) if rec.exact else bool(lo(rec.Y) < Y_FIRST)


def build_records(base: BaseParams, k_max: int, exact_limit: int = EXACT_LIMIT) -> list:
    """Scales ``0..k_max``; stops early (shorter list) at the first degenerate ``Y_k < 9``."""
    recs = [initial_record(base)]
    for _ in range(k_max):
        nxt = advance_scale(recs[-1], base, exact_limit)
        if _degenerate(nxt):
            break
        recs.append(nxt)
    return recs


@dataclass
class CheckResult:
    name: str
    k: Optional[int]
    passed: bool
    lhs: object = None
    rhs: object = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "k": self.k, "passed": bool(self.passed),
                "lhs": _fmt(self.lhs), "rhs": _fmt(self.rhs), "note": self.note}


def _fmt(x):
    if x is None:
        return None
    if isinstance(x, bool):
        return x
    if isinstance(x, int):
        return str(x) if x.bit_length() <= 256 else f"2^{x.bit_length() - 1}.."
    if isinstance(x, Fraction):
        return str(x) if max(x.numerator.bit_length(), x.denominator.bit_length()) <= 256 \
            else mpmath.nstr(mid(I(x)), 30)
    try:
        x = I(x)
        return [mpmath.nstr(lo(x), 55), mpmath.nstr(hi(x), 55)]
    except Exception:
        return str(x)


def strictly_less(lhs, rhs) -> bool:
    return bool(hi(lhs) < lo(rhs))


def _interval_check(name, k, lhs, rhs, note="") -> CheckResult:
    return CheckResult(name, k, strictly_less(lhs, rhs), lhs, rhs, note)


def base_checks(base: BaseParams) -> list:
    out = []
    with precision():
        thr = l0_threshold(base.d, base.beta, base.b0, base.p0)
        if thr["max_exact"] is not None:
            ok = base.L0 >= thr["max_exact"]
        else:
            ok = lo(ilog(base.L0)) >= hi(thr["max_ln"])
        out.append(CheckResult("L0-threshold", 0, ok, ilog(base.L0), thr["max_ln"],
                               f"max candidate {thr['max']}"))
        out.append(_interval_check("theta0-range", 0, 0, base.theta0))
        out.append(_interval_check("theta0<1/3", 0, base.theta0, Fraction(1, 3)))
        out.append(_interval_check("B1<4/3", 1, 1 + base.theta0, Fraction(4, 3)))
        # (1 + 3 theta0)(1 - tau0) >= 1 + theta0 drives the k <= K induction
        out.append(CheckResult("tau0-induction", 0,
                               bool(lo(((1 + 3 * base.theta0) * (1 - base.tau0))) >= hi((1 + base.theta0))),
                               (1 + base.theta0), (1 + 3 * base.theta0) * (1 - base.tau0)))
    return out


def verify_growth(records: list, base: BaseParams) -> list:
    out = []
    K = base.K
    for prev, rec in zip(records, records[1:]):
        k = rec.k
        if rec.exact:
            out.append(CheckResult("N>=3", k, rec.N >= 3, 3, rec.N))
            out.append(CheckResult("b-closed-form", k, rec.b == rec.A * base.b0))
        else:
            out.append(CheckResult("N>=3", k, lo(rec.N) >= 3, 3, rec.N))
        if k <= K:
            continue
        if rec.exact:
            sandwich = 10 * rec.S >= rec.Y and 9 * rec.S <= rec.Y
            out.append(CheckResult("S-sandwich", k, sandwich, rec.S, rec.Y, "Y/10 <= S <= Y/9"))
        else:
            # S = floor(Y/9) gives 9S <= Y outright and 10S >= Y once Y >= 90
            out.append(CheckResult("S-sandwich", k, bool(lo(rec.Y) >= 90), rec.S, rec.Y, "log mode"))
        if k == K + 1:
            ok = rec.Y >= 10 * prev.Y if rec.exact else lo(rec.Y) >= 10 * prev.Y
            out.append(CheckResult("Y-jump", k, bool(ok), prev.Y, rec.Y, "Y_{K+1} >= 10 Y_K"))
        else:
            if rec.exact and prev.exact:
                ok = rec.Y > prev.Y and rec.S > prev.S
            else:
                ok = lo(rec.Y) > hi(prev.Y) and lo(rec.S) > hi(prev.S)
            out.append(CheckResult("YS-increasing", k, bool(ok), prev.Y, rec.Y))
    return out


def verify_wegner_chain(records: list, base: BaseParams) -> list:
    out = []
    d, beta = base.d, base.beta
    with precision():
        out.append(_interval_check("wegner-k0", 0, base.eta / 2, I(base.eta) - 2 * d / base.ln_L0,
                                   "eta - 2d/ln L0 > eta/2"))
        for rec, nxt in zip(records, records[1:]):
            k = rec.k
            # (Y_{k+1} - 1) L_{k+1}^{d - beta s_k} <= 2 L_{k+1}^{-rho_{k+1}}
            lhs = ilog(nxt.Y - 1) + (d - I(beta) * I(rec.s)) * nxt.ln_L
            out.append(_interval_check("wegner-chain", k, lhs, nxt.ln_q))
            if k >= 1:
                true_exp = beta * rec.b / 8 if isinstance(rec.b, Fraction) else I(beta) * I(rec.b) / 8
                if isinstance(nxt.rho, Fraction) and isinstance(true_exp, Fraction):
                    out.append(CheckResult("rho<=beta*b/8", k + 1, nxt.rho <= true_exp, nxt.rho, true_exp))
                else:
                    out.append(CheckResult("rho<=beta*b/8", k + 1, hi(nxt.rho) <= lo(true_exp),
                                           nxt.rho, true_exp))
    return out


def closure_terms(rec: ScaleRecord, nxt: ScaleRecord):
    """Log-enclosures of the two summands and the target of the probability recursion."""
    ln2 = iv.log(2)
    first = (I(nxt.S) + 1) * (ilog(nxt.a) - I(rec.sigma) * rec.ln_L) - ln2
    second = nxt.ln_q - ln2
    target = -I(nxt.sigma) * nxt.ln_L
    return first, second, target


def verify_probability_recursion(records: list, base: BaseParams):
    """Closure of the probability recursion, ``sigma <= rho`` and ``B <= D``.

    Returns ``(checks, regimes)`` where ``regimes[k]`` labels the step
    ``k -> k+1`` as A/B (before/after the switch scale) and 1/2 (which
    summand dominates).
    """
    out, regimes = [], {}
    with precision():
        for rec in records[1:]:
            out.append(_interval_check("sigma<=rho", rec.k, rec.sigma, rec.rho))
            if rec.D is not None:
                if rec.B is rec.D:
                    out.append(CheckResult("B<=D", rec.k, True, rec.B, rec.D, "same expression"))
                elif isinstance(rec.B, Fraction) and isinstance(rec.D, Fraction):
                    out.append(CheckResult("B<=D", rec.k, rec.B <= rec.D, rec.B, rec.D))
                else:
                    out.append(CheckResult("B<=D", rec.k, hi(rec.B) <= lo(rec.D), rec.B, rec.D))
        for rec, nxt in zip(records, records[1:]):
            first, second, target = closure_terms(rec, nxt)
            total = log_add_exp(first, second)
            out.append(_interval_check("probability-closure", rec.k, total, target))
            half = "A" if rec.k < base.K else "B"
            if lo(first) > hi(second):
                which = "1"
            elif lo(second) > hi(first):
                which = "2"
            else:
                which = "?"
            regimes[rec.k] = half + which
    return out, regimes


@dataclass
class ESL:
    k: int
    delta: object
    kappa: object
    delta_lower: object

    def as_floats(self):
        return tuple(float(mid(x)) if x is not None else math.nan
                     for x in (self.delta, self.kappa, self.delta_lower))


def esl_exponents(rec: ScaleRecord) -> ESL:
    """Stretched-exponential exponents ``delta_k`` and ``kappa_k``.

    ``L^{-b} = exp(-L^delta)`` and ``L^{-sigma} = exp(-L^kappa)``; the table
    lower bound ``(ln(S+1) - ln(3/2)) / ln Y`` is reported alongside.
    """
    with precision():
        bl = I(rec.b) * rec.ln_L
        sl = I(rec.sigma) * rec.ln_L
        if lo(bl) <= 1:
            raise InvalidSpec(f"exponent-undefined: b_k ln L_k <= 1 at k = {rec.k}")
        delta = iv.log(bl) / rec.ln_L
        kappa = iv.log(sl) / rec.ln_L if lo(sl) > 1 else None
        dl = (iv.log(I(rec.S) + 1) - iv.log(I(Fraction(3, 2)))) / ilog(rec.Y) if rec.k >= 1 else None
    return ESL(rec.k, delta, kappa, dl)


def verify_esl(esls: list, base: BaseParams, ratio_cap: float = 0.97) -> list:
    out = []
    with precision():
        for e0, e1 in zip(esls, esls[1:]):
            if e0.k < base.K + 2:
                continue
            out.append(_interval_check("delta-increasing", e1.k, e0.delta, e1.delta))
            out.append(_interval_check("kappa-increasing", e1.k, e0.kappa, e1.kappa))
            ratio = (1 - e1.delta) / (1 - e0.delta)
            out.append(CheckResult("delta-gap-ratio", e1.k, hi(ratio) <= ratio_cap, ratio, ratio_cap))
    return out


@dataclass
class Certificate:
    base: BaseParams
    records: list
    checks: list
    regimes: dict
    esl: list
    k_max: int
    exact_limit: int

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    @property
    def mode(self) -> str:
        return "exact" if all(r.exact for r in self.records) else f"exact<= {self.exact_limit}, log beyond"

    def to_dict(self) -> dict:
        b = self.base
        base = {"d": b.d, "beta": str(b.beta), "b0": str(b.b0), "p0": b.p0.describe(),
                "p0_provenance": b.p0.provenance, "L0_log2": float(mid(b.ln_L0) / mpmath.log(2)),
                "eta": str(b.eta), "s0": str(b.s0), "tau": str(b.tau), "a1": b.a1, "rho1": str(b.rho1),
                "theta0": _fmt(b.theta0), "sigma0": _fmt(b.sigma0), "tau0": _fmt(b.tau0), "K": b.K}
        recs = []
        for r, e in zip(self.records, self.esl):
            recs.append({"k": r.k, "mode": r.mode, "Y": _fmt(r.Y), "S": _fmt(r.S), "N": _fmt(r.N),
                         "L_log2": float(mid(r.ln_L) / mpmath.log(2)), "b": _fmt(r.b), "s": _fmt(r.s),
                         "B": _fmt(r.B), "D": _fmt(r.D), "sigma": _fmt(r.sigma), "rho": _fmt(r.rho),
                         "ln_q": _fmt(r.ln_q), "delta": _fmt(e.delta), "kappa": _fmt(e.kappa),
                         "delta_lower": _fmt(e.delta_lower), "regime": self.regimes.get(r.k)})
        return {"kind": "afs-certificate", "overall": "pass" if self.overall else "fail",
                "precision_bits": PREC_BITS, "k_max": self.k_max, "mode": self.mode, "base": base,
                "records": recs, "checks": [c.to_dict() for c in self.checks]}


def certify(base: BaseParams, k_max: int = 60, exact_limit: int = EXACT_LIMIT) -> Certificate:
    records = build_records(base, k_max, exact_limit)
    checks = base_checks(base)
    if len(records) <= k_max:
        bad = advance_scale(records[-1], base, exact_limit)
        checks.append(CheckResult("Y-nondegenerate", bad.k, False, bad.Y, Y_FIRST,
                                  "Y_k < 9: recursion undefined from this scale on"))
    checks += verify_growth(records, base)
    checks += verify_wegner_chain(records, base)
    prob, regimes = verify_probability_recursion(records, base)
    checks += prob
    esls = [esl_exponents(r) for r in records]
    checks += verify_esl(esls, base)
    return Certificate(base, records, checks, regimes, esls, k_max, exact_limit)


@dataclass(frozen=True)
class EarlyScale:
    """Parameters of scale ``k`` and ``k+1`` while ``Y = 9`` and ``S = 1``.

    Used by the Monte-Carlo lab, where ``L_0`` is far below the theorem's
    threshold and only the first steps of the recursion are reachable.
    """

    d: int
    beta: Fraction
    k: int
    L: int
    Y: int
    b: Fraction
    s: Fraction
    Y_next: int
    S_next: int
    N_next: int
    b_next: Fraction
    s_next: Fraction

    @property
    def L_next(self) -> int:
        return self.L * self.Y_next

    @property
    def a_next(self) -> int:
        return (3 * self.Y_next - 4) ** self.d


def early_scale(d: int, beta, b0, L0: int, k: int = 0) -> EarlyScale:
    beta, b0 = Fraction(parse_exact(beta)), Fraction(parse_exact(b0))
    if b0 <= Fraction(d) / beta:
        raise InvalidSpec(f"invalid-b0: b0 = {b0} must exceed d/beta")
    if L0 % 3 or L0 % 2 == 0:
        raise InvalidSpec("L0 must be an odd multiple of 3")
    eta = (beta * b0 - d) / 2
    N = Y_FIRST - 5 * S_FIRST - 1
    b = b0 * (Fraction(4, 5) * N) ** k
    s = b0 - eta / beta if k == 0 else Fraction(5, 6) * b
    b_next = Fraction(4, 5) * N * b
    return EarlyScale(d, beta, k, L0 * Y_FIRST ** k, Y_FIRST, b, s, Y_FIRST, S_FIRST, N,
                      b_next, Fraction(5, 6) * b_next)
