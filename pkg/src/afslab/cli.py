"""Command-line entry point: ``afslab <subcommand> --config run.yaml``.

Every run writes its data files plus ``manifest.json`` into the output
directory (``--out``, else ``$AFSLAB_OUT``, else ``./results``).  Data files
are byte-identical for identical config and seed; only the manifest carries
timestamps.

Exit codes: 0 pass, 1 checked failure, 2 usage or config error, 3 internal error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np
import yaml

from . import __version__
from . import engine as en
from . import geometry as geo
from . import harness as hs
from . import reduction as red
from .disorder import DisorderSpec, sample
from .errors import AFSLabError, ConfigError, InvalidSpec, ThresholdViolated

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
OUT_ENV = "AFSLAB_OUT"

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "disorder": {"family": "uniform", "amplitude": 10.0, "a": 0.0, "b": 1.0, "beta": 1.0,
                 "C": 1.0, "C_prime": 1.0},
    "certify": {"d": 1, "beta": "1", "b0": "5", "p0": "23^-4", "L0": "11^256", "k_max": 60,
                "exact_limit": 120},
    "singular": {"d": 1, "L": 9, "E": 7.0, "b": 5.0, "n": 1000, "Y": 9, "w_mode": "bound"},
    "wegner": {"d": 1, "L": 9, "s": 1.0, "E": 2.5, "n": 10000,
               "eps_grid": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5]},
    "cnr": {"d": 1, "L_k": 3, "Y_next": 9, "E": -282.0, "s_k": 1.125, "n": 1000},
    "lab": {"d": 1, "beta": "1", "b0": "5/4", "L0": 3, "E": -282.0, "n": 1000, "w_mode": "bound"},
    "sweep": {"d": 1, "z": [0], "L": 21, "interval": [0.0, 4.0], "grid_step": 1e-3,
              "a": 0.01, "c": None, "n": 500, "q_energies": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]},
    "efc": {"d": 1, "L": 9, "separation": 30, "eps": 0.01, "interval": [0.0, 14.0],
            "grid_step": 0.05, "n": 500, "Y": 9},
    "esl": {"d": 1, "L_list": [9, 15, 21, 27, 33, 41], "n": 200, "window": None},
}


# ---------------------------------------------------------------- config

def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def load_config(path=None, seed=None, workers=None) -> dict:
    user = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
    cfg = _merge(DEFAULTS, user)
    if seed is not None:
        cfg["seed"] = seed
    if workers is not None:
        cfg["workers"] = workers
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    return cfg


def config_digest(cfg: dict) -> str:
    """Digest of everything that determines the data, i.e. the config without ``workers``."""
    data = {k: v for k, v in cfg.items() if k != "workers"}
    return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()[:16]


def disorder_from(cfg: dict) -> DisorderSpec:
    dcfg = cfg["disorder"]
    fam = dcfg["family"]
    try:
        if fam == "uniform":
            return DisorderSpec.uniform(dcfg["a"], dcfg["b"], dcfg["amplitude"], cfg["seed"])
        if fam == "holder":
            return DisorderSpec.holder(dcfg["beta"], dcfg["amplitude"], cfg["seed"])
        return DisorderSpec.almost_zero_order(dcfg["C"], dcfg["C_prime"], dcfg["amplitude"], cfg["seed"])
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- output

def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, (np.ndarray, tuple)):
        return list(o)
    return str(o)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_json_default)


@dataclass
class RunManifest:
    command: str
    config_digest: str
    master_seed: int
    versions: dict
    started: float
    finished: float = 0.0
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class Writer:
    def __init__(self, out_dir: Path, digest: str):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.digest = digest
        self.files = []

    def _path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def jsonl(self, name: str, records):
        with open(self._path(name), "w") as fh:
            for r in records:
                fh.write(dumps({**r, "config_digest": self.digest}) + "\n")

    def csv(self, name: str, rows, columns=None):
        rows = [{**r, "config_digest": self.digest} for r in rows]
        if columns is None:
            columns = list(rows[0].keys()) if rows else ["config_digest"]
        elif "config_digest" not in columns:
            columns = list(columns) + ["config_digest"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (dumps(v) if isinstance(v, (dict, list)) else v) for k, v in r.items()})
        self._path(name).write_text(buf.getvalue())

    def json(self, name: str, obj):
        self._path(name).write_text(json.dumps({**obj, "config_digest": self.digest}, sort_keys=True,
                                               indent=1, default=_json_default) + "\n")

    def inventory(self) -> dict:
        return {n: hashlib.sha256((self.out / n).read_bytes()).hexdigest() for n in sorted(set(self.files))}


def emit_plot_data(results, kind: str) -> list:
    """Rows for plotting.

    ``kind="decay"``: ``results`` is a list of ``{"L", "value"}`` mappings;
    columns ``L, value, diagnostic``.  ``kind="engine"``: ``results`` is a
    :class:`~afslab.engine.Certificate`; columns ``k, delta, kappa, delta_lower``.
    """
    if results is None:
        raise ConfigError("no results to plot")
    if kind == "decay":
        return [{"L": r["L"], "value": r["value"], "diagnostic": hs.double_log(r["value"], r["L"])}
                for r in results]
    if kind == "engine":
        rows = []
        for e in results.esl:
            delta, kappa, dl = e.as_floats()
            rows.append({"k": e.k, "delta": delta, "kappa": kappa, "delta_lower": dl})
        return rows
    raise ConfigError(f"unknown plot kind {kind!r}")


PLOT_COLUMNS = {"decay": ["L", "value", "diagnostic"], "engine": ["k", "delta", "kappa", "delta_lower"]}


# ---------------------------------------------------------------- subcommands

def _auto_L0(sec) -> int:
    thr = en.l0_threshold(sec["d"], sec["beta"], sec["b0"], sec["p0"])
    if thr["max_exact"] is not None:
        return int(thr["max_exact"])
    with en.precision():
        ln_hi = en.hi(thr["max_ln"])
    bits = int(ln_hi / mpmath.log(2)) + 64
    with mpmath.workprec(bits):
        return int(mpmath.ceil(mpmath.exp(ln_hi)))


def _p0_input(p0):
    if isinstance(p0, dict):
        if set(p0) != {"from_estimate"}:
            raise ConfigError("p0 mapping must be {from_estimate: <path>}")
        est = json.loads(Path(p0["from_estimate"]).read_text())
        return en.ProbabilityInput.from_upper_bound(est["ci_hi"], f"empirical upper CI from {p0['from_estimate']}")
    return str(p0)


def cmd_certify(cfg, w: Writer) -> int:
    sec = cfg["certify"]
    p0 = _p0_input(sec["p0"])
    try:
        L0 = _auto_L0({**sec, "p0": p0}) if sec["L0"] == "auto-threshold" else sec["L0"]
        base = en.derive_base(sec["d"], sec["beta"], sec["b0"], p0, L0)
    except ThresholdViolated as exc:
        w.json("certificate.json", {"kind": "afs-certificate", "overall": "fail",
                                    "checks": [{"name": "threshold-violated", "passed": False,
                                                "note": str(exc)}]})
        print(f"certify: {exc}")
        return EXIT_FAIL
    except (InvalidSpec, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from None
    cert = en.certify(base, sec["k_max"], sec["exact_limit"])
    w.json("certificate.json", cert.to_dict())
    w.csv("certify-esl.csv", emit_plot_data(cert, "engine"), PLOT_COLUMNS["engine"])
    w.csv("certify-checks.csv", [c.to_dict() for c in cert.checks],
          ["name", "k", "passed", "lhs", "rhs", "note"])
    fails = cert.failures
    print(f"certify: {'pass' if cert.overall else 'fail'} ({len(cert.checks)} checks, {len(fails)} failed)")
    for c in fails[:10]:
        print(f"  failed {c.name} at k={c.k}")
    return EXIT_PASS if cert.overall else EXIT_FAIL


def _estimate(w, name, res):
    w.jsonl(f"{name}.jsonl", res.records)
    w.csv(f"{name}.csv", [res.row()])
    w.json(f"{name}.json", res.to_dict())


def cmd_estimate_p0(cfg, w: Writer) -> int:
    s = cfg["singular"]
    res = hs.estimate_singular_prob(s["L"], s["E"], s["b"], s["n"], disorder_from(cfg), s["d"], s["Y"],
                                    s["w_mode"], cfg["workers"])
    _estimate(w, "estimate-p0", res)
    lo, hi = res.ci
    print(f"estimate-p0: p_hat = {res.p_hat:.6g}, 95% CI [{lo:.6g}, {hi:.6g}] over n = {res.n}")
    return EXIT_PASS


def cmd_wegner(cfg, w: Writer) -> int:
    s = cfg["wegner"]
    rep = hs.estimate_wegner(s["L"], s["s"], s["E"], s["n"], disorder_from(cfg), s["d"], s["eps_grid"],
                             cfg["workers"])
    w.jsonl("wegner.jsonl", rep.result.records)
    w.csv("wegner-curve.csv", rep.rows(), ["eps", "n", "successes", "p_hat", "ci_lo", "ci_hi", "bound"])
    w.json("wegner.json", {"result": rep.result.to_dict(), "constant": rep.constant, "slope": rep.slope,
                           "within_bound": rep.within_bound})
    print(f"wegner: slope {rep.slope}, within C L^d eps bound: {rep.within_bound}")
    return EXIT_FAIL if rep.within_bound is False else EXIT_PASS


def cmd_cnr(cfg, w: Writer) -> int:
    s = cfg["cnr"]
    res = hs.estimate_cnr_failure(s["L_k"], s["Y_next"], s["E"], s["s_k"], s["n"], disorder_from(cfg),
                                  s["d"], cfg["workers"])
    _estimate(w, "cnr", res)
    print(f"cnr: failure frequency {res.p_hat:.6g}, CI {res.ci}")
    return EXIT_PASS


def _lab_scale(cfg) -> hs.LemmaScale:
    s = cfg["lab"]
    try:
        es = en.early_scale(s["d"], s["beta"], s["b0"], s["L0"])
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from None
    return hs.LemmaScale.from_early(es, s["w_mode"])


def _lemma(cfg, w: Writer, which: str) -> int:
    s = cfg["lab"]
    suite = hs.run_lemma_suite(which, _lab_scale(cfg), s["E"], s["n"], disorder_from(cfg), cfg["workers"])
    w.jsonl(f"{which}.jsonl", suite.records)
    w.csv(f"{which}.csv", [suite.row()])
    print(f"{which}: {suite.qualifying} qualifying of {suite.n}, {suite.violations} violations, "
          f"worst {suite.worst}")
    return EXIT_FAIL if suite.violations else EXIT_PASS


def recursion_run(cfg) -> hs.RecursionReport:
    s = cfg["lab"]
    sc = _lab_scale(cfg)
    dis = disorder_from(cfg)
    p_k = hs.estimate_singular_prob(sc.L_k, s["E"], sc.b_k, s["n"], dis, sc.d, sc.Y_k, sc.w_mode,
                                    cfg["workers"])
    es = en.early_scale(s["d"], s["beta"], s["b0"], s["L0"])
    p_next = hs.estimate_singular_prob(es.L_next, s["E"], float(es.b_next), s["n"], dis, sc.d, es.Y_next,
                                       sc.w_mode, cfg["workers"])
    w_next = hs.estimate_cnr_failure(sc.L_k, sc.Y_next, s["E"], sc.s_k, s["n"], dis, sc.d, cfg["workers"])
    return hs.check_recursion_empirically(p_k, p_next, w_next, es.a_next, es.S_next)


def cmd_recursion(cfg, w: Writer) -> int:
    rep = recursion_run(cfg)
    w.json("recursion.json", rep.to_dict())
    w.csv("recursion.csv", [{"verdict": rep.verdict, "lhs_lo": rep.lhs_ci[0], "lhs_hi": rep.lhs_ci[1],
                             "rhs_upper": rep.rhs_upper, "a_next": rep.a_next, "S_next": rep.S_next}])
    print(f"recursion: {rep.verdict} (p_next CI {rep.lhs_ci}, rhs {rep.rhs_upper:.6g})")
    return EXIT_FAIL if rep.verdict == "fail" else EXIT_PASS


def _q_item(i, spec, s):
    from .operators import boundary_max_green
    z = tuple(s["z"])
    V = sample(spec, i, geo.cube_sites(geo.CubeSpec(z, s["L"])))
    return [bool(boundary_max_green(z, s["L"], E, V) > s["a"]) for E in s["q_energies"]]


def _sweep_item(i, spec, s, c):
    z = tuple(s["z"])
    V = sample(spec, i, geo.cube_sites(geo.CubeSpec(z, s["L"])))
    rep = red.energy_sweep_structure(V, z, s["L"], tuple(s["interval"]), s["grid_step"], s["a"], c)
    return {"index": i, **rep.to_dict()}


def sweep_run(cfg) -> dict:
    """Energy sweep over ``n`` realizations against the ``|I| q / b`` budget.

    ``q`` is the largest upper CI of ``P{F > a}`` over ``q_energies``; when
    ``c`` is not configured it is taken as ``q^(1/4)`` and ``b = a c^2``.
    """
    from functools import partial
    s = cfg["sweep"]
    spec = disorder_from(cfg)
    n, a = s["n"], s["a"]
    hits = hs.run_items(partial(_q_item, spec=spec, s=s), range(n), cfg["workers"])
    q_hi = max(hs.clopper_pearson(sum(h[j] for h in hits), n)[1] for j in range(len(s["q_energies"])))
    c = s["c"] if s["c"] is not None else q_hi ** 0.25
    b = min(a * c * c, c)
    params = red.ReductionParams(a, b, c, q_hi, tuple(s["interval"]))
    recs = hs.run_items(partial(_sweep_item, spec=spec, s=s, c=c), range(n), cfg["workers"])
    budget = params.width * q_hi / b
    bad = sum(not r["covered"] for r in recs)
    lo, hi = hs.clopper_pearson(bad, n)
    cap_ok = all(r["intervals_used"] <= r["interval_cap"] for r in recs)
    verdict = "pass" if (hi <= budget and cap_ok) else ("fail" if (lo > budget or not cap_ok) else "inconclusive")
    summary = {"n": n, "uncovered": bad, "ci_lo": lo, "ci_hi": hi, "q_hi": q_hi, "a": a, "b": b, "c": c,
               "budget": budget, "cap_ok": cap_ok, "verdict": verdict}
    return {"records": recs, "summary": summary}


def cmd_sweep(cfg, w: Writer) -> int:
    out = sweep_run(cfg)
    sm = out["summary"]
    w.jsonl("sweep.jsonl", out["records"])
    w.csv("sweep.csv", [sm])
    print(f"sweep: {sm['uncovered']}/{sm['n']} uncovered, budget |I| q/b = {sm['budget']:.4g}, "
          f"verdict {sm['verdict']}")
    return EXIT_FAIL if sm["verdict"] == "fail" else EXIT_PASS


def dl_run(cfg):
    from functools import partial
    s = cfg["efc"]
    recs = hs.run_items(partial(_dl_item, spec=disorder_from(cfg), s=s), range(s["n"]), cfg["workers"])
    geom = _dl_geometry(s)
    check = red.dl_bound_check([r["efc"] for r in recs], [r["hit"] for r in recs], s["eps"],
                               geom["x"], geom["y"], s["L"], geom["ambient"])
    return recs, check


def _dl_geometry(s):
    d, L, sep = s["d"], s["L"], s["separation"]
    x = (0,) * d
    y = (sep,) + (0,) * (d - 1)
    half = (L + 1) // 2 + 1
    lo = -half
    hi = sep + half
    # ambient cube centred between x and y, odd side, containing both (L+2)-cubes
    centre = ((lo + hi) // 2,) + (0,) * (d - 1)
    radius = max(hi - centre[0], centre[0] - lo, half)
    return {"x": x, "y": y, "ambient": geo.CubeSpec(centre, 2 * radius + 1)}


def _dl_item(i, spec, s):
    g = _dl_geometry(s)
    V = sample(spec, i, geo.cube_sites(g["ambient"]))
    lo, hi = s["interval"]
    grid = lo + s["grid_step"] * np.arange(int(math.floor((hi - lo) / s["grid_step"] + 1e-9)) + 1)
    hit = red.both_singular_somewhere(V, g["x"], g["y"], s["L"], s["eps"], grid, s["Y"])
    return {"index": i, "efc": red.efc_pair(V, g["x"], g["y"], g["ambient"]), "hit": hit}


def cmd_efc(cfg, w: Writer) -> int:
    recs, check = dl_run(cfg)
    w.jsonl("efc.jsonl", recs)
    w.csv("efc.csv", [check.to_dict()])
    print(f"efc: mean correlator {check.efc_mean:.4g}, bound 4 eps + h = {check.bound_upper:.4g}, "
          f"verdict {check.verdict}")
    return EXIT_FAIL if check.verdict == "fail" else EXIT_PASS


def cmd_esl_curve(cfg, w: Writer) -> int:
    s = cfg["esl"]
    rows = hs.efc_scaling_probe(s["L_list"], s["n"], disorder_from(cfg), s["d"], s["window"], cfg["workers"])
    w.csv("esl-probe.csv", rows, ["L", "n", "mean_efc", "median_efc", "diagnostic", "seed"])
    plot = emit_plot_data([{"L": r["L"], "value": r["mean_efc"]} for r in rows], "decay")
    w.csv("esl-curve.csv", plot, PLOT_COLUMNS["decay"])
    diag = [r["diagnostic"] for r in rows]
    rho = hs.spearman(s["L_list"], diag) if len(rows) > 1 else math.nan
    inc = all(b > a for a, b in zip(diag, diag[1:]))
    print(f"esl-curve: diagnostic {['%.4f' % v for v in diag]}, Spearman {rho:.3f}, increasing {inc}")
    return EXIT_PASS if inc else EXIT_FAIL


COMMANDS = {
    "certify": cmd_certify,
    "estimate-p0": cmd_estimate_p0,
    "wegner": cmd_wegner,
    "cnr": cmd_cnr,
    "dominated-decay": lambda cfg, w: _lemma(cfg, w, "dominated-decay"),
    "appendix-chain": lambda cfg, w: _lemma(cfg, w, "appendix-chain"),
    "recursion": cmd_recursion,
    "sweep": cmd_sweep,
    "efc": cmd_efc,
    "esl-curve": cmd_esl_curve,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="afslab", description="Adaptive feedback scaling verification lab")
    p.add_argument("--version", action="version", version=f"afslab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        sp.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    return p


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def main(argv=None) -> int:
    parser = build_parser()
    parser.__class__ = _Parser
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"afslab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help / --version
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, args.seed, args.workers)
        out = Path(args.out or os.environ.get(OUT_ENV) or "results")
        digest = config_digest(cfg)
        w = Writer(out, digest)
        manifest = RunManifest(args.command, digest, cfg["seed"],
                               {"afslab": __version__, "numpy": np.__version__, "mpmath": mpmath.__version__,
                                "scipy": __import__("scipy").__version__}, time.time())
        code = COMMANDS[args.command](cfg, w)
        manifest.finished = time.time()
        manifest.outputs = w.inventory()
        (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=1) + "\n")
        return code
    except ConfigError as exc:
        print(f"afslab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AFSLabError as exc:
        print(f"afslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
