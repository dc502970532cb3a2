import csv
import json

import pytest

from afslab import cli
from afslab import engine as en

SMALL = """
lab: {n: 12}
singular: {L: 3, E: -282.0, b: 1.25, n: 30}
cnr: {n: 20}
esl: {L_list: [9, 15], n: 10}
"""


def run(tmp_path, *args, config=None, name="out"):
    argv = list(args)
    if config is not None:
        p = tmp_path / f"{name}.yaml"
        p.write_text(config)
        argv += ["--config", str(p)]
    out = tmp_path / name
    return cli.main(argv + ["--out", str(out)]), out


def test_certify_threshold_violated(tmp_path):
    code, out = run(tmp_path, "certify", config='certify: {p0: "23^-1"}')
    assert code == cli.EXIT_FAIL
    assert json.loads((out / "certificate.json").read_text())["overall"] == "fail"


def test_certify_small_L0_names_threshold(tmp_path):
    code, out = run(tmp_path, "certify", config='certify: {L0: "3"}')
    assert code == cli.EXIT_FAIL
    cert = json.loads((out / "certificate.json").read_text())
    assert any(c["name"] == "L0-threshold" and not c["passed"] for c in cert["checks"])


def test_certify_short_run_passes(tmp_path):
    code, out = run(tmp_path, "certify", config="certify: {k_max: 39}")
    assert code == cli.EXIT_PASS
    assert (out / "manifest.json").exists()


def test_usage_errors(tmp_path):
    assert run(tmp_path, "certify", config="bogus: 1")[0] == cli.EXIT_USAGE
    assert run(tmp_path, "certify", config="certify: {b0: '1/2'}", name="b")[0] == cli.EXIT_USAGE
    assert run(tmp_path, "certify", config=": : :", name="c")[0] == cli.EXIT_USAGE
    assert cli.main(["no-such-command"]) == cli.EXIT_USAGE
    assert cli.main(["certify", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_USAGE


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    p = tmp_path / "c.yaml"
    p.write_text(SMALL)
    assert cli.main(["estimate-p0", "--config", str(p)]) == cli.EXIT_PASS
    assert (tmp_path / "envout" / "estimate-p0.csv").exists()


def _data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def test_byte_identical_reruns(tmp_path):
    _, a = run(tmp_path, "dominated-decay", "--seed", "5", config=SMALL, name="a")
    _, b = run(tmp_path, "dominated-decay", "--seed", "5", config=SMALL, name="b")
    assert _data_files(a) == _data_files(b)
    _, c = run(tmp_path, "dominated-decay", "--seed", "6", config=SMALL, name="c")
    assert _data_files(a) != _data_files(c)


def test_workers_do_not_change_data(tmp_path):
    _, a = run(tmp_path, "estimate-p0", "--workers", "1", config=SMALL, name="w1")
    _, b = run(tmp_path, "estimate-p0", "--workers", "3", config=SMALL, name="w3")
    assert _data_files(a) == _data_files(b)


def test_rows_carry_digest(tmp_path):
    _, out = run(tmp_path, "cnr", config=SMALL)
    digest = json.loads((out / "manifest.json").read_text())["config_digest"]
    for line in (out / "cnr.jsonl").read_text().splitlines():
        assert json.loads(line)["config_digest"] == digest
    rows = list(csv.DictReader(open(out / "cnr.csv")))
    assert rows and all(r["config_digest"] == digest for r in rows)
    inv = json.loads((out / "manifest.json").read_text())["outputs"]
    assert set(inv) == {"cnr.jsonl", "cnr.csv", "cnr.json"}


def test_recursion_and_esl_commands(tmp_path):
    code, out = run(tmp_path, "recursion", config=SMALL)
    assert code == cli.EXIT_PASS
    assert json.loads((out / "recursion.json").read_text())["verdict"] in ("pass", "inconclusive")
    code, out = run(tmp_path, "esl-curve", config=SMALL, name="esl")
    rows = list(csv.DictReader(open(out / "esl-curve.csv")))
    assert [r["L"] for r in rows] == ["9", "15"]
    assert all(0 < float(r["diagnostic"]) < 1 for r in rows)


def test_emit_plot_data():
    assert cli.emit_plot_data([], "decay") == []
    rows = cli.emit_plot_data([{"L": 9, "value": 1e-3}], "decay")
    assert 0 < rows[0]["diagnostic"] < 1
    with pytest.raises(cli.ConfigError):
        cli.emit_plot_data(None, "decay")
    base = en.derive_base(1, 1, 5, "23^-4", "11^256")
    cert = en.certify(base, 45)
    eng = cli.emit_plot_data(cert, "engine")
    deltas = [r["delta"] for r in eng if r["k"] > base.K + 1]
    assert all(b > a for a, b in zip(deltas, deltas[1:]))


def test_empty_results_header_only(tmp_path):
    w = cli.Writer(tmp_path, "abc")
    w.csv("empty.csv", [], cli.PLOT_COLUMNS["decay"])
    assert (tmp_path / "empty.csv").read_text() == "L,value,diagnostic,config_digest\n"
