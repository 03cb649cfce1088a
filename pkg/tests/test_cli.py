from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from conftest import two_bus_voltage
from pdpf.cli import main

TWO_BUS = {
    "name": "two-bus",
    "bases": {"s_kva": 1000, "v_kv": 12.47},
    "nodes": [{"id": 0, "kind": "slack"}, {"id": 1, "p_kw": 400, "q_kvar": 200}],
    "branches": [{"from": 0, "to": 1, "r_ohm": 0.02 * 155.5009, "x_ohm": 0.04 * 155.5009}],
}


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_solve_bundled_feeder(capsys):
    assert main(["solve", "feeder34"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["node", "v_re", "v_im", "v_mag", "v_angle_deg"]
    assert len(rows) == 35


def test_solve_two_bus_matches_closed_form(tmp_path, capsys):
    f = _write(tmp_path / "two.json", TWO_BUS)
    out = tmp_path / "v.csv"
    assert main(["solve", str(f), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    z_base = 12.47**2 * 1000 / 1000
    z = complex(0.02 * 155.5009, 0.04 * 155.5009) / z_base
    expected = two_bus_voltage(z, 0.4 + 0.2j)
    assert float(rows[1]["v_mag"]) == pytest.approx(abs(expected), abs=1e-8)


def test_solve_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"bases": {"s_kva": 1000,\n "v_kv": }}')
    assert main(["solve", str(bad)]) == 2
    rec = _err(capsys)
    assert rec["error"] == "input" and "line 2" in rec["message"]


def test_solve_missing_field(tmp_path, capsys):
    doc = json.loads(json.dumps(TWO_BUS))
    del doc["branches"][0]["x_ohm"]
    assert main(["solve", str(_write(tmp_path / "f.json", doc))]) == 2
    assert "branches[0]" in _err(capsys)["message"]


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--scenario", "scenario34", "--out", str(out), "--iterations", "400", *extra])
    return code, out


def test_run_writes_full_artifact_set(tmp_path, capsys):
    code, out = _run(tmp_path, "a")
    assert code == 0
    names = {p.name for p in out.iterdir()}
    for engine in ("mcs", "fsds", "tpem", "ut"):
        assert f"moments_{engine}.csv" in names
    for node in (5, 15, 28):
        assert {f"pdf_{node}_mcs.csv", f"pdf_{node}_fsds.csv", f"tuning_curve_{node}.csv"} <= names
    assert {"errors_vs_mcs.csv", "timing.json", "characteristics.csv"} <= names
    timing = json.loads((out / "timing.json").read_text())
    assert timing["seed"] == 2016
    assert len(timing["manifest_sha256"]) == 64
    assert timing["version"].startswith("0.1.0")
    assert not any(p.name.startswith(".pdpf-") for p in tmp_path.iterdir())


def test_run_is_byte_identical(tmp_path, capsys):
    _, a = _run(tmp_path, "a", "--seed", "9")
    _, b = _run(tmp_path, "b", "--seed", "9")
    _, c = _run(tmp_path, "c", "--seed", "10")
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs == sorted(p.name for p in b.glob("*.csv"))
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (a / "moments_mcs.csv").read_bytes() != (c / "moments_mcs.csv").read_bytes()


def test_manifest_and_flag_override(tmp_path, capsys):
    manifest = _write(tmp_path / "m.json", {"scenario": "scenario34", "out": str(tmp_path / "m"),
                                            "engines": ["tpem", "ut"], "seed": 3})
    assert main(["run", "--manifest", str(manifest), "--engines", "tpem"]) == 0
    names = {p.name for p in (tmp_path / "m").iterdir()}
    assert "moments_tpem.csv" in names and "moments_ut.csv" not in names
    assert json.loads((tmp_path / "m" / "timing.json").read_text())["manifest"]["engines"] == ["tpem"]


def test_fixed_lambda_skips_tuning(tmp_path, capsys):
    code, out = _run(tmp_path, "f", "--engines", "fsds", "--lambda", "0.001")
    assert code == 0
    assert not list(out.glob("tuning_curve_*"))
    assert (out / "pdf_15_fsds.csv").exists()


def test_zero_variance_run_is_refused(tmp_path, capsys):
    feeder = _write(tmp_path / "two.json", TWO_BUS)
    scen = _write(tmp_path / "s.json", {"feeder": str(feeder), "loads": {"std_fraction": 0.0},
                                        "outputs": [1], "engines": {"seed": 1}})
    out = tmp_path / "z"
    assert main(["run", "--scenario", str(scen), "--out", str(out), "--engines", "mcs",
                 "--iterations", "50"]) == 3
    rec = _err(capsys)
    assert "zero variance" in rec["message"]
    assert not out.exists()


@pytest.mark.parametrize("args,kind", [
    (["--engines", "mcs,magic"], "manifest"),
    (["--engines", ""], "manifest"),
    (["--reference", "mcs", "--engines", "fsds"], "manifest"),
])
def test_bad_manifests(tmp_path, capsys, args, kind):
    assert main(["run", "--scenario", "scenario34", "--out", str(tmp_path / "x"), *args]) == 2
    assert _err(capsys)["error"] == kind


def test_missing_scenario(tmp_path, capsys):
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path / "x")]) == 2


def test_tune_subcommand(tmp_path, capsys):
    out = tmp_path / "t"
    assert main(["tune", "--scenario", "scenario34", "--node", "15", "--out", str(out),
                 "--kn-candidates", "20,45,80"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["k_n"] in (20, 45, 80)
    assert (out / "tuning_curve_15.csv").exists() and (out / "sample_count_15.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pdpf", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
