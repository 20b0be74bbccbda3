import io
import json
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sympcocycle.cli import main, run_scenario
from sympcocycle.errors import ConfigurationError
from sympcocycle.scenario import Scenario, build

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
[scenario]
name = "minimal"
suite = "verify"
seed = 3

[model]
kind = "plane"

[maps.u]
kind = "translation"
vector = [1.0, 0.0]

[maps.v]
kind = "translation"
vector = [0.0, 1.0]

[verify]
pairs = [["u", "v"]]
expect = [{ pair = ["u", "v"], value = EXPECTED }]
"""


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(path, out=None):
    buf = io.StringIO()
    status = run_scenario(str(path), None if out is None else str(out), stdout=buf)
    return status, buf.getvalue()


def records(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def test_minimal_verify_reports_half(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("EXPECTED", "0.5"))
    out = tmp_path / "r.jsonl"
    status, text = run(cfg, out=out)
    assert status == 0
    recs = records(out)
    assert recs[0]["record"] == "environment"
    assert recs[-1] == {"record": "summary", "checks": len(recs) - 2, "failed": 0, "status": 0}
    expect = [r for r in recs[1:-1] if "expect" in r["check_id"]]
    assert expect and expect[0]["value"] == pytest.approx(0.5, abs=1e-12)
    for r in recs[1:-1]:
        assert set(r) == {"check_id", "anchor", "inputs", "value", "residual", "tol", "pass"}
    ids = [r["check_id"] for r in recs[1:-1]]
    assert ids == sorted(ids)
    assert "minimal" in text


def test_failed_check_exit_1(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("EXPECTED", "0.25"))
    out = tmp_path / "r.jsonl"
    status, text = run(cfg, out=out)
    assert status == 1
    assert records(out)[-1]["failed"] >= 1
    assert "FAIL" in text


def test_undefined_name_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("EXPECTED", "0.5").replace('[["u", "v"]]', '[["u", "ghost"]]'))
    assert main(["verify", str(cfg)]) == 2
    assert "ghost" in capsys.readouterr().err


def test_parse_error_exit_2_with_line(tmp_path, capsys):
    cfg = write(tmp_path, "[scenario]\nname = \n")
    assert main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err


def test_missing_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2


def test_disk_point_validation(tmp_path, capsys):
    text = """
[scenario]
name = "bad"
suite = "kahler"
[model]
kind = "disk"
basepoint = [0.8, 0.8]
"""
    assert main(["run", str(write(tmp_path, text))]) == 2
    assert "basepoint" in capsys.readouterr().err


def test_nonconvergence_exit_3_keeps_partial_report(tmp_path):
    text = MINIMAL.replace("EXPECTED", "0.5") + """
[hamiltonians.H]
preset = "bump"
center = [0.0, 0.0]
radius = 0.3
amplitude = 40.0

[maps.wild]
kind = "bump"
hamiltonian = "H"
tol = 1e-300
"""
    text = text.replace('pairs = [["u", "v"]]', 'pairs = [["u", "v"], ["wild", "u"]]')
    out = tmp_path / "r.jsonl"
    status, _ = run(write(tmp_path, text), out=out)
    assert status == 3
    assert records(out)[-1]["status"] == 3


def test_tol_and_seed_overrides(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("EXPECTED", "0.5"))
    out = tmp_path / "r.jsonl"
    assert main(["run", str(cfg), "--out", str(out), "--tol", "1e-3", "--seed", "99"]) == 0
    env = records(out)[0]
    assert env["seed"] == 99
    assert all(r["tol"] == 1e-3 for r in records(out)[1:-1] if r["tol"] is not None)


def test_table_suite_writes_csv(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["run", str(ROOT / "scenarios" / "table.toml"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert "," in lines[0]
    assert len(lines) > 1


def test_suite_override_flag(tmp_path):
    cfg = ROOT / "scenarios" / "heisenberg.toml"
    assert main(["run", str(cfg), "--suite", "kahler"]) == 2  # kahler needs a disk model


def test_reports_byte_stable(tmp_path):
    cfg = ROOT / "scenarios" / "disk_kahler.toml"
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["kahler", str(cfg), "--out", str(a)]) == 0
    assert main(["kahler", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_random_pairs(tmp_path):
    cfg = ROOT / "scenarios" / "disk_kahler.toml"
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["kahler", str(cfg), "--out", str(a)])
    main(["kahler", str(cfg), "--out", str(b), "--seed", "12345"])
    assert a.read_bytes() != b.read_bytes()


def test_module_entry_point(tmp_path):
    cfg = ROOT / "scenarios" / "heisenberg.toml"
    proc = subprocess.run([sys.executable, "-m", "sympcocycle", "verify", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "heisenberg" in proc.stdout


@pytest.mark.parametrize("name", ["heisenberg", "disk_kahler", "distortion", "hamiltonian", "table"])
def test_scenario_round_trip(name):
    sc = Scenario.load(ROOT / "scenarios" / f"{name}.toml")
    again = Scenario.loads(sc.dumps())
    assert again == sc
    build(again)


@given(st.integers(0, 2**31), st.floats(1e-12, 1e-2), st.sampled_from(["radial", "liouville"]))
def test_round_trip_generated(seed, tol, primitive):
    sc = Scenario.loads(MINIMAL.replace("EXPECTED", "0.5"))
    sc.seed = seed
    sc.tolerances = dict(sc.tolerances, identity=tol)
    sc.model = dict(sc.model, primitive=primitive)
    sc = Scenario.from_dict(sc.to_dict())
    assert Scenario.loads(sc.dumps()) == sc


def test_validation_reports_field_path():
    with pytest.raises(ConfigurationError) as info:
        Scenario.loads(MINIMAL.replace("EXPECTED", "0.5").replace('vector = [1.0, 0.0]', 'vector = [1.0]'))
    assert "maps.u.vector" in str(info.value)
