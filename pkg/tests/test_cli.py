import io
import json
import os

import numpy as np
import pytest

from planarflow import cli
from planarflow.config import ConfigError, format_complex, load_config, parse_complex


def _run(tmp_path, command, *overrides, workers=None, name="out"):
    buf = io.StringIO()
    out = tmp_path / name
    code = cli.run(command, overrides=list(overrides), out_dir=str(out), workers=workers,
                   stream=buf)
    lines = dict(l.split(": ", 1) for l in buf.getvalue().splitlines() if ": " in l)
    return code, out, lines


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.mark.parametrize("text,value", [
    ("1+2i", 1 + 2j), ("i", 1j), ("-i", -1j), ("1+i", 1 + 1j), (" 0.5 - 3i ", 0.5 - 3j),
    ("2", 2 + 0j), ("-1.5e-3i", -1.5e-3j)])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


@pytest.mark.parametrize("bad", ["", "1+2j", "abc", "1+2ii"])
def test_parse_complex_rejects(bad):
    with pytest.raises(ValueError):
        parse_complex(bad)


def test_format_complex_round_trips():
    for z in (1 + 2j, -0.25 - 1e-9j, 3j):
        assert parse_complex(format_complex(z)) == z


def test_unknown_keys_are_named():
    with pytest.raises(ConfigError, match="field.alpah"):
        load_config("simulate", text="[field]\nalpah = 0.3\n")
    with pytest.raises(ConfigError, match=r"\[fields\]"):
        load_config("simulate", text="[fields]\nalpha = 0.3\n")
    with pytest.raises(ConfigError, match="experiment.z"):
        load_config("simulate", overrides=["experiment.z=1+1j"])
    with pytest.raises(ConfigError, match="driver.step"):
        load_config("simulate", overrides=["driver.step=-1"])


def test_config_file_and_hash(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[field]\nalpha = 0.25\n[run]\nworkers = 3\n")
    cfg = load_config("simulate", str(p))
    assert cfg["field"]["alpha"] == 0.25 and cfg.workers == 3
    # execution settings do not enter the hash
    assert cfg.digest() == load_config("simulate", text="[field]\nalpha = 0.25\n").digest()
    assert cfg.digest() != load_config("simulate").digest()


def test_bad_config_exits_2(tmp_path):
    code, out, _ = _run(tmp_path, "simulate", "field.kind=quartic")
    assert code == 2
    assert cli.main(["run", "simulate", "-c", str(tmp_path / "missing.ini"),
                     "-o", str(tmp_path / "x")]) == 2


def test_numerical_failure_exits_3(tmp_path):
    code, out, lines = _run(tmp_path, "simulate", "field.kind=inversion", "experiment.z=0",
                            "driver.kind=zero")
    assert code == 3
    m = _manifest(out)
    assert m["status"] == 3 and "error" in m["summary"]


def test_boundary_of_constant_field_is_a_level_segment(tmp_path):
    code, out, lines = _run(tmp_path, "boundary", "field.kind=constant", "field.c=1i",
                            "emit.png=false")
    assert code == 0
    data = np.loadtxt(out / "boundary.csv", delimiter=",", skiprows=1)
    assert np.allclose(data[:, 2], 1.0) and np.allclose(data[:, 1], data[:, 0])
    m = _manifest(out)
    names = [f["name"] for f in m["files"]]
    assert names == ["boundary.csv", "boundary.json", "boundary.svg"]
    for f in m["files"]:
        assert f["bytes"] == os.path.getsize(out / f["name"])


def test_loewner_trace_command(tmp_path):
    code, out, lines = _run(tmp_path, "loewner-trace", "emit.png=false")
    assert code == 0
    data = np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)
    assert np.allclose(data[:, 2], [1.0, 2.0], rtol=1e-3)
    assert np.allclose(data[:, 1], 0.0, atol=1e-12)
    assert "gamma_last" in lines


def test_warnings_are_recorded(tmp_path):
    code, out, lines = _run(tmp_path, "simulate", "experiment.t=0.5005", "emit.png=false")
    assert code == 0
    cats = [w["category"] for w in _manifest(out)["warnings"]]
    assert "SnapWarning" in cats
    assert any(k == "warning" for k in lines)


def test_defaults_command(capsys):
    assert cli.main(["defaults", "corner-demo"]) == 0
    text = capsys.readouterr().out
    assert "[experiment]" in text and "seed = 13" in text
    # the printed defaults load back to the same configuration
    assert load_config("corner-demo", text=text).digest() == load_config("corner-demo").digest()


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PLANARFLOW_OUT", str(tmp_path / "env"))
    assert cli.run("hcap", overrides=["emit.png=false"], stream=io.StringIO()) == 0
    assert (tmp_path / "env" / "hcap.csv").exists()


@pytest.mark.parametrize("command,extra", [
    ("simulate", ()), ("derivative", ("experiment.n=11", "driver.step=1e-3")),
    ("identity-check", ("driver.step=1e-3",)), ("hull", ("experiment.nx=11", "experiment.ny=6")),
    ("hcap", ()),
    ("moments", ("experiment.n_paths=50",)), ("j-moments", ("experiment.n_paths=50",)),
    ("phi-estimate", ("experiment.n_paths=20", "driver.step=1e-2", "experiment.lambda=2")),
])
def test_every_command_runs(tmp_path, command, extra):
    code, out, lines = _run(tmp_path, command, "emit.png=false", *extra)
    assert code == 0, lines
    m = _manifest(out)
    assert m["command"] == command and m["files"]


def test_png_output_is_deterministic(tmp_path):
    a = _run(tmp_path, "loewner-trace", name="a")[1]
    b = _run(tmp_path, "loewner-trace", name="b")[1]
    assert (a / "trace.png").read_bytes() == (b / "trace.png").read_bytes()


def test_worker_count_does_not_change_files(tmp_path):
    args = ("boundary", "driver.kind=brownian", "driver.seed=5", "emit.png=false")
    _, a, _ = _run(tmp_path, *args, workers=1, name="w1")
    _, b, _ = _run(tmp_path, *args, workers=4, name="w4")
    fa = {f["name"]: f["sha256"] for f in _manifest(a)["files"]}
    fb = {f["name"]: f["sha256"] for f in _manifest(b)["files"]}
    assert fa == fb
    assert _manifest(a)["config_hash"] == _manifest(b)["config_hash"]
