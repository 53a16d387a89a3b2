import json
import math
import subprocess
import sys

import pytest

from wavepacket_lab.cli import main
from wavepacket_lab.config import (
    EXPERIMENTS,
    ConfigError,
    load_config,
    parse_config_text,
    schema_table,
)


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_values_and_expressions():
    v = parse_config_text("L = 8*pi  # comment\np = inf\ntheta = 1/6\nbands = 4, 8 16\nseed = 0x10\nc1_probe = yes\n")
    assert v["L"] == pytest.approx(8 * math.pi)
    assert v["p"] == math.inf
    assert v["theta"] == pytest.approx(1 / 6)
    assert v["bands"] == (4, 8, 16)
    assert v["seed"] == 16 and v["c1_probe"] is True
    assert parse_config_text("L = 16pi")["L"] == pytest.approx(16 * math.pi)


def test_parse_errors_are_collected():
    with pytest.raises(ConfigError) as ei:
        parse_config_text("bogus = 1\nn = lots\njust text\nd = 2\nd = 3\n")
    fields = [f for f, _ in ei.value.errors]
    assert fields == ["bogus", "n", "line 3", "d"]


def test_defaults_layering(tmp_path):
    cfg = load_config(_write(tmp_path, "ensemble = 3\n"), "strichartz-mc", seed=9)
    assert cfg.n == 1024 and cfg.ensemble == 3 and cfg.seed == 9
    assert str(cfg.out_dir).endswith("runs/strichartz-mc")
    assert load_config(None, "cone-cover").R == 32


@pytest.mark.parametrize("text,field", [
    ("theta = 0\n", "theta"),
    ("n = 100\n", "n"),
    ("L = 10\n", "L"),
    ("delta = 0.25\n", "delta"),
    ("eta = 0\n", "eta"),
    ("d = 4\nn = 128\n", "n"),
    ("law = cauchy\n", "law"),
    ("M = 3\n", "M"),
    ("dt_factor = 2\n", "dt_factor"),
    ("seed = 18446744073709551616\n", "seed"),
    ("q = 0.5\n", "q"),
])
def test_validation_rejects(tmp_path, text, field):
    with pytest.raises(ConfigError) as ei:
        load_config(_write(tmp_path, text), "partition-check")
    assert field in [f for f, _ in ei.value.errors]


def test_parse_and_validation_errors_reported_together(tmp_path):
    with pytest.raises(ConfigError) as ei:
        load_config(_write(tmp_path, "n = x\ntheta = 0\n"), "partition-check")
    assert {f for f, _ in ei.value.errors} == {"n", "theta"}


def test_experiment_mismatch(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "experiment = cone-cover\n"), "partition-check")


def test_schema_table_lists_every_key():
    t = schema_table()
    for key in ("theta", "bands", "dt_factor", "checkpoint_every"):
        assert f"`{key}`" in t


def test_cli_ok_and_manifest(tmp_path, capsys):
    cfg = _write(tmp_path, "bands = 8\nn_times = 5\n")
    out = tmp_path / "o"
    assert main(["dispersive-decay", "--config", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok"
    assert set(man["outputs"]) == {"decay.csv", "decay_fit.csv", "decay.svg"}
    from wavepacket_lab.outputs import sha256_file

    for name, digest in man["outputs"].items():
        assert sha256_file(out / name) == digest


def test_cli_outputs_byte_identical(tmp_path):
    cfg = _write(tmp_path, "R = 8\nbands = 4\nsamples = 500\n")
    for sub in ("a", "b"):
        assert main(["cone-cover", "--config", str(cfg), "--out", str(tmp_path / sub), "--seed", "5"]) == 0
    for name in ("cone_cover.csv", "cube_cover.csv", "cones.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_config_error_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, "theta = 0\nd = 9\n")
    assert main(["partition-check", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "config error: theta" in err and "config error: d" in err
    assert main(["partition-check", "--config", str(tmp_path / "missing.cfg")]) == 2


@pytest.mark.parametrize("argv", [
    ["no-such-experiment", "--config", "x"],
    ["partition-check"],
    ["partition-check", "--config", "x", "--seed", "-1"],
    ["partition-check", "--config", "x", "--seed", str(2**64)],
])
def test_cli_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as ei:
        main(argv)
    assert ei.value.code == 2


def test_cli_runtime_failure_exit_3(tmp_path):
    cfg = _write(tmp_path, "bands = 8\nM = 16\n")
    out = tmp_path / "fail"
    assert main(["dispersive-decay", "--config", str(cfg), "--out", str(out)]) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed" and "exceeds" in man["error"]


def test_console_script_entry_point(tmp_path):
    cfg = _write(tmp_path, "R = 8\nbands = 8\nsamples = 100\n")
    r = subprocess.run([sys.executable, "-m", "wavepacket_lab.cli", "cone-cover", "--config", str(cfg),
                        "--out", str(tmp_path / "c")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert len(EXPERIMENTS) == 12


def test_shipped_configs_validate():
    from pathlib import Path

    files = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert {f.stem for f in files} == set(EXPERIMENTS)
    for f in files:
        assert load_config(f).experiment == f.stem
