import json
import struct
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swe_ergodic.cli import main, write_csv
from swe_ergodic.config import ConfigError, ExperimentConfig, emit_config, parse_config

MINIMAL = "[grid]\nd = 1\nL = 40\nN = 320\nT = 1\n"


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.dt == pytest.approx(40 / 320)
    assert cfg.replicas == 1000 and cfg.model == "white" and cfg.sigma == "linear"


def test_every_violation_is_reported():
    text = MINIMAL + "[noise]\nmodel = riesz\nbeta = 0.5\nbogus = 1\n[run]\nreplicas = 1\nradii = 25\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msg = "\n".join(err.value.problems)
    assert "unknown key 'bogus'" in msg and "unknown section [extra]" in msg
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "[run]\nreplicas = 1\nradii = 25\nfunctional = cube\n")
    msg = "\n".join(err.value.problems)
    assert "replicas" in msg and "finite propagation" in msg and "cube" in msg


def test_wraparound_is_named():
    with pytest.raises(ConfigError, match="finite propagation"):
        parse_config(MINIMAL + "[run]\nradii = 2, 4, 8, 19.5\n", "ergodicity")


def test_riesz_beyond_two_cites_dalang():
    text = "[grid]\nd = 2\nL = 16\nN = 32\nT = 1\n[noise]\nmodel = riesz\nbeta = 2.5\n"
    with pytest.raises(ConfigError, match="Dalang"):
        parse_config(text, "simulate")
    assert parse_config(text, "dalang-check").beta == 2.5


def test_three_dimensional_probes_refused():
    text = "[grid]\nd = 3\nL = 8\nN = 16\nT = 1\n[noise]\nmodel = riesz\nbeta = 1\n"
    with pytest.raises(ConfigError, match="open problem"):
        parse_config(text, "malliavin-check")


configs = st.builds(
    ExperimentConfig,
    d=st.just(1), L=st.sampled_from([16.0, 40.0]), N=st.sampled_from([64, 128, 320]), T=st.just(1.0),
    dt=st.sampled_from([None, 0.0625, 0.125]),
    model=st.sampled_from(["white", "bump", "atom"]),
    s=st.floats(0.1, 3.0), c=st.floats(0.1, 3.0),
    sigma=st.sampled_from(["linear", "sin", "affine"]),
    replicas=st.integers(2, 5000), seed=st.integers(0, 2**63 - 1),
    radii=st.lists(st.floats(0.5, 6.0), max_size=4).map(tuple),
    functional=st.lists(st.sampled_from(["identity", "tanh", "sin", "clip"]), min_size=1, max_size=3).map(tuple),
    picard_n=st.integers(1, 4), picard_k=st.integers(0, 5), eps=st.none() | st.floats(1e-6, 1e-2),
)


@given(cfg=configs)
def test_round_trip(cfg):
    parsed = parse_config(emit_config(cfg))
    if cfg.dt is None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "dt": parsed.dt})
    assert parsed == cfg
    assert parse_config(emit_config(parsed)) == parsed


def test_csv_format(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [(0.1, 1 / 3)])
    raw = (tmp_path / "a.csv").read_bytes()
    assert raw == b"x,y\r\n0.10000000000000001,0.33333333333333331\r\n"


# ---------------------------------------------------------------- CLI runs


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def test_ergodicity_atom_plateau(tmp_path):
    code = _run(tmp_path, "ergodicity", "--cov", "atom", "--c", "1", "--sigma", "constant",
                "--L", "24", "--N", "96", "--radii", "1,2,4", "-M", "300", "--threads", "2")
    summary = json.loads((tmp_path / "ergodicity.json").read_text())
    assert code == 0 and summary["verdict"] == "plateau"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert {"config", "seed", "threads", "version", "wall_time_s"} <= set(manifest)
    assert parse_config(manifest["config"]).c == 1.0


def test_dalang_white_d2_infinite(tmp_path, capsys):
    assert _run(tmp_path, "dalang-check", "--cov", "white", "-d", "2", "--L", "8", "--N", "16") == 0
    assert "infinite" in capsys.readouterr().out
    assert json.loads((tmp_path / "dalang-check.json").read_text())["classification"] == "infinite"


def test_config_error_exit_and_report(tmp_path):
    code = _run(tmp_path, "simulate", "--cov", "riesz", "--beta", "2.5", "-d", "2", "--L", "8", "--N", "16")
    assert code == 3
    failure = json.loads((tmp_path / "failure.json").read_text())
    assert set(failure[0]) == {"property", "expected", "observed", "tolerance"}


def test_failed_property_exit_one(tmp_path):
    # a slowly decaying Riesz tail misses the D(16)/D(1) < 0.1 threshold
    code = _run(tmp_path, "spectral-check", "--cov", "riesz", "--beta", "0.3", "--L", "40", "--N", "64")
    failure = json.loads((tmp_path / "failure.json").read_text())
    assert code == 1 and {"property", "expected", "observed", "tolerance"} <= set(failure[0])


def test_unknown_subcommand_exit_two():
    proc = subprocess.run([sys.executable, "-m", "swe_ergodic", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_csv_identical_across_threads(tmp_path):
    args = ["simulate", "--cov", "bump", "--s", "0.5", "--sigma", "sin", "--L", "16", "--N", "64", "-M", "40"]
    assert _run(tmp_path / "a", *args, "--threads", "1") == 0
    assert _run(tmp_path / "b", *args, "--threads", "4") == 0
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == (tmp_path / "b" / "simulate.csv").read_bytes()
    assert (tmp_path / "a" / "simulate.json").read_bytes() == (tmp_path / "b" / "simulate.json").read_bytes()


def test_dumps(tmp_path):
    assert _run(tmp_path, "simulate", "--L", "8", "--N", "32", "-M", "4", "--dump-fields", "--dump-kernels") == 0
    raw = (tmp_path / "field_r0.bin").read_bytes()
    d, N, L, t = struct.unpack("<qqdd", raw[:32])
    assert (d, N, L, t) == (1, 32, 8.0, 1.0)
    assert np.frombuffer(raw[32:], "<f8").shape == (32,)
    assert (tmp_path / "kernel_0001.bin").exists()


@pytest.mark.parametrize("argv", [
    ["spectral-check", "--cov", "bump", "--s", "0.5", "-d", "2", "--L", "40", "--N", "64"],
    ["picard-check", "--L", "16", "--N", "256", "--picard-n", "2", "--picard-k", "4", "-M", "20"],
    ["malliavin-check", "--sigma", "sin", "--L", "16", "--N", "128", "--probe-s", "2",
     "--probe-replicas", "20"],
])
def test_subcommands_pass(tmp_path, argv):
    assert _run(tmp_path, *argv) == 0
    props = json.loads((tmp_path / "properties.json").read_text())
    assert props and all(p["passed"] for p in props)
