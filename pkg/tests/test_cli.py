import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nldiff.cli import main
from nldiff.config import SCHEMA, default_config, parse_config, parse_text
from nldiff.errors import ConfigurationError, FormatError
from nldiff.snapshot import decode, encode, read_snapshot, write_snapshot

SMALL = """\
grid.points = 33
grid.extent = 6
evolution.tmax = 2
evolution.snapshot_times = 1,2
holes[0].shape = ball
holes[0].center = 0,0,0
holes[0].size = 1
"""


def test_minimal_config_resolves(tmp_path):
    cfg = parse_text("holes[0].shape = ball\nholes[0].center = 0,0,0\nholes[0].size = 2\n")
    assert cfg == default_config()
    assert cfg["grid.points"] == 129 and cfg["evolution.dt"] == 0.25
    assert cfg.hole_specs() == [{"shape": "ball", "center": (0.0, 0.0, 0.0), "size": 2.0}]


def test_config_errors():
    with pytest.raises(ConfigurationError, match="points must be odd"):
        parse_text("grid.points = 64\n")
    with pytest.raises(ConfigurationError, match="did you mean 'grid.points'"):
        parse_text("gird.points = 65\n")
    with pytest.raises(ConfigurationError) as info:
        parse_text("grid.points = 64\nevolution.dt = 3\nbogus\n")
    msg = str(info.value)
    assert "points must be odd" in msg and "2.7" in msg and "line 3" in msg
    with pytest.raises(ConfigurationError, match="missing size"):
        parse_text("holes[0].shape = ball\nholes[0].center = 0,0,0\n")
    with pytest.raises(ConfigurationError, match="not found"):
        parse_config("/nonexistent/nldiff.cfg")


@given(st.integers(8, 100), st.floats(1.0, 50.0), st.floats(0.01, 2.7),
       st.sampled_from(["rk4", "expeuler"]), st.floats(0.1, 3.0))
def test_render_fixpoint(half, extent, dt, integ, radius):
    text = (f"grid.points = {2 * half + 1}\ngrid.extent = {extent!r}\nevolution.dt = {dt!r}\n"
            f"evolution.integrator = {integ}\nholes[0].shape = ball\n"
            f"holes[0].center = 0,0.5,0\nholes[0].size = {radius!r}\n")
    cfg = parse_text(text)
    again = parse_text(cfg.render())
    assert again == cfg
    assert again.render() == cfg.render()


def test_every_default_parses():
    cfg = default_config()
    assert set(cfg.values) == set(SCHEMA)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.floats(1e-3, 10.0),
       st.floats(allow_nan=True, allow_infinity=False) | st.none(), st.text("abcxyz_", max_size=12))
def test_snapshot_round_trip(shape, h, t, name):
    values = np.random.default_rng(len(shape)).standard_normal(shape)
    head, back = decode(encode(values, h, 3.0, t, name))
    assert np.array_equal(back, values)
    assert head.sizes == tuple(shape) and head.spacing == h and head.name == name
    assert (math.isnan(head.time) if t is None or math.isnan(t) else head.time == t)


def test_snapshot_bit_exact_file(tmp_path):
    v = np.random.default_rng(0).standard_normal((17, 17, 17))
    v[0, 0, 0] = -0.0
    v[1, 0, 0] = 5e-324
    p = tmp_path / "u.nldf"
    write_snapshot(p, v, 0.375, 3.0, 12.5, "u")
    head, back = read_snapshot(p)
    assert back.tobytes() == v.tobytes()
    assert head.time == 12.5 and head.extent == 3.0


def test_snapshot_format_errors():
    data = encode(np.ones((3, 3)), 0.5, 1.0)
    with pytest.raises(FormatError, match="magic"):
        decode(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="version"):
        decode(data[:4] + b"\x02\x00" + data[6:])
    with pytest.raises(FormatError, match="payload"):
        decode(data[:-8])
    with pytest.raises(FormatError, match="truncated"):
        decode(data[:12])


def test_cli_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("gird.points = 65\n")
    assert main(["stationary", "--config", str(bad), "--output", str(tmp_path / "o")]) == 2
    assert "gird.points" in capsys.readouterr().err


def test_cli_missing_dependency(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--output", str(out), "-q"]) == 2
    err = capsys.readouterr().err
    assert "nldiff stationary" in err
    assert main(["report", "--config", str(cfg), "--output", str(out), "-q"]) == 2
    assert "stationary" in capsys.readouterr().err


def test_cli_stationary_then_simulate(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    out = tmp_path / "run"
    assert main(["stationary", "--config", str(cfg), "--output", str(out), "-q"]) in (0, 1)
    assert parse_config(out / "resolved.cfg") == parse_config(cfg, {"output_dir": str(out)})
    head, phi = read_snapshot(out / "phi.nldf")
    assert phi.shape == (33, 33, 33) and phi.min() >= 0 and phi.max() <= 1
    assert main(["simulate", "--config", str(cfg), "--output", str(out), "-q"]) == 0
    assert (out / "metrics.csv").is_file()
    head, u = read_snapshot(out / "u_t00002.000.nldf")
    assert head.time == 2.0 and u.min() >= -1e-15


def test_cli_selftest(tmp_path, capsys):
    assert main(["selftest", "--output", str(tmp_path), "-q"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "pass" in out
    assert (tmp_path / "selftest.csv").is_file()
