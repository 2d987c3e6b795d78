import io
import json
from pathlib import Path

import pytest

from geoequiv.cli import main
from geoequiv.config import parse_config, parse_real
from geoequiv.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TRIG2 = """[model]
name = TRIG2
dim = 2

[profile 1]
kind = sin
offset = 1
amplitude = 0.3

[profile 2]
kind = cos
offset = 2
amplitude = 0.3
"""


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_parse_minimal():
    cfg = parse_config(TRIG2)
    assert cfg.dim == 2 and cfg.variant == "lc" and cfg.run == {}
    assert cfg.build_model().is_lc


def test_parse_real_pi():
    assert parse_real("2pi") == pytest.approx(6.283185307179586)
    assert parse_real("-0.5*pi") == pytest.approx(-1.5707963267948966)
    with pytest.raises(ValueError):
        parse_real("nan")


@pytest.mark.parametrize(
    "text, message, line",
    [
        (TRIG2.replace("dim = 2", "dim = 0"), "dim must be ≥ 1", 3),
        (TRIG2 + "\n[profile 1]\nkind = sin\n", "duplicate section [profile 1]", 15),
        (TRIG2.replace("amplitude = 0.3\n\n[profile 2]", "amplitude = 0.3\ncolour = red\n\n[profile 2]"),
         "unknown key 'colour'", 9),
        (TRIG2.replace("offset = 2", "offset = two"), "malformed value for 'offset'", 12),
        (TRIG2.replace("kind = cos\n", ""), "missing required key 'kind'", 10),
        (TRIG2.replace("dim = 2\n", ""), "missing required key 'dim'", 1),
        (TRIG2 + "\n[run]\nsteps = -1\n", "steps must be ≥ 0", 16),
    ],
    ids=["dim", "duplicate", "unknown", "malformed", "missing-kind", "missing-dim", "negative-steps"],
)
def test_parse_errors(text, message, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert message in str(info.value)
    assert f"line {line}" in str(info.value)


def test_verify_pass_and_json(tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run("verify", "--config", str(CONFIGS / "trig2.cfg"), "--out", str(out))
    assert code == 0 and "PASS" in stdout
    assert json.loads(out.read_text())["overall_pass"] is True


def test_verify_broken_exits_2():
    code, stdout, _ = run("verify", "--config", str(CONFIGS / "trig2_broken.cfg"))
    assert code == 2 and "FAIL" in stdout


@pytest.mark.parametrize(
    "argv",
    [
        ["integrate", "--config", str(CONFIGS / "trig2.cfg"), "--steps", "-1"],
        ["integrate", "--config", str(CONFIGS / "trig2.cfg"), "--step-size", "0"],
        ["verify", "--config", "/nonexistent.cfg"],
        ["verify", "--config", str(CONFIGS / "trig2.cfg"), "--depth", "deep"],
        ["frobnicate", "--config", str(CONFIGS / "trig2.cfg")],
        ["verify"],
        ["scan-singular", "--config", str(CONFIGS / "trig2_broken.cfg")],
    ],
)
def test_usage_errors_exit_1(argv):
    code, _, err = run(*argv)
    assert code == 1 and err.startswith("error:")


def test_bad_config_file_exits_1(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text(TRIG2.replace("dim = 2", "dim = 0"))
    code, _, err = run("verify", "--config", str(p))
    assert code == 1 and "line 3" in err


def test_integrate_csv(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["integrate", "--config", str(CONFIGS / "trig2.cfg"), "--steps", "500", "--seed", "3"]
    assert run(*args, "--out", str(a))[0] == 0
    assert run(*args, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "t,x1,x2,p1,p2,H,I_1,I_2"
    assert len(lines) == 1 + 6
    row = [float(v) for v in lines[-1].split(",")]
    assert row[0] == pytest.approx(0.5)


@pytest.mark.parametrize("command, extra", [
    ("verify", []),
    ("scan-singular", []),
    ("pseudonorm", ["--horizon", "20"]),
    ("entropy", ["--horizon", "20"]),
])
def test_byte_identical(tmp_path, command, extra):
    cfg = CONFIGS / ("pseudonorm.cfg" if command == "pseudonorm" else "trig2.cfg")
    outs = []
    for k in range(2):
        p = tmp_path / f"{k}.json"
        code, stdout, _ = run(command, "--config", str(cfg), "--seed", "9", "--out", str(p), *extra)
        outs.append((code, stdout, p.read_bytes()))
    assert outs[0] == outs[1]
    json.loads(outs[0][2])


def test_lc_gen_round_trip(tmp_path):
    model_file = tmp_path / "model.cfg"
    code, _, _ = run("lc-gen", "--config", str(CONFIGS / "trig3.cfg"), "--out", str(model_file))
    assert code == 0
    again = tmp_path / "again.cfg"
    assert run("lc-gen", "--config", str(model_file), "--out", str(again))[0] == 0
    assert again.read_text() == model_file.read_text()
    assert run("verify", "--config", str(model_file))[0] == 0


def test_entropy_and_pseudonorm_verdicts(tmp_path):
    p = tmp_path / "e.json"
    code, _, _ = run("entropy", "--config", str(CONFIGS / "trig2_broken.cfg"), "--horizon", "10", "--out", str(p))
    assert code == 2 and json.loads(p.read_text())["verdict"] == "NOT_INTEGRABLE_INPUT"
    code, _, _ = run("pseudonorm", "--config", str(CONFIGS / "pseudonorm.cfg"), "--horizon", "1000", "--out", str(p))
    d = json.loads(p.read_text())
    assert code == 0 and d["below_threshold"] and d["a"] == [1.0, 1.0]
