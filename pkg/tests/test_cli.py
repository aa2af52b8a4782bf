import json

import pytest

from nearball.cli import RunConfig, main, parse_direction, parse_profile, parse_weight, read_config_file


def run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path)])


def test_ball_outputs(tmp_path, capsys):
    assert run(tmp_path, "ball", "--n", "2", "--K", "20") == 0
    assert "simple indices: 1, 6, 15" in capsys.readouterr().out
    doc = json.loads((tmp_path / "ball_n2_K20.json").read_text())
    assert doc["simple_indices"] == [1, 6, 15]
    assert (tmp_path / "ball_n2_K20_spectrum.csv").exists()


def test_repeated_runs_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "ball", "--K", "30") == 0 and run(b, "ball", "--K", "30") == 0
    for name in ("ball_n2_K30.json", "ball_n2_K30_spectrum.csv", "ball_n2_K30_gaps.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "ball", "--n", "1") == 2
    assert run(tmp_path, "nonsense") == 2
    assert run(tmp_path, "audit", "--levels", "2,4") == 2
    assert run(tmp_path, "audit", "--only", "bogus") == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 3\n")
    assert run(tmp_path, "ball", "--config", str(cfg)) == 2
    assert "usage error" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path):
    # the heat-trace tail cannot be certified at tiny t
    assert run(tmp_path, "trace", "--t", "1e-6", "--K", "50") in (2, 3)


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nK = 12\nout = from_file\n")
    assert read_config_file(cfg) == {"K": "12", "out": "from_file"}
    env_out = tmp_path / "env"
    monkeypatch.setenv("NEARBALL_OUT", str(env_out))
    assert main(["ball", "--config", str(cfg)]) == 0
    assert (env_out / "ball_n2_K12.json").exists()
    flag_out = tmp_path / "flag"
    assert main(["ball", "--config", str(cfg), "--K", "8", "--out", str(flag_out)]) == 0
    assert (flag_out / "ball_n2_K8.json").exists()


def test_parsers():
    w = parse_weight("power:12")
    assert (w.kind, w.param) == ("power", 12.0)
    p = parse_profile("2:0.1:0,3:0:0.05")
    assert p.a[2] == 0.1 and p.b[2] == 0.05
    assert parse_direction("sin3").b[2] == 1.0
    assert parse_direction("dilation").a[0] == 1.0
    with pytest.raises(ValueError):
        parse_direction("tan2")
    assert "out" not in RunConfig().hashable()


def test_trace(tmp_path, capsys):
    assert run(tmp_path, "trace", "--t", "0.5,1", "--K", "100", "--weight", "exp:1") == 0
    out = capsys.readouterr().out
    assert "t=0.5" in out and "True" in out
    assert (tmp_path / "heat_n2.csv").exists()


def test_tiny_audit_exit_codes(tmp_path):
    args = ["audit", "--family-size", "1", "--fuglede-size", "1", "--K", "3", "--levels", "1,2",
            "--only", "kohler-jobin,fuglede"]
    assert run(tmp_path / "ok", *args) == 0
    assert (tmp_path / "ok" / "audit_kohler-jobin_fuglede.json").exists()
    # with no error budget the coarse sup statistic of the disk falls outside the bound
    assert run(tmp_path / "strict", "audit", "--family-size", "0", "--fuglede-size", "0", "--K", "2",
               "--levels", "0,1", "--only", "supnorm", "--budget-scale", "0") == 1
