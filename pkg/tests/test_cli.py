import subprocess
import sys

import pytest

from stostokes.cli import build_parser, config_from_args, main, read_config_file
from stostokes.experiment import ConfigError

FAST = ["--n", "4", "--samples", "3", "--seed", "5"]


def _cfg(argv):
    return config_from_args(build_parser().parse_args(argv))


def test_desk_preset():
    cfg = _cfg(["--test", "time", "--desk"])
    assert (cfg.n, cfg.samples, cfg.M_list) == (20, 100, (64, 128, 256, 512))


def test_full_presets():
    cfg = _cfg(["--test", "time"])
    assert (cfg.n, cfg.samples, cfg.M_list, cfg.fine_steps) == (40, 300, (64, 128, 256, 512, 1024), 2048)
    assert cfg.alpha == 0.5


def test_flags_override():
    cfg = _cfg(["--test", "time", "--klist", "1/8,1/16", "--alpha", "1/4", "--pressure-alignment", "average"] + FAST)
    assert cfg.M_list == (8, 16) and cfg.alpha == 0.25 and cfg.n == 4 and cfg.seed == 5
    assert cfg.pressure_alignment == "average"


def test_space_flags():
    cfg = _cfg(["--test", "space", "--n", "4,8", "--klist", "1/32"])
    assert cfg.n_list == (4, 8) and cfg.M == 32


def test_config_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("kind = space\nn_list = 2, 4\nM = 16\nsamples = 2  # small\nalpha = 1/2\ncheck = yes\n")
    vals = read_config_file(f)
    assert vals == {"kind": "space", "n_list": (2, 4), "M": 16, "samples": 2, "alpha": 0.5, "check": True}
    cfg = _cfg(["--config", str(f), "--samples", "7"])
    assert cfg.kind == "space" and cfg.samples == 7 and cfg.n_list == (2, 4)


def test_config_file_unknown_key(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("nonsense = 3\n")
    with pytest.raises(ConfigError):
        read_config_file(f)


@pytest.mark.parametrize(
    "argv",
    [
        ["--test", "time", "--klist", "1/3"],
        ["--test", "time", "--klist", "abc"],
        ["--test", "time", "--samples", "0"],
        ["--test", "det", "--alpha", "0.5"],
    ],
)
def test_bad_config_exit_code(argv, capsys):
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_time_run_writes_outputs(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["--test", "time", "--klist", "1/8,1/16", "--out", str(out)] + FAST) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("resolution,err_l2h1,order_l2h1")
    assert len(lines) == 3
    assert (tmp_path / "t.plot.csv").exists() and (tmp_path / "t.meta.json").exists()


def test_bitwise_repeat_and_parallel(tmp_path):
    args = ["--test", "time", "--klist", "1/8,1/16", "--block-size", "1"] + FAST
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv"), "--workers", "2"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_stdout_and_module_entry():
    r = subprocess.run(
        [sys.executable, "-m", "stostokes", "--test", "em", "--klist", "1/8"] + FAST,
        capture_output=True, text=True, check=True,
    )
    assert r.stdout.splitlines()[0].startswith("resolution,mil_err_l2h1")
    assert len(r.stdout.splitlines()) == 2


def test_single_stdout(capsys):
    assert main(["--test", "single", "--n", "2", "--klist", "1/4"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "t,u_l2,u_h1,p_l2,time_averaged_p_l2" and len(out) == 5
