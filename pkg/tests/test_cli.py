import json
import os

import pytest

from fedgradmp.cli import (
    ExperimentConfig,
    load_config,
    main,
    parse_config_text,
    parse_sweep,
    run_experiment,
    run_file_name,
    serialize,
)
from fedgradmp.errors import ConfigError

MINIMAL = """
[synth]
N = 2
per_client = 12
n = 8
sparsity = 2
[local]
K = 2
tau = 2
[federation]
T = 3
[experiment]
output_dir = {out}
"""


def _write(tmp_path, text):
    p = tmp_path / "exp.ini"
    p.write_text(text)
    return p


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert parse_config_text(serialize(cfg)) == cfg
    assert parse_config_text(serialize(cfg, comments=True)) == cfg


def test_custom_round_trip():
    cfg = parse_config_text(MINIMAL.format(out="x") + "sweep = K: 3, 6\nrepeat_seeds = 1, 2\n")
    assert cfg.sweep == ("K", [3, 6])
    assert cfg.experiment.repeat_seeds == [1, 2]
    assert parse_config_text(serialize(cfg)) == cfg


def test_parse_sweep():
    assert parse_sweep("") is None
    assert parse_sweep("alpha: 0.2, 2.5") == ("alpha", [0.2, 2.5])
    with pytest.raises(ConfigError):
        parse_sweep("tau: 1, 2")
    with pytest.raises(ConfigError):
        parse_sweep("K 3")


@pytest.mark.parametrize("text,match", [
    ("[bogus]\na = 1\n", "unknown section"),
    ("[synth]\nfoo = 1\n", "synth.foo"),
    ("[synth]\nN = many\n", "synth.N"),
    ("[local]\ntau = 300\n", "local.tau"),
    ("[federation]\nL = 99\n", "federation.L"),
    ("[local]\nsolver = magic\n", "local.solver"),
    ("[theory]\nmode = fast\n", "theory.mode"),
])
def test_invalid_configs_name_the_field(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_run_file_names():
    assert run_file_name(None, None, 3) == "run_seed=3.csv"
    assert run_file_name("K", 6, 0) == "run_K=6_seed=0.csv"


def test_minimal_run_outputs(tmp_path):
    out = tmp_path / "out"
    cfg = load_config(_write(tmp_path, MINIMAL.format(out=out)))
    run_experiment(cfg, log=lambda *_: None)
    rows = (out / "run_seed=0.csv").read_text().splitlines()
    assert len(rows) == 4
    assert (out / "summary.csv").exists()


def test_rerun_is_byte_identical_and_needs_force(tmp_path):
    out = tmp_path / "out"
    p = _write(tmp_path, MINIMAL.format(out=out))
    assert main(["run", str(p)]) == 0
    first = (out / "run_seed=0.csv").read_bytes()
    assert main(["run", str(p)]) == 3
    assert main(["run", str(p), "--force", "--threads", "2"]) == 0
    assert (out / "run_seed=0.csv").read_bytes() == first


def test_sweep_and_seeds_produce_one_csv_each(tmp_path):
    out = tmp_path / "out"
    text = MINIMAL.format(out=out) + "sweep = K: 1, 2\nrepeat_seeds = 0, 1\n"
    run_experiment(parse_config_text(text), log=lambda *_: None)
    names = sorted(os.listdir(out))
    assert names == sorted(["run_K=1_seed=0.csv", "run_K=1_seed=1.csv", "run_K=2_seed=0.csv",
                            "run_K=2_seed=1.csv", "summary.csv"])


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FEDGRADMP_OUTPUT_DIR", str(tmp_path / "env"))
    run_experiment(parse_config_text(MINIMAL.format(out=tmp_path / "cfg")), log=lambda *_: None)
    assert (tmp_path / "env" / "run_seed=0.csv").exists()
    assert not (tmp_path / "cfg").exists()


def test_emit_theory(tmp_path):
    out = tmp_path / "out"
    text = MINIMAL.format(out=out) + "emit_theory = true\n[theory]\ntheta = 64\n"
    run_experiment(parse_config_text(text), log=lambda *_: None)
    rates = json.loads((out / "rates.json").read_text())
    assert len(rates) == 1
    assert "kappa" in rates[0] or "error" in rates[0]


def test_config_error_exit_code(tmp_path, capsys):
    p = _write(tmp_path, "[synth]\nN = -1\n")
    assert main(["validate", str(p)]) == 2
    assert "config error" in capsys.readouterr().err


def test_print_defaults(capsys):
    assert main(["print-defaults"]) == 0
    text = capsys.readouterr().out
    assert "[synth]" in text and "# " in text
    assert parse_config_text(text) == ExperimentConfig()
