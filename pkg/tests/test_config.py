import pytest

from phi4lab.config import ConfigError, RunConfig, parse_config, parse_text


def test_defaults_validate():
    cfg = parse_text("")
    assert cfg == RunConfig()


def test_round_trip():
    cfg = RunConfig(N=4, M=2.0, lam=0.5, seeds=(3, 4), dt=0.001, J=2, test_functions=("delta:0,0,0", "gauss:0,0,0,0.1"))
    assert parse_text(cfg.to_text()) == cfg


def test_sections_and_comments():
    cfg = parse_text("[physics]\nlambda = 2.5  # strong\nm2 = -1\n[lattice]\nN = 2\n")
    assert (cfg.lam, cfg.m2, cfg.N) == (2.5, -1.0, 2)


def test_unknown_key_suggests_nearest():
    with pytest.raises(ConfigError, match="physics.lambda"):
        parse_text("physics.lamda = 1\n")
    with pytest.raises(ConfigError, match="physics.lambda"):
        parse_text("[physics]\nlamda = 1\n")


@pytest.mark.parametrize(
    "text,needle",
    [
        ("lattice.M = 1.3", "lattice"),
        ("physics.lambda = -1", "lambda"),
        ("physics.gamma = 0", "gamma"),
        ("analysis.kappa = 0.2", "kappa"),
        ("analysis.weight_nu = 1\nanalysis.iota = 0.5", "4 nu iota"),
        ("analysis.J = 9", "analysis.J"),
        ("lattice.N = x", "bad value"),
        ("just some words", "expected"),
        ("io.decompose = maybe", "bad value"),
    ],
)
def test_invalid_configs(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_text(text)


def test_overrides_and_files(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("lattice.N = 2\n")
    cfg = parse_config(p)
    assert cfg.with_overrides(N=None, lam=0.0).lam == 0.0
    with pytest.raises(ConfigError):
        cfg.with_overrides(T=-1.0)
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.cfg")
    assert cfg.time_step > 0
