import json

import numpy as np
import pytest

from phi4lab import io
from phi4lab.cli import main


def _run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def exact_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("exact") / "nested" / "out"
    assert _run("gibbs", "--exact", "--N", 2, "--lam", 0, "--samples", 200, "--seed", 5, "--out", d) == 0
    return d


def test_gibbs_exact_outputs(exact_dir):
    for name in ("phi_chain000.fld", "moments.csv", "snapshots.json", "config.txt", "manifest.json"):
        assert (exact_dir / name).exists(), name
    meta = io.read_json(exact_dir / "snapshots.json")
    assert meta["sampler"] == "exact" and meta["N"] == 2
    assert io.read_stack(exact_dir / "phi_chain000.fld").shape == (200, 4, 4, 4)


def test_repeat_runs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert _run("gibbs", "--N", 2, "--lam", 1, "--samples", 20, "--burn-sweeps", 30, "--seed", 3, "--out", d) == 0
        outs.append(d)
    for name in ("moments.csv", "metropolis.csv", "phi_chain000.fld", "snapshots.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_langevin_decomposed_run(tmp_path):
    args = ["langevin", "--N", 2, "--T", 0.2, "--dt", 0.01, "--burn-in", 0.2, "--snapshot-every", 5, "--seed", 1]
    assert _run(*args, "--basket", "--out", tmp_path / "a") == 0
    assert _run(*args, "--out", tmp_path / "b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "energy_chain000.csv").read_bytes() == (b / "energy_chain000.csv").read_bytes()
    rows = io.read_csv(a / "energy_chain000.csv")
    assert len(rows) == 21 and "ratio" in rows[0] and "phi2" in rows[0]
    y = io.read_csv(a / "y_chain000.csv")[0]
    assert float(y["contraction"]) < 1
    assert io.read_basket_meta(a / "basket_chain000")["N"] == 2
    assert io.read_stack(a / "phi_chain000.fld").shape == (5, 4, 4, 4)


def test_langevin_without_decomposition(tmp_path):
    assert _run("langevin", "--N", 2, "--T", 0.1, "--dt", 0.01, "--burn-in", 0, "--snapshot-every", 2, "--no-decompose", "--out", tmp_path) == 0
    assert io.read_stack(tmp_path / "X_chain000.fld").shape == (5, 4, 4, 4)


def test_observe_writes_tables(exact_dir, tmp_path):
    assert _run("observe", "--snapshots", exact_dir, "--out", tmp_path) == 0
    for name in ("two_point.csv", "four_point.csv", "rp.csv", "ibp.csv", "ds.csv", "translation.csv", "summary.json"):
        assert (tmp_path / name).exists(), name
    two = io.read_csv(tmp_path / "two_point.csv")
    assert all(np.isfinite(float(r["z"])) for r in two)
    assert json.loads((tmp_path / "summary.json").read_text())


def test_check_identities(tmp_path):
    assert _run("check", "identities", "--out", tmp_path) == 0
    rows = io.read_csv(tmp_path / "identities.csv")
    assert all(r["passed"] == "true" for r in rows)


@pytest.mark.parametrize(
    "args",
    [
        ["gibbs", "--lamda", 1],
        ["gibbs", "--M", 1.3, "--N", 2],
        ["gibbs", "--exact", "--lam", 1, "--N", 2],
        ["langevin", "--gamma", 1.5],
        ["no-such-command"],
    ],
)
def test_configuration_errors_exit_2(args, tmp_path):
    assert _run(*args, "--out", tmp_path) == 2


def test_config_file_typo_is_reported(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("physics.lamda = 1\n")
    assert _run("gibbs", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "physics.lambda" in capsys.readouterr().err


def test_help_exits_cleanly(capsys):
    assert _run("--help") == 0
    assert "langevin" in capsys.readouterr().out
