"""Command line entry point: ``phi4lab langevin | gibbs | observe | check ...``.

Exit codes: 0 pass, 1 a check failed, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import functools
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from ._validation import ConstraintError, NumericalAbort
from .config import ConfigError, RunConfig, parse_config, validate
from .lattice import Field, Lattice, Weight, set_threads

log = logging.getLogger("phi4lab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


def _setup(threads: int | None) -> None:
    if threads is None:
        env = os.environ.get("PHI4_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    set_threads(threads)


def _load(config: str | None, **overrides) -> RunConfig:
    cfg = parse_config(config) if config else validate(RunConfig())
    if overrides.get("seeds") is not None:
        overrides["seeds"] = (int(overrides["seeds"]),)
    return cfg.with_overrides(**overrides)


def _outdir(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        p.mkdir(parents=True)
        log.info("created output directory %s", p)
    return p


def common(fn):
    """Options shared by every subcommand."""

    @click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="key = value config file")
    @click.option("--seed", type=int, default=None, help="master seed (overrides sampling.seeds)")
    @click.option("--threads", type=int, default=None, help="FFT worker threads (default: PHI4_THREADS or 1)")
    @click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory")
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        return fn(*args, **kw)

    return wrapper


def physics_options(fn):
    @click.option("--N", "N", type=int, default=None)
    @click.option("--M", "M", type=float, default=None)
    @click.option("--m2", type=float, default=None)
    @click.option("--lam", "--lambda", "lam", type=float, default=None)
    @click.option("--gamma", type=float, default=None, help="fractional exponent in (0, 1]")
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        return fn(*args, **kw)

    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def cli(verbose: bool) -> None:
    """Lattice Phi^4_3 sampler, stochastic objects and calibration checks."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


# langevin


@cli.command()
@common
@physics_options
@click.option("--dt", type=float, default=None)
@click.option("--T", "T", type=float, default=None)
@click.option("--burn-in", type=float, default=None)
@click.option("--chains", type=int, default=None)
@click.option("--thin", type=int, default=None)
@click.option("--snapshot-every", type=int, default=None)
@click.option("--decompose/--no-decompose", default=None, help="also build the basket, Y and the energy report")
@click.option("--basket", is_flag=True, help="write basket snapshots (needs --decompose)")
def langevin(config, seed, threads, out, N, M, m2, lam, gamma, dt, T, burn_in, chains, thin, snapshot_every, decompose, basket):
    """Run the renormalized Langevin chain."""
    from .dynamics import Couplings, energy_report, init_state, run_decomposed, step_langevin
    from .besov import build_partition
    from .fractional import check_gamma
    from . import io

    _setup(threads)
    cfg = _load(config, N=N, M=M, m2=m2, lam=lam, gamma=gamma, dt=dt, T=T, burn_in=burn_in, chains=chains,
                thin=thin, snapshot_every=snapshot_every, decompose=decompose, out=out, seeds=seed)
    check_gamma(cfg.gamma)
    t0 = time.time()
    lat = cfg.lattice
    d = _outdir(cfg.out)
    part = build_partition(lat, cfg.J)
    cp = Couplings(lat, cfg.m2, cfg.lam, cfg.gamma)
    h = cfg.time_step
    weight = Weight(cfg.weight_h, cfg.weight_nu)
    every = cfg.snapshot_every or cfg.thin
    idx = 0
    moments = []
    for s in cfg.seeds:
        for c in range(cfg.chains):
            tag = f"chain{idx:03d}"
            if cfg.decompose:
                run = run_decomposed(cp, h, cfg.T, cfg.burn_in, s, c, part, weight, cfg.sigma, cfg.kappa, cfg.C_delta)
                rep = energy_report(run, weight, cfg.kappa, cfg.iota, part=part)
                cols = list(rep)
                rows = [{k: rep[k][i] for k in cols} for i in range(len(rep["t"]))]
                for r, p2 in zip(rows, (run.phi**2).mean(axis=(1, 2, 3))):
                    r["phi2"] = p2
                io.write_csv(d / f"energy_{tag}.csv", rows, cols + ["phi2"])
                io.write_csv(
                    d / f"y_{tag}.csv",
                    [{"L": run.y.L, "contraction": run.y.contraction, "iterations": run.y.iterations,
                      "residual": run.y.residual, "basket_norm": run.basket.norm, "substeps": run.substeps}],
                )
                phis, Xs = run.phi[::every], run.basket.X[::every]
                if basket:
                    io.write_basket(d / f"basket_{tag}", run.basket)
            else:
                state = init_state(cp, s, c)
                n_burn = int(round(cfg.burn_in / h))
                for _ in range(n_burn):
                    step_langevin(state, h)
                n_run = int(round(cfg.T / h))
                phis, Xs = [], []
                for i in range(n_run):
                    step_langevin(state, h)
                    if (i + 1) % every == 0:
                        phis.append(state.phi)
                        Xs.append(state.X)
                phis, Xs = np.asarray(phis), np.asarray(Xs)
            io.write_fields(d / f"phi_{tag}.fld", (Field(lat, v) for v in phis))
            io.write_fields(d / f"X_{tag}.fld", (Field(lat, v) for v in Xs))
            moments.append(_moment_row(tag, s, c, phis))
            idx += 1
    io.write_csv(d / "moments.csv", moments)
    _write_meta(d, cfg, cp.a, cp.b, "langevin", dt=h)
    io.write_manifest(d, cfg.to_text(), "langevin", cfg.seeds, time.time() - t0)
    click.echo(f"langevin: wrote {idx} chain(s) to {d}")


def _moment_row(tag: str, seed: int, chain: int, samples: np.ndarray) -> dict:
    from .observables import moment_estimates

    row = {"chain": tag, "seed": seed, "index": chain, "n": len(samples)}
    if len(samples) >= 2:
        est = moment_estimates(samples)
        for k, e in est.items():
            row[k] = e.value
            row[f"{k}_err"] = e.stderr
    return row


def _write_meta(d: Path, cfg: RunConfig, a: float, b: float, sampler: str, **extra) -> None:
    from . import io

    meta = {"N": cfg.N, "M": cfg.M, "m2": cfg.m2, "lambda": cfg.lam, "gamma": cfg.gamma, "a": a, "b": b,
            "sampler": sampler, "J": cfg.J}
    meta.update(extra)
    io.write_json(d / "snapshots.json", meta)
    (d / "config.txt").write_text(cfg.to_text())


# gibbs


@cli.command()
@common
@physics_options
@click.option("--samples", type=int, default=None)
@click.option("--burn-sweeps", type=int, default=None)
@click.option("--thin", type=int, default=None)
@click.option("--chains", type=int, default=None)
@click.option("--exact", is_flag=True, help="exact Gaussian draws (lambda = 0 only)")
def gibbs(config, seed, threads, out, N, M, m2, lam, gamma, samples, burn_sweeps, thin, chains, exact):
    """Sample the lattice Gibbs measure directly (Metropolis or exact Gaussian)."""
    from .gibbs import GibbsSpec, gaussian_draws, run_metropolis
    from .fractional import check_gamma
    from . import io

    _setup(threads)
    cfg = _load(config, N=N, M=M, m2=m2, lam=lam, gamma=gamma, samples=samples, burn_sweeps=burn_sweeps,
                thin=thin, chains=chains, out=out, seeds=seed)
    check_gamma(cfg.gamma)
    t0 = time.time()
    lat = cfg.lattice
    d = _outdir(cfg.out)
    spec = GibbsSpec(lat, cfg.lam, cfg.m2, gamma=cfg.gamma)
    moments, tuning = [], []
    idx = 0
    for s in cfg.seeds:
        for c in range(cfg.chains):
            tag = f"chain{idx:03d}"
            if exact:
                S = gaussian_draws(spec, cfg.samples, seed=s * 1_000_003 + c)
            else:
                r = run_metropolis(spec, cfg.samples, cfg.burn_sweeps, cfg.thin, s, c)
                S = r.samples
                tuning.append({"chain": tag, "step_sigma": r.step_sigma, "accept_rate": r.accept_rate})
            io.write_fields(d / f"phi_{tag}.fld", (Field(lat, v) for v in S))
            moments.append(_moment_row(tag, s, c, S))
            idx += 1
    io.write_csv(d / "moments.csv", moments)
    if tuning:
        io.write_csv(d / "metropolis.csv", tuning)
    _write_meta(d, cfg, spec.a, spec.b, "exact" if exact else "metropolis")
    io.write_manifest(d, cfg.to_text(), "gibbs", cfg.seeds, time.time() - t0)
    click.echo(f"gibbs: wrote {idx} chain(s) to {d}")


# observe


@cli.command()
@common
@click.option("--snapshots", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--gamma", type=float, default=None)
@click.option("--strict", is_flag=True, help="exit 1 when more than 5% of identity residuals have |z| >= 3")
def observe(config, seed, threads, out, snapshots, gamma, strict):
    """Estimate observables and identity residuals from a snapshot directory."""
    from . import io
    from . import observables as ob
    from .besov import build_partition
    from .gibbs import GibbsSpec

    _setup(threads)
    src = Path(snapshots)
    meta = io.read_json(src / "snapshots.json")
    base = parse_config(src / "config.txt") if (src / "config.txt").exists() else validate(RunConfig())
    if config:
        base = parse_config(config)
    g = meta["gamma"] if gamma is None else gamma
    cfg = base.with_overrides(out=out or str(src / "observe"), gamma=g)
    t0 = time.time()
    lat = Lattice(int(meta["N"]), float(meta["M"]))
    phi = np.concatenate([io.read_stack(p) for p in io.iter_chain_files(src, "phi")])
    xfiles = list(io.iter_chain_files(src, "X"))
    X = np.concatenate([io.read_stack(p) for p in xfiles]) if xfiles else None
    d = _outdir(cfg.out)
    part = build_partition(lat, meta.get("J"))
    spec = GibbsSpec(lat, float(meta["lambda"]), float(meta["m2"]), gamma=float(g))
    cols = ["label", "value", "stderr", "n", "z"]
    summary: dict = {"n_samples": int(len(phi)), "sampler": meta.get("sampler")}

    offsets = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 1, 0), (0, 0, 1)]
    free = ob.green_two_point(lat, spec.m2, offsets, spec.gamma) if spec.m2 > 0 else np.zeros(len(offsets))
    two = [ob.ObservableEstimate(e.value, e.stderr, e.n_samples, e.label, float(f))
           for e, f in zip(ob.schwinger_two_point(phi, offsets), free)]
    io.write_csv(d / "two_point.csv", [e.row() for e in two], cols)

    js = [cfg.j] if cfg.j is not None else list(part.js)
    four = [ob.connected_four_point_smeared(part, phi, j) for j in js]
    io.write_csv(d / "four_point.csv", [e.row() for e in four], cols)

    rp = ob.rp_gram(lat, phi, ob.rp_test_functions(lat, 4, max(spec.m2, 1.0), spec.gamma), seed=cfg.seeds[0])
    io.write_csv(d / "rp.csv", [{"label": "rp_min_eig", "value": rp.min_eig, "stderr": rp.sigma, "n": len(phi),
                                 "z": max(0.0, -rp.min_eig) / rp.sigma if rp.sigma > 0 else 0.0}], cols)

    F = ob.Cylinder.from_descriptions(lat, cfg.cylinder, cfg.test_functions)
    rng = np.random.default_rng(cfg.seeds[0])
    sites = [tuple(int(v) for v in rng.integers(0, lat.n_side, 3)) for _ in range(20)]
    ibp = ob.ibp_residual(spec, phi, F, sites)
    io.write_csv(d / "ibp.csv", [e.row() for e in ibp], cols)

    ds = [ob.ds_two_point_residual(spec, phi, (0, 0, 0), (0, 0, 0)),
          ob.ds_two_point_residual(spec, phi, (1, 0, 0), (0, 0, 0))]
    io.write_csv(d / "ds.csv", [e.row() for e in ds], cols)

    f = F.fns[0]
    tr = ob.translation_invariance_residual(lat, phi, f, [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
    io.write_csv(d / "translation.csv", [e.row() for e in tr], cols)

    star = ob.star_norm(part, phi, Weight(cfg.weight_h, cfg.weight_nu), cfg.kappa)
    em = [ob.exp_moment(part, phi, b, 0.1, star=star) for b in (0.0, 0.05, 0.1)]
    io.write_csv(d / "exp_moment.csv", [dict(e.estimate.row(), stable=e.stable) for e in em], cols + ["stable"])

    if spec.lam == 0 or X is not None:
        Xp = X if (X is not None and len(X) == len(phi)) else None
        if spec.lam != 0 and Xp is None:
            cube = []
        else:
            cube = ob.renormalized_cube_ope(part, phi, spec.m2, spec.lam, list(part.js), F=F, X_samples=Xp,
                                            gamma=spec.gamma)
        io.write_csv(d / "cube.csv", [e.row() for e in cube], cols)

    identity = ibp + ds + tr
    frac = float(np.mean([e.z >= 3 for e in identity]))
    summary.update({
        "identity_tests": len(identity),
        "identity_fraction_z_ge_3": frac,
        "identity_max_z": float(max(e.z for e in identity)),
        "rp_min_eig": rp.min_eig,
        "rp_sigma": rp.sigma,
        "rp_passes": rp.passes,
        "four_point": {e.label: [e.value, e.stderr] for e in four},
    })
    io.write_json(d / "summary.json", summary)
    io.write_manifest(d, cfg.to_text(), "observe", cfg.seeds, time.time() - t0, {"snapshots": str(src)})
    click.echo(f"observe: {len(phi)} samples, identity |z|>=3 fraction {frac:.3f}, RP min eig {rp.min_eig:.3g}")
    if strict and (frac > 0.05 or not rp.passes):
        raise CheckFailed("identity residuals or RP check outside tolerance")


# check


@cli.group()
def check() -> None:
    """Calibration and identity suites."""


@check.command("besov")
@common
@click.option("--levels", default="3,4,5", help="mesh exponents N (eps = 2^-N)")
@click.option("--fields", "n_fields", type=int, default=100)
def check_besov(config, seed, threads, out, levels, n_fields):
    """Exact identities and calibrated Besov inequality constants."""
    from . import calibration, io

    _setup(threads)
    cfg = _load(config, out=out)
    d = _outdir(cfg.out)
    lv = tuple(int(v) for v in levels.split(","))
    ex = calibration.exact_identities(N=lv[0], seed=seed or 0)
    ex_rows = [{"identity": k, "rel_error": v, "tolerance": calibration.EXACT_TOLERANCES[k],
                "passed": v <= calibration.EXACT_TOLERANCES[k]} for k, v in ex.items()]
    io.write_csv(d / "exact_identities.csv", ex_rows)
    res = calibration.run_suites(lv, n_fields, seed or 0)
    rows = [r for s in res for r in s.rows()]
    io.write_csv(d / "besov_constants.csv", rows)
    ok = all(r["passed"] for r in ex_rows) and all(s.passed for s in res)
    for s in res:
        click.echo(f"{s.name:28s} {'pass' if s.passed else 'FAIL'}  " + " ".join(f"{c:.4g}" for c in s.constants.values()))
    if not ok:
        raise CheckFailed("besov suite failed")


@check.command("stochastic")
@common
@click.option("--draws", type=int, default=10000)
def check_stochastic(config, seed, threads, out, draws):
    """Counterterms a, b against Monte Carlo and their scaling in N."""
    from . import io
    from .besov import build_partition
    from .observables import batch_means, resonant_wick_sample
    from .stochastic import compute_a, compute_b, sample_stationary_draws

    _setup(threads)
    cfg = _load(config, out=out)
    d = _outdir(cfg.out)
    s = seed or 0
    rows = []
    a = {N: compute_a(Lattice(N, 1.0), cfg.m2) for N in (3, 4, 5)}
    b = {N: compute_b(Lattice(N, 1.0), cfg.m2) for N in (3, 4, 5, 6)}
    lat = Lattice(3, 1.0)
    X = sample_stationary_draws(lat, cfg.m2, draws, seed=s)
    ma, ea = batch_means((X**2).mean(axis=(1, 2, 3)))
    part = build_partition(lat)
    mb, eb = batch_means(np.concatenate([resonant_wick_sample(part, X[i:i + 500], a[3], cfg.m2)
                                         for i in range(0, draws, 500)]))
    ratio = a[5] / a[4]
    diffs = [b[N + 1] - b[N] for N in (3, 4, 5)]
    spread = max(diffs) / min(diffs) - 1.0
    rows += [
        {"check": "a_mc", "value": float(ma), "reference": a[3], "stderr": float(ea),
         "passed": abs(ma - a[3]) < 3 * ea},
        {"check": "b_mc", "value": float(mb), "reference": b[3], "stderr": float(eb),
         "passed": abs(mb - b[3]) < 3 * eb},
        {"check": "a_ratio_N5_N4", "value": ratio, "reference": 2.0, "stderr": 0.0, "passed": 1.6 <= ratio <= 2.4},
        {"check": "b_difference_spread", "value": spread, "reference": 0.25, "stderr": 0.0,
         "passed": abs(spread) <= 0.25},
    ]
    io.write_csv(d / "stochastic.csv", rows)
    for r in rows:
        click.echo(f"{r['check']:22s} {'pass' if r['passed'] else 'FAIL'}  {r['value']:.6g} (ref {r['reference']:.6g})")
    if not all(r["passed"] for r in rows):
        raise CheckFailed("stochastic suite failed")


@check.command("identities")
@common
def check_identities(config, seed, threads, out):
    """Lattice-exact identities: Fourier, paraproducts, Gaussian IBP and Dyson-Schwinger, detailed balance."""
    from . import calibration, io
    from .gibbs import GibbsSpec, detailed_balance_error
    from .observables import ds_gaussian_residual, ibp_linear_gaussian_residual, test_function

    _setup(threads)
    cfg = _load(config, out=out)
    d = _outdir(cfg.out)
    lat = cfg.lattice
    errs = dict(calibration.exact_identities(N=cfg.N, M=cfg.M, seed=seed or 0))
    tol = dict(calibration.EXACT_TOLERANCES)
    m2 = cfg.m2 if cfg.m2 > 0 else 1.0
    spec0 = GibbsSpec(lat, 0.0, m2, gamma=cfg.gamma)
    scale = 1.0 / lat.cell
    errs["ds_gaussian"] = float(np.abs(ds_gaussian_residual(lat, m2, cfg.gamma)).max() / scale)
    f = test_function(lat, "gauss:0.1,0,0,0.2")
    errs["ibp_gaussian"] = float(np.abs(ibp_linear_gaussian_residual(spec0, f)).max() / np.abs(f).max())
    errs["detailed_balance"] = detailed_balance_error(GibbsSpec(Lattice(1, 1.0), 1.0, 1.0))
    tol.update({"ds_gaussian": 1e-10, "ibp_gaussian": 1e-10, "detailed_balance": 1e-10})
    rows = [{"identity": k, "rel_error": v, "tolerance": tol[k], "passed": v <= tol[k]} for k, v in errs.items()]
    io.write_csv(d / "identities.csv", rows)
    for r in rows:
        click.echo(f"{r['identity']:22s} {'pass' if r['passed'] else 'FAIL'}  {r['rel_error']:.3g}")
    if not all(r["passed"] for r in rows):
        raise CheckFailed("identity suite failed")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except CheckFailed as exc:
        click.echo(f"FAILED: {exc}", err=True)
        return EXIT_FAIL
    except (ConfigError, ConstraintError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        click.echo(f"numerical abort: {exc}", err=True)
        return EXIT_ABORT
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
