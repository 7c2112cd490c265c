"""Plain-text run configuration: ``section.key = value`` lines.

``[section]`` headers are accepted as shorthand for a dotted prefix; ``#``
starts a comment.  Unknown keys are errors that name the nearest known key.
"""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ._validation import ConstraintError
from .besov import build_partition
from .lattice import Lattice


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _opt_int(s: str) -> int | None:
    return None if s.lower() in ("none", "auto", "") else int(s)


def _opt_float(s: str) -> float | None:
    return None if s.lower() in ("none", "auto", "") else float(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(",", " ").split())


def _str_list(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(";") if v.strip())


# key -> (attribute, parser); attribute names the RunConfig field.
SCHEMA: dict[str, tuple[str, Any]] = {
    "lattice.N": ("N", int),
    "lattice.M": ("M", float),
    "physics.m2": ("m2", float),
    "physics.lambda": ("lam", float),
    "physics.gamma": ("gamma", float),
    "dynamics.dt": ("dt", _opt_float),
    "dynamics.T": ("T", float),
    "dynamics.burn_in": ("burn_in", float),
    "analysis.kappa": ("kappa", float),
    "analysis.sigma": ("sigma", float),
    "analysis.iota": ("iota", float),
    "analysis.weight_h": ("weight_h", float),
    "analysis.weight_nu": ("weight_nu", float),
    "analysis.J": ("J", _opt_int),
    "analysis.C_delta": ("C_delta", float),
    "sampling.seeds": ("seeds", _int_list),
    "sampling.chains": ("chains", int),
    "sampling.thin": ("thin", int),
    "sampling.samples": ("samples", int),
    "sampling.burn_sweeps": ("burn_sweeps", int),
    "io.out": ("out", str),
    "io.snapshot_every": ("snapshot_every", int),
    "io.decompose": ("decompose", _bool),
    "observe.j": ("j", _opt_int),
    "observe.cylinder": ("cylinder", str),
    "observe.test_functions": ("test_functions", _str_list),
}
_ATTR_TO_KEY = {attr: key for key, (attr, _) in SCHEMA.items()}


@dataclass(frozen=True)
class RunConfig:
    N: int = 3
    M: float = 1.0
    m2: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    dt: float | None = None
    T: float = 1.0
    burn_in: float = 2.0
    kappa: float = 0.05
    sigma: float = 0.1
    iota: float = 0.5
    weight_h: float = 1.0
    weight_nu: float = 3.0
    J: int | None = None
    C_delta: float = 4.0
    seeds: tuple[int, ...] = (0,)
    chains: int = 1
    thin: int = 10
    samples: int = 1000
    burn_sweeps: int = 500
    out: str = "phi4_out"
    snapshot_every: int = 10
    decompose: bool = True
    j: int | None = None
    cylinder: str = "p0"
    test_functions: tuple[str, ...] = ("gauss:0.125,0,0,0.125",)

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.N, self.M)

    @property
    def time_step(self) -> float:
        from .stochastic import default_dt

        return self.dt if self.dt is not None else default_dt(self.lattice, self.m2)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return validate(replace(self, **kw))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                sep = "; " if f.name == "test_functions" else ", "
                s = sep.join(str(x) for x in v)
            elif v is None:
                s = "auto"
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{_ATTR_TO_KEY[f.name]} = {s}")
        return "\n".join(lines) + "\n"


def validate(cfg: RunConfig) -> RunConfig:
    """Re-check every module precondition; errors name the violated invariant."""
    try:
        lat = cfg.lattice
    except ConstraintError as exc:
        raise ConfigError(f"lattice: {exc}") from exc
    checks = [
        (math.isfinite(cfg.m2), "physics.m2 must be finite"),
        (cfg.lam >= 0, "physics.lambda must be >= 0"),
        (0 < cfg.gamma <= 1, "physics.gamma must lie in (0, 1]"),
        (cfg.dt is None or cfg.dt > 0, "dynamics.dt must be > 0"),
        (cfg.T > 0, "dynamics.T must be > 0"),
        (cfg.burn_in >= 0, "dynamics.burn_in must be >= 0"),
        (0 < cfg.kappa < 0.125, "analysis.kappa must lie in (0, 1/8)"),
        (cfg.sigma > 0, "analysis.sigma must be > 0"),
        (0 < cfg.iota < 1, "analysis.iota must lie in (0, 1)"),
        (cfg.weight_h > 0 and cfg.weight_nu > 0, "analysis.weight_h and weight_nu must be > 0"),
        (4 * cfg.weight_nu * cfg.iota > 3, "rho^iota must lie in L^4: need 4 nu iota > 3"),
        (cfg.C_delta > 0, "analysis.C_delta must be > 0"),
        (len(cfg.seeds) >= 1 and all(s >= 0 for s in cfg.seeds), "sampling.seeds must be non-negative integers"),
        (cfg.chains >= 1, "sampling.chains must be >= 1"),
        (cfg.thin >= 1, "sampling.thin must be >= 1"),
        (cfg.samples >= 2, "sampling.samples must be >= 2"),
        (cfg.burn_sweeps >= 0, "sampling.burn_sweeps must be >= 0"),
        (cfg.snapshot_every >= 0, "io.snapshot_every must be >= 0"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    try:
        build_partition(lat, cfg.J)
    except ConstraintError as exc:
        raise ConfigError(f"analysis.J: {exc}") from exc
    return cfg


def parse_text(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, Any] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        if key not in SCHEMA:
            near = difflib.get_close_matches(key, SCHEMA, n=1, cutoff=0.5)
            if not near:
                bare = key.rsplit(".", 1)[-1]
                near = [k for k in SCHEMA if k.rsplit(".", 1)[-1] in difflib.get_close_matches(bare, [s.rsplit(".", 1)[-1] for s in SCHEMA], n=1)]
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}{hint}")
        attr, parser = SCHEMA[key]
        try:
            values[attr] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {val!r} ({exc})") from exc
    return validate(RunConfig(**values))


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_text(p.read_text(), str(p))
