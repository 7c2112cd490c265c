"""Binary field snapshots, JSON sidecars, CSV tables and run manifests.

Snapshot record: a 32-byte header (magic ``PHI4FLD1``, u32 N, f64 M,
u8 domain, zero padding) followed by little-endian f64 values with the first
lattice index varying fastest.  Fourier records store interleaved (re, im)
pairs.  A file may hold several records back to back.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import struct
import time
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import __version__
from ._validation import ConstraintError
from .lattice import Field, Lattice

MAGIC = b"PHI4FLD1"
HEADER = struct.Struct("<8sIdB11x")
DOMAINS = {"physical": 0, "fourier": 1}
_DOMAIN_NAMES = {v: k for k, v in DOMAINS.items()}


def encode_field(f: Field) -> bytes:
    lat = f.lattice
    head = HEADER.pack(MAGIC, lat.N, lat.M, DOMAINS[f.domain])
    vals = np.asarray(f.values)
    dtype = "<c16" if f.domain == "fourier" else "<f8"
    return head + np.ascontiguousarray(vals.astype(dtype).transpose()).tobytes()


def decode_fields(buf: bytes) -> list[Field]:
    out = []
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < HEADER.size:
            raise ConstraintError("truncated snapshot header")
        magic, N, M, dom = HEADER.unpack_from(buf, pos)
        if magic != MAGIC:
            raise ConstraintError(f"bad snapshot magic {magic!r}")
        if dom not in _DOMAIN_NAMES:
            raise ConstraintError(f"unknown snapshot domain code {dom}")
        pos += HEADER.size
        lat = Lattice(int(N), float(M))
        domain = _DOMAIN_NAMES[dom]
        dtype = np.dtype("<c16" if domain == "fourier" else "<f8")
        nbytes = lat.n_sites * dtype.itemsize
        if len(buf) - pos < nbytes:
            raise ConstraintError("truncated snapshot payload")
        vals = np.frombuffer(buf, dtype=dtype, count=lat.n_sites, offset=pos).reshape(lat.shape).transpose()
        out.append(Field(lat, np.array(vals, dtype=complex if domain == "fourier" else float), domain))
        pos += nbytes
    return out


def write_fields(path, fields: Iterable[Field], append: bool = False) -> None:
    with open(path, "ab" if append else "wb") as fh:
        for f in fields:
            fh.write(encode_field(f))


def read_fields(path) -> list[Field]:
    return decode_fields(Path(path).read_bytes())


def write_field(path, f: Field) -> None:
    write_fields(path, [f])


def read_field(path) -> Field:
    fs = read_fields(path)
    if len(fs) != 1:
        raise ConstraintError(f"{path} holds {len(fs)} records, expected 1")
    return fs[0]


def read_stack(path) -> np.ndarray:
    """All physical records of a file stacked as ``(n_records, n, n, n)``."""
    return np.stack([f.values for f in read_fields(path)])


def write_basket(directory, basket) -> None:
    """One multi-record file per basket object plus ``basket.json``."""
    from .stochastic import TREE_NAMES

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lat = basket.lattice
    for name in TREE_NAMES + ("X21",):
        write_fields(d / f"{name}.fld", (Field(lat, v) for v in getattr(basket, name)))
    meta = {
        "objects": list(TREE_NAMES + ("X21",)),
        "times": [float(t) for t in basket.times],
        "a": basket.a,
        "b": basket.b,
        "b_tilde": [float(v) for v in basket.b_tilde],
        "basket_norm": basket.norm,
        "norm_terms": basket.norm_terms,
        "m2": basket.m2,
        "gamma": basket.gamma,
        "N": lat.N,
        "M": lat.M,
    }
    write_json(d / "basket.json", meta)


def read_basket_meta(directory) -> dict:
    return read_json(Path(directory) / "basket.json")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    """Deterministic CSV: fixed column order, ``repr`` floats, ``\\n`` line ends."""
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_manifest(directory, config_text: str, command: str, seeds, wall_time: float, extra: dict | None = None) -> dict:
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": list(seeds),
        "wall_time_s": round(float(wall_time), 3),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "pid": os.getpid(),
    }
    manifest.update(extra or {})
    write_json(Path(directory) / "manifest.json", manifest)
    return manifest


def iter_chain_files(directory, prefix: str = "phi") -> Iterator[Path]:
    yield from sorted(Path(directory).glob(f"{prefix}_chain*.fld"))
