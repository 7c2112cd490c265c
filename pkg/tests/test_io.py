import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phi4lab import io
from phi4lab._validation import ConstraintError
from phi4lab.lattice import Field, Lattice


@given(st.integers(1, 3), st.sampled_from([1.0, 2.0]), st.integers(0, 1000))
def test_field_round_trip(N, M, seed):
    lat = Lattice(N, M)
    v = np.random.default_rng(seed).standard_normal(lat.shape)
    (back,) = io.decode_fields(io.encode_field(Field(lat, v)))
    assert back.lattice == lat
    assert np.array_equal(back.values, v)


def test_fourier_record_round_trip(rng):
    lat = Lattice(2, 1.0)
    v = rng.standard_normal(lat.shape) + 1j * rng.standard_normal(lat.shape)
    (back,) = io.decode_fields(io.encode_field(Field(lat, v, "fourier")))
    assert back.domain == "fourier"
    assert np.array_equal(back.values, v)


def test_byte_layout():
    lat = Lattice(1, 1.0)
    v = np.arange(8, dtype=float).reshape(lat.shape)
    buf = io.encode_field(Field(lat, v))
    assert buf[:8] == b"PHI4FLD1"
    assert len(buf) == 32 + 8 * 8
    assert struct.unpack_from("<I", buf, 8)[0] == 1
    assert struct.unpack_from("<d", buf, 12)[0] == 1.0
    # First index fastest: second value on disk is v[1, 0, 0].
    vals = struct.unpack_from("<8d", buf, 32)
    assert vals[1] == v[1, 0, 0] and vals[2] == v[0, 1, 0]


def test_multi_record_files(tmp_path, rng):
    lat = Lattice(2, 1.0)
    fs = [Field(lat, rng.standard_normal(lat.shape)) for _ in range(3)]
    p = tmp_path / "x.fld"
    io.write_fields(p, fs[:2])
    io.write_fields(p, fs[2:], append=True)
    stack = io.read_stack(p)
    assert stack.shape == (3, 4, 4, 4)
    assert np.array_equal(stack[2], fs[2].values)
    with pytest.raises(ConstraintError):
        io.read_field(p)


@pytest.mark.parametrize("cut", [5, 40, 32 + 8 * 64 - 1])
def test_truncated_and_corrupt_records(cut, rng):
    lat = Lattice(2, 1.0)
    buf = io.encode_field(Field(lat, rng.standard_normal(lat.shape)))
    with pytest.raises(ConstraintError):
        io.decode_fields(buf[:cut])
    with pytest.raises(ConstraintError):
        io.decode_fields(b"XXXXXXXX" + buf[8:])


def test_csv_is_deterministic(tmp_path):
    rows = [{"a": 0.1, "b": True, "c": np.int64(3)}, {"a": np.float64(1e-20), "b": False}]
    p1, p2 = tmp_path / "1.csv", tmp_path / "2.csv"
    io.write_csv(p1, rows)
    io.write_csv(p2, rows)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text() == "a,b,c\n0.1,true,3\n1e-20,false,\n"
    assert io.read_csv(p1)[0]["a"] == "0.1"


def test_json_and_manifest(tmp_path):
    io.write_json(tmp_path / "m.json", {"x": np.float64(1.5), "y": np.arange(2)})
    assert io.read_json(tmp_path / "m.json") == {"x": 1.5, "y": [0, 1]}
    m = io.write_manifest(tmp_path, "lattice.N = 3\n", "gibbs", [1, 2], 0.5)
    assert m["seeds"] == [1, 2] and len(m["config_sha256"]) == 64
