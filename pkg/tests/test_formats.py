import os
import stat

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nmpu.errors import FormatError
from nmpu.formats import (
    atomic_write_text, read_dataset_csv, read_tensors, write_dataset_csv, write_tensors,
)


@given(st.dictionaries(st.text("abcdefgh.0123", min_size=1, max_size=12),
                       arrays(np.float64, st.tuples(st.integers(0, 4), st.integers(1, 3)),
                              elements=st.floats(allow_nan=False)),
                       max_size=4))
def test_tensor_round_trip(tmp_path_factory, tensors):
    p = tmp_path_factory.mktemp("t") / "x.nmt"
    write_tensors(p, tensors)
    back = read_tensors(p)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert np.array_equal(back[k], tensors[k])


def test_tensor_layout(tmp_path):
    p = tmp_path / "a.nmt"
    write_tensors(p, {"w": np.array([[1.0, 2.0]])})
    raw = p.read_bytes()
    assert raw[:4] == b"NMTC" and raw[4] == 1
    assert raw[-16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_tensor_errors(tmp_path):
    bad = tmp_path / "bad.nmt"
    bad.write_bytes(b"XXXX")
    with pytest.raises(FormatError):
        read_tensors(bad)
    p = tmp_path / "t.nmt"
    write_tensors(p, {"w": np.ones((4, 4))})
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_tensors(p)


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X, y = rng.uniform(0, 1, (20, 5)), rng.integers(0, 10, 20)
    p = tmp_path / "d.csv"
    write_dataset_csv(p, X, y)
    X2, y2 = read_dataset_csv(p)
    assert np.array_equal(X, X2) and np.array_equal(y, y2)
    with pytest.raises(FormatError):
        p.write_text("1\n2\n")
        read_dataset_csv(p)


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write_text(p, "a\nb\n")
    atomic_write_text(p, "c\n")
    assert p.read_bytes() == b"c\n"
    assert os.listdir(p.parent) == ["f.txt"]
    assert stat.S_IMODE(p.stat().st_mode) == 0o644
