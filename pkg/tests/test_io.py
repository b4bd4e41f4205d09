import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tenad.io import FormatError, decode_ten4, encode_ten4, format_kv, parse_kv, read_ten4, write_ten4

shapes = st.tuples(*[st.integers(1, 4)] * 4)


@given(shapes.flatmap(lambda s: arrays(np.float64, s, elements=st.floats(-1e6, 1e6))))
def test_ten4_round_trip(t):
    assert np.array_equal(decode_ten4(encode_ten4(t)), t)


def test_ten4_layout_first_mode_fastest():
    t = np.arange(24, dtype=float).reshape((2, 3, 2, 2), order="F")
    buf = encode_ten4(t)
    assert buf[:4] == b"TEN4"
    assert np.frombuffer(buf[4:20], "<u4").tolist() == [2, 3, 2, 2]
    assert np.frombuffer(buf[20:], "<f8").tolist() == list(range(24))


def test_ten4_file(tmp_path):
    t = np.random.default_rng(0).standard_normal((3, 2, 1, 4))
    write_ten4(tmp_path / "a.ten4", t)
    assert np.array_equal(read_ten4(tmp_path / "a.ten4"), t)


@pytest.mark.parametrize("mutate", [
    lambda b: b"TEN3" + b[4:],
    lambda b: b[:-8],
    lambda b: b + b"\0" * 8,
    lambda b: b[:10],
    lambda b: b[:20] + np.array([np.nan], "<f8").tobytes() + b[28:],
])
def test_ten4_rejects_corruption(mutate):
    buf = encode_ten4(np.ones((2, 2, 1, 2)))
    with pytest.raises(FormatError):
        decode_ten4(mutate(buf))


def test_kv_parse():
    text = "# header\na = 1\nb=two  # trailing\n\n attack.x.q = 1,2,3,4\n"
    assert parse_kv(text) == {"a": "1", "b": "two", "attack.x.q": "1,2,3,4"}
    assert parse_kv(format_kv({"a": "1", "b": "x"})) == {"a": "1", "b": "x"}
    with pytest.raises(ValueError):
        parse_kv("a = 1\na = 2\n")
    with pytest.raises(ValueError):
        parse_kv("just words\n")
