import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmsuite.errors import NonFiniteError, ShapeMismatch, ValidationError
from vmsuite.numeric import (as_dtype, concat, dtype_name, dumps, ensure_finite, flat_index, load,
                             loads, make_rng, matmul, read_arrays, rel_err, reverse_seq, save,
                             sigmoid, silu, silu_grad, softplus, unravel_index, write_arrays)


def test_matmul_small_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0], [6.0]])
    np.testing.assert_array_equal(matmul(a, b), [[17.0], [39.0]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4))
    expected = np.zeros((3, 4))
    for i in range(3):
        for j in range(4):
            for k in range(5):
                expected[i, j] += a[i, k] * b[k, j]
    assert rel_err(matmul(a, b), expected) < 1e-14


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_reverse_seq_is_time_reversal():
    x = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(reverse_seq(x), [[4, 5], [2, 3], [0, 1]])
    np.testing.assert_array_equal(reverse_seq(reverse_seq(x)), x)


def test_concat_checks_trailing_dims():
    np.testing.assert_array_equal(concat([np.ones((1, 2)), np.zeros((2, 2))]), [[1, 1], [0, 0], [0, 0]])
    with pytest.raises(ShapeMismatch):
        concat([np.ones((1, 2)), np.ones((1, 3))])


def test_activation_values():
    assert softplus(np.array(0.0)) == pytest.approx(np.log(2.0), rel=1e-15)
    assert softplus(np.array(50.0)) == pytest.approx(50.0, rel=1e-15)
    assert softplus(np.array(-800.0)) >= 0.0
    assert sigmoid(np.array(0.0)) == 0.5
    assert silu(np.array(0.0)) == 0.0
    assert silu(np.array(1.0)) == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), rel=1e-15)


def test_silu_grad_matches_central_difference():
    z = np.linspace(-6, 6, 25)
    h = 1e-6
    assert rel_err(silu_grad(z), (silu(z + h) - silu(z - h)) / (2 * h)) < 1e-8


def test_ensure_finite():
    ensure_finite(np.ones(3))
    with pytest.raises(NonFiniteError):
        ensure_finite(np.array([1.0, np.nan]))


def test_rel_err_floor():
    assert rel_err(np.zeros(3), np.zeros(3)) == 0.0
    assert rel_err(np.array([1.0, 2.5]), np.array([1.0, 2.0])) == pytest.approx(0.25)


def test_dtype_names():
    assert as_dtype("f32") == np.float32 and dtype_name(np.float64) == "f64"
    with pytest.raises(ValidationError):
        as_dtype("f16")


def test_rng_is_reproducible():
    assert np.array_equal(make_rng(5).normal(size=4), make_rng(5).normal(size=4))


def test_container_round_trip_bit_exact(tmp_path, rng):
    arrays = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=5).astype(np.float32),
              "empty": np.zeros((0, 4)), "scalar": np.array(np.pi)}
    back = loads(dumps(arrays))
    assert list(back) == list(arrays)
    for k, v in arrays.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape
        assert back[k].tobytes() == v.tobytes()
    save(tmp_path / "x.bin", arrays)
    assert load(tmp_path / "x.bin")["a"].tobytes() == arrays["a"].tobytes()


def test_container_stream_api(rng):
    buf = io.BytesIO()
    write_arrays(buf, {"w": rng.normal(size=3)})
    buf.seek(0)
    assert read_arrays(buf)["w"].shape == (3,)


def test_truncated_container_rejected(rng):
    data = dumps({"w": rng.normal(size=8)})
    with pytest.raises(ValidationError):
        loads(data[:-4])


shapes = st.lists(st.integers(1, 6), min_size=1, max_size=4)


@given(shape=shapes, data=st.data())
def test_flat_index_round_trip(shape, data):
    coords = tuple(data.draw(st.integers(0, s - 1)) for s in shape)
    idx = flat_index(coords, shape)
    assert idx == int(np.ravel_multi_index(coords, shape))
    assert unravel_index(idx, shape) == coords


def test_flat_index_out_of_range():
    with pytest.raises(IndexError):
        flat_index((2, 0), (2, 3))
