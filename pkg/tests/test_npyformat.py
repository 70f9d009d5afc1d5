import io

import numpy as np
import pytest

from oracles import npy_bytes_handwritten
from fidtrust import npyformat
from fidtrust.embedder import load_embeddings, save_embeddings


def random_array(rng, rank, dtype):
    shape = tuple(int(v) for v in rng.integers(1, 9, size=rank))
    return (rng.standard_normal(shape) * 10 ** rng.uniform(-3, 3)).astype(dtype)


@pytest.mark.parametrize("dtype", ["<f4", "<f8"])
@pytest.mark.parametrize("rank", [2, 3])
def test_round_trip_bitwise(tmp_path, rng, dtype, rank):
    for i in range(5):
        arr = random_array(rng, rank, dtype)
        path = tmp_path / f"a{i}.npy"
        npyformat.save(path, arr)
        back = npyformat.load(path)
        assert back.dtype == np.dtype(dtype) and back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()


@pytest.mark.parametrize("dtype", ["<f4", "<f8"])
def test_matches_numpy_writer(rng, dtype):
    arr = random_array(rng, 3, dtype)
    buf = io.BytesIO()
    np.save(buf, arr)
    assert npyformat.to_bytes(arr) == buf.getvalue()
    assert npyformat.from_bytes(buf.getvalue()).tobytes() == arr.tobytes()


def test_reads_handwritten_fixture(rng):
    arr = random_array(rng, 3, "<f8")
    back = npyformat.from_bytes(npy_bytes_handwritten(arr))
    np.testing.assert_array_equal(back, arr)


def test_reads_version_2(rng):
    arr = random_array(rng, 2, "<f4")
    buf = io.BytesIO()
    np.lib.format.write_array(buf, arr, version=(2, 0))
    np.testing.assert_array_equal(npyformat.from_bytes(buf.getvalue()), arr)


def test_big_endian_input_is_written_little_endian(rng):
    arr = random_array(rng, 2, ">f8")
    back = npyformat.from_bytes(npyformat.to_bytes(arr))
    assert back.dtype == np.dtype("<f8")
    np.testing.assert_array_equal(back, arr)


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda b: b"XXNUMPY" + b[7:], "magic"),
        (lambda b: b[:-8], "payload"),
        (lambda b: b[:6] + b"\x09" + b[7:], "version"),
        (lambda b: b.replace(b"<f8", b"<i8"), "dtype"),
        (lambda b: b.replace(b"'fortran_order': False", b"'fortran_order': True "), "fortran"),
    ],
)
def test_rejects_corrupt_files(mutate, match):
    good = npyformat.to_bytes(np.zeros((2, 3)))
    with pytest.raises(npyformat.NpyFormatError, match=match):
        npyformat.from_bytes(mutate(good))


def test_rejects_integer_arrays():
    with pytest.raises(npyformat.NpyFormatError):
        npyformat.to_bytes(np.zeros((2, 2), dtype=np.int32))


def test_embedding_rank_checked(tmp_path):
    path = tmp_path / "bad.npy"
    npyformat.save(path, np.zeros(4))
    with pytest.raises(ValueError, match="wrong rank"):
        load_embeddings(path)
    with pytest.raises(ValueError, match="rank"):
        save_embeddings(path, np.zeros((2, 2, 2, 2)))


def test_embedding_nonfinite_rejected(tmp_path):
    path = tmp_path / "nan.npy"
    npyformat.save(path, np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError, match="non-finite"):
        load_embeddings(path)


def test_save_embeddings_dtype(tmp_path, rng):
    arr = rng.standard_normal((3, 4))
    save_embeddings(tmp_path / "e.npy", arr, dtype="<f4")
    back = load_embeddings(tmp_path / "e.npy")
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr.astype(np.float32))
