import struct

import numpy as np
import pytest

from avvad import archive


def test_round_trip_preserves_dtype_shape_values(rng, tmp_path):
    tensors = {
        "faces": rng.integers(0, 256, (3, 4, 5), dtype=np.uint8),
        "weights": rng.normal(size=(2, 7)).astype(np.float32),
        "f64": rng.normal(size=5),
        "idx": np.arange(4, dtype=np.int64),
        "scalar": np.array(2.5),
        "empty": np.zeros((0, 3), dtype=np.float32),
    }
    digest = archive.save(tmp_path / "x.avta", tensors)
    back = archive.load(tmp_path / "x.avta")
    assert list(back) == list(tensors)
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape
        assert np.array_equal(back[k], v)
    assert digest == archive.sha256_file(tmp_path / "x.avta")


def test_header_layout_is_little_endian():
    data = archive.dumps({"ab": np.array([1, 2], dtype=">i4")})
    assert data[:4] == b"AVTA"
    assert struct.unpack_from("<HI", data, 4) == (1, 1)
    assert struct.unpack_from("<H", data, 10) == (2,)
    assert data[12:14] == b"ab"
    assert struct.unpack_from("<BBQ", data, 14) == (3, 1, 2)
    assert data[-8:] == struct.pack("<ii", 1, 2)


def test_byte_order_of_input_does_not_change_bytes():
    big = np.arange(6, dtype=">f8")
    little = np.arange(6, dtype="<f8")
    assert archive.dumps({"x": big}) == archive.dumps({"x": little})


@pytest.mark.parametrize("mutate", [lambda d: b"XXXX" + d[4:], lambda d: d[:-3], lambda d: d + b"\0"])
def test_corrupt_archives_rejected(mutate):
    data = archive.dumps({"x": np.ones(4, dtype=np.float32)})
    with pytest.raises(archive.ArchiveError):
        archive.loads(mutate(data))
