import numpy as np
import numpy.testing as npt
import pytest

from voxgan import ContainerError, Rng
from voxgan.container import read_container, write_container


def _sample_payload():
    rng = Rng(0)
    meta = {"kind": "test", "note": "payload", "values": [1, 2.5, None], "nested": {"a": 1}}
    tensors = {
        "w": rng.normal((3, 4)),
        "b": rng.normal((4,)).astype(np.float32),
        "mask": np.array([0, 1, 1], dtype=np.uint8),
        "counts": np.array([5, -2], dtype=np.int64),
        "scalar": np.array(3.75),
    }
    return meta, tensors


def test_roundtrip(tmp_path):
    meta, tensors = _sample_payload()
    path = tmp_path / "x.vxgn"
    write_container(path, meta, tensors)
    meta2, tensors2 = read_container(path)
    assert meta2 == meta
    assert sorted(tensors2) == sorted(tensors)
    for k in tensors:
        npt.assert_array_equal(tensors2[k], tensors[k])
        assert tensors2[k].dtype == tensors[k].dtype


def test_write_is_deterministic(tmp_path):
    meta, tensors = _sample_payload()
    a, b = tmp_path / "a.vxgn", tmp_path / "b.vxgn"
    write_container(a, meta, tensors)
    write_container(b, dict(reversed(list(meta.items()))), dict(reversed(list(tensors.items()))))
    assert a.read_bytes() == b.read_bytes()


def test_magic_check(tmp_path):
    path = tmp_path / "x.vxgn"
    meta, tensors = _sample_payload()
    write_container(path, meta, tensors)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(ContainerError):
        read_container(path)


def test_crc_detects_flipped_bit(tmp_path):
    path = tmp_path / "x.vxgn"
    meta, tensors = _sample_payload()
    write_container(path, meta, tensors)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0x40
    path.write_bytes(bytes(data))
    with pytest.raises(ContainerError, match="checksum"):
        read_container(path)


def test_truncation_detected(tmp_path):
    path = tmp_path / "x.vxgn"
    meta, tensors = _sample_payload()
    write_container(path, meta, tensors)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(ContainerError):
        read_container(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "x.vxgn"
    meta, tensors = _sample_payload()
    write_container(path, meta, tensors)
    data = bytearray(path.read_bytes())
    data[4:6] = (99).to_bytes(2, "little")
    # refresh the CRC so only the version differs
    import struct
    import zlib

    body = bytes(data[:-4])
    data[-4:] = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(bytes(data))
    with pytest.raises(ContainerError, match="version"):
        read_container(path)
