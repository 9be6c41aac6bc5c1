"""Versioned binary container: "VXGN" magic, JSON metadata, named tensor
blocks, trailing CRC32.

Layout (all integers little-endian):

    b"VXGN" | u16 version | u64 meta_len | meta JSON (utf-8)
    u32 n_blocks
    per block: u16 name_len | name utf-8 | u8 dtype tag | u8 rank
               | u32 * rank extents | raw array bytes
    u32 CRC32 over everything above

Blocks are sorted by name and the metadata JSON uses sorted keys, so
writing the same content twice yields identical bytes.
"""

import json
import struct
import zlib

import numpy as np

from .errors import ContainerError

MAGIC = b"VXGN"
VERSION = 1

_DTYPES = {0: "<f8", 1: "<f4", 2: "<i8", 3: "u1"}
_DTYPE_TAGS = {np.dtype(v): k for k, v in _DTYPES.items()}


def write_container(path, metadata, tensors):
    """Serialize metadata (JSON-able dict) and named numpy arrays."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<Q", len(meta))
    blob += meta
    names = sorted(tensors)
    blob += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(tensors[name])
        key = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        if np.dtype(key) not in _DTYPE_TAGS:
            arr = arr.astype(np.float64)
            key = arr.dtype
        arr = arr.astype(np.dtype(key).newbyteorder("<"), copy=False)
        nb = name.encode("utf-8")
        blob += struct.pack("<H", len(nb))
        blob += nb
        blob += struct.pack("<BB", _DTYPE_TAGS[np.dtype(key).newbyteorder("=")], arr.ndim)
        for e in arr.shape:
            blob += struct.pack("<I", e)
        blob += arr.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise ContainerError("truncated container")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path):
    """Returns (metadata dict, {name: ndarray}); validates version and CRC."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) + 2 + 8 + 4 + 4:
        raise ContainerError("truncated container")
    body, (crc_stored,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ContainerError("checksum failure")
    r = _Reader(body)
    if r.take(4) != MAGIC:
        raise ContainerError("bad magic")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (meta_len,) = r.unpack("<Q")
    metadata = json.loads(r.take(meta_len).decode("utf-8"))
    (n_blocks,) = r.unpack("<I")
    tensors = {}
    for _ in range(n_blocks):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        tag, rank = r.unpack("<BB")
        if tag not in _DTYPES:
            raise ContainerError(f"unknown dtype tag {tag}")
        shape = tuple(r.unpack("<I")[0] for _ in range(rank))
        dtype = np.dtype(_DTYPES[tag])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="))
    if r.pos != len(body):
        raise ContainerError("trailing bytes after tensor blocks")
    return metadata, tensors
