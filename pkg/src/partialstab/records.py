"""
Versioned binary records and a content-addressed on-disk cache.

Record layout (little endian)::

    b"PSTB"  magic
    uint16   format version (1)
    uint32   header length H
    H bytes  UTF-8 JSON header: shape, dtype, plus caller metadata
    ...      raw array bytes, C order
    32 bytes SHA-256 of everything above

A record whose digest does not match is treated as corrupt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from filelock import FileLock

log = logging.getLogger(__name__)

MAGIC = b"PSTB"
VERSION = 1


class CorruptRecord(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def encode_record(array, metadata=None):
    array = np.ascontiguousarray(array)
    dtype = array.dtype.newbyteorder("<")
    header = dict(metadata or {})
    header.update(shape=list(array.shape), dtype=dtype.str)
    hbytes = json.dumps(header, sort_keys=True, default=_jsonable).encode()
    body = MAGIC + struct.pack("<HI", VERSION, len(hbytes)) + hbytes + array.astype(dtype).tobytes()
    return body + hashlib.sha256(body).digest()


def decode_record(blob):
    if len(blob) < 42 or blob[:4] != MAGIC:
        raise CorruptRecord("bad magic")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptRecord("checksum mismatch")
    version, hlen = struct.unpack("<HI", body[4:10])
    if version != VERSION:
        raise CorruptRecord(f"unsupported record version {version}")
    header = json.loads(body[10:10 + hlen])
    data = np.frombuffer(body[10 + hlen:], dtype=np.dtype(header.pop("dtype")))
    return data.reshape(header.pop("shape")).copy(), header


def write_record(path, array, metadata=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(encode_record(array, metadata))
    os.replace(tmp, path)


def read_record(path):
    return decode_record(Path(path).read_bytes())


def content_key(*parts):
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=_jsonable).encode())
        h.update(b"\0")
    return h.hexdigest()[:32]


class RecordCache:
    """Directory of records addressed by content key.

    ``misses`` counts computations actually performed through
    :meth:`get_or_compute`; corrupt entries are recomputed and overwritten.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self.corrupt = 0

    def path(self, key):
        return self.directory / f"{key}.rec"

    def get(self, key):
        p = self.path(key)
        if not p.exists():
            return None
        try:
            return read_record(p)
        except CorruptRecord as exc:
            self.corrupt += 1
            log.warning("cache entry %s corrupt (%s); recomputing", key, exc)
            return None

    def put(self, key, array, metadata=None):
        write_record(self.path(key), array, metadata)

    def get_or_compute(self, key, compute):
        with FileLock(str(self.path(key)) + ".lock"):
            got = self.get(key)
            if got is not None:
                self.hits += 1
                return got
            array, metadata = compute()
            self.misses += 1
            self.put(key, array, metadata)
            return np.asarray(array), dict(metadata or {})
