"""Binary and CSV serialization of lattice fields.

Binary layout (all little-endian)::

    b"SLLF"                 magic
    uint32                  format version (1)
    uint32                  d
    uint64[d]               shape
    uint64[d]               origin
    uint32 + bytes          generator id (utf-8, length-prefixed)
    uint64                  seed
    float64[prod(shape)]    values, row-major
"""

from __future__ import annotations

import csv
import io
import itertools
import struct
from pathlib import Path

import numpy as np

from .lattice import LatticeField

MAGIC = b"SLLF"
VERSION = 1


def field_to_bytes(fld: LatticeField) -> bytes:
    d = fld.d
    gen = fld.generator.encode("utf-8")
    head = MAGIC + struct.pack("<II", VERSION, d)
    head += struct.pack(f"<{d}Q", *fld.shape) + struct.pack(f"<{d}Q", *fld.origin)
    head += struct.pack("<I", len(gen)) + gen + struct.pack("<Q", int(fld.seed) & ((1 << 64) - 1))
    body = np.ascontiguousarray(fld.values, dtype="<f8").tobytes()
    return head + body


def field_from_bytes(buf: bytes) -> LatticeField:
    if buf[:4] != MAGIC:
        raise ValueError("not a field file (bad magic)")
    version, d = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported field format version {version}")
    pos = 12
    shape = struct.unpack_from(f"<{d}Q", buf, pos)
    pos += 8 * d
    origin = struct.unpack_from(f"<{d}Q", buf, pos)
    pos += 8 * d
    (glen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    gen = buf[pos : pos + glen].decode("utf-8")
    pos += glen
    (seed,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    count = int(np.prod(shape))
    if len(buf) - pos != 8 * count:
        raise ValueError(f"payload has {len(buf) - pos} bytes, expected {8 * count}")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
    return LatticeField(values, origin=origin, generator=gen, seed=seed)


def write_field(path, fld: LatticeField) -> None:
    Path(path).write_bytes(field_to_bytes(fld))


def read_field(path) -> LatticeField:
    return field_from_bytes(Path(path).read_bytes())


def field_to_csv(fld: LatticeField) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"k{i + 1}" for i in range(fld.d)] + ["value"])
    for pos in itertools.product(*(range(s) for s in fld.shape)):
        k = [p + o for p, o in zip(pos, fld.origin)]
        w.writerow(k + [repr(float(fld.values[pos]))])
    return out.getvalue()


def write_field_csv(path, fld: LatticeField) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(field_to_csv(fld))
