"""Binary checkpoint format.

Layout: the 6 magic bytes ``DSCXv1`` followed, for every named parameter
(and buffer) in model order, by

    uint32 name length | utf-8 name | uint32 rank | rank x uint32 extents |
    prod(extents) little-endian float64 values

All integers are little-endian. There is no record count; records run to EOF.
"""

from __future__ import annotations

import io
import os
import struct
from pathlib import Path

import numpy as np

from dscx.errors import CheckpointMismatch

MAGIC = b"DSCXv1"


def dumps(named_params) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    for name, p in named_params:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", p.data.ndim))
        buf.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        buf.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return buf.getvalue()


def parse(blob: bytes) -> dict[str, np.ndarray]:
    if not blob.startswith(MAGIC):
        raise CheckpointMismatch("missing DSCXv1 magic header")
    out: dict[str, np.ndarray] = {}
    pos = len(MAGIC)
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * count > len(blob):
                raise CheckpointMismatch(f"truncated values for {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * count
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointMismatch(f"corrupt checkpoint: {exc}") from exc
    return out


def save(model, path) -> None:
    """Write atomically so an interrupted save never clobbers the last good file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(model.named_state()))
    os.replace(tmp, path)


def load_into(model, source) -> None:
    """Copy checkpoint values into ``model``; names and shapes must match exactly."""
    blob = source if isinstance(source, (bytes, bytearray)) else Path(source).read_bytes()
    stored = parse(bytes(blob))
    expected = dict(model.named_state())
    missing = sorted(set(expected) - set(stored))
    extra = sorted(set(stored) - set(expected))
    if missing or extra:
        raise CheckpointMismatch(f"parameter names differ: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, p in expected.items():
        if stored[name].shape != p.data.shape:
            raise CheckpointMismatch(f"{name}: checkpoint shape {stored[name].shape} != model shape {p.data.shape}")
    for name, p in expected.items():
        p.data = stored[name].copy()
