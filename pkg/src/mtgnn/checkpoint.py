"""Binary checkpoint container.

Byte layout (all integers little-endian)::

    magic        6 bytes   b"MTGNN1"
    config_len   uint32    length of the config block in bytes
    config       bytes     UTF-8 text, one ``key=value`` per line, keys sorted
    n_blobs      uint32
    n_blobs times:
        name_len uint32
        name     bytes     UTF-8
        rank     uint32
        extents  rank x uint64
        payload  prod(extents) x float64 (little-endian, row-major)

Saving what was loaded reproduces the file byte for byte.
"""
import struct

import numpy as np

from .exceptions import CheckpointError

MAGIC = b"MTGNN1"


def _encode_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_checkpoint(path, config, blobs):
    """Write ``config`` (flat mapping) and named float arrays ``blobs`` to ``path``."""
    text = "".join(f"{k}={_encode_value(config[k])}\n" for k in sorted(config))
    for k in config:
        if "=" in k or "\n" in k or "\n" in _encode_value(config[k]):
            raise CheckpointError(f"config entry {k!r} cannot be serialized")
    cfg = text.encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(blobs))]
    for name, arr in blobs.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Return ``(config, blobs)``; config values are left as strings."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return _parse(buf)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc


def _parse(buf):
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    pos = len(MAGIC)

    def read(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    (clen,) = read("<I")
    text = buf[pos:pos + clen].decode("utf-8")
    if len(text.encode("utf-8")) != clen:
        raise CheckpointError("truncated config block")
    pos += clen
    config = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed config line {line!r}")
        config[key] = value
    (count,) = read("<I")
    blobs = {}
    for _ in range(count):
        (nlen,) = read("<I")
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = read("<I")
        shape = read(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape, dtype=np.int64))
        end = pos + 8 * n
        if end > len(buf):
            raise CheckpointError(f"truncated payload for {name}")
        blobs[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos = end
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last blob")
    return config, blobs
