"""Binary checkpoint format for named tensors.

Layout (all integers little-endian)::

    b"DEGC"
    u32   format version
    u32   kind length, then kind as UTF-8
    u32   tensor count
    per tensor:
        u32 name length, name UTF-8
        u8  dtype code (0 = f64, 1 = i64, 2 = u8)
        u32 ndim, then ndim x u32 dims
        payload, little-endian
    u32   CRC32 of every preceding byte

Model metadata (network specs, latent size, ...) travels as a JSON document in
a u8 tensor named ``__meta__``.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"DEGC"
VERSION = 1
META = "__meta__"

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float64"): 0, np.dtype("int64"): 1, np.dtype("uint8"): 2}


def encode(kind: str, tensors: dict, meta: dict | None = None) -> bytes:
    items = dict(tensors)
    if meta is not None:
        items[META] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    parts = [MAGIC, struct.pack("<I", VERSION)]
    k = kind.encode()
    parts += [struct.pack("<I", len(k)), k, struct.pack("<I", len(items))]
    for name, arr in items.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            arr = arr.astype(np.float64)
            code = 0
        nb = name.encode()
        parts += [struct.pack("<I", len(nb)), nb, struct.pack("<BI", code, arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape),
                  np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(raw: bytes):
    """Return ``(kind, tensors, meta)``."""
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise FormatError(f"not a checkpoint: expected magic {MAGIC!r}, got {raw[:4]!r}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checkpoint CRC32 mismatch (file corrupted)")
    pos = 4
    (version,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (klen,) = struct.unpack_from("<I", body, pos)
    pos += 4
    kind = body[pos:pos + klen].decode()
    pos += klen
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos:pos + nlen].decode()
        pos += nlen
        code, ndim = struct.unpack_from("<BI", body, pos)
        pos += 5
        dims = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        dt = _DTYPES.get(code)
        if dt is None:
            raise FormatError(f"unknown dtype code {code} for tensor {name!r}")
        n = int(np.prod(dims)) * dt.itemsize
        if pos + n > len(body):
            raise FormatError(f"tensor {name!r} payload truncated at byte offset {pos}")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(body, dtype=dt, count=int(np.prod(dims)), offset=pos).reshape(dims).copy()
        pos += n
    if pos != len(body):
        raise FormatError(f"{len(body) - pos} trailing bytes before CRC")
    meta = None
    if META in tensors:
        meta = json.loads(tensors.pop(META).tobytes().decode())
    return kind, tensors, meta


def save(path, kind: str, tensors: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(kind, tensors, meta))
    tmp.replace(path)
    return path


def load(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode(path.read_bytes())


# -- model-level helpers ---------------------------------------------------


def save_model(path, model) -> Path:
    return save(path, model_kind(model), model.state(), model.meta())


def model_kind(model) -> str:
    from .adversarial import GanModel
    from .metrics import Classifier
    from .vae import VaeModel

    for cls, tag in ((VaeModel, "vae"), (GanModel, "gan"), (Classifier, "classifier")):
        if isinstance(model, cls):
            return tag
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def load_model(path, expect: str | None = None):
    from .adversarial import GanModel
    from .metrics import Classifier
    from .vae import VaeModel

    kind, tensors, meta = load(path)
    if expect is not None and kind != expect:
        raise FormatError(f"{path} holds a {kind!r} checkpoint, expected {expect!r}")
    cls = {"vae": VaeModel, "gan": GanModel, "classifier": Classifier}.get(kind)
    if cls is None:
        raise FormatError(f"unknown model kind {kind!r} in {path}")
    model = cls.from_meta(meta)
    model.load_state(tensors)
    return model


def state_checksum(state: dict) -> int:
    """CRC32 over names and raw bytes of every tensor, in sorted name order."""
    crc = 0
    for name in sorted(state):
        crc = zlib.crc32(name.encode(), crc)
        crc = zlib.crc32(np.ascontiguousarray(state[name]).tobytes(), crc)
    return crc
