"""Dataset ingestion, batching, synthetic manifolds and image file formats.

Supported on-disk formats:

* MNIST IDX (big-endian; magic 0x00000803 for images, 0x00000801 for labels),
  optionally gzip-compressed.
* CIFAR-10 binary: records of 1 label byte + 3072 pixel bytes (R, G, B planes).
* Raw tensor files: ``b"DEGT"``, u32 ndim, u32 dims, little-endian f64 payload.
  A directory of them (one image per file) is a raw-tensor dataset.
"""
from __future__ import annotations

import gzip
import hashlib
import logging
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .numcore.rng import Rng

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3072
RAW_MAGIC = b"DEGT"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

# Canonical MNIST distribution files with the MD5 digests published alongside
# them. ``fetch`` verifies SHA-256 when one is given and falls back to these.
MNIST_SOURCES = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}
MNIST_MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"


@dataclass
class Dataset:
    images: np.ndarray  # [N, C, H, W] float64
    labels: np.ndarray | None = None
    name: str = ""
    value_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.images.ndim != 4:
            raise InvalidArgument(f"dataset images must be [N,C,H,W], got shape {self.images.shape}")
        lo, hi = self.value_range
        if self.images.size and (self.images.min() < lo or self.images.max() > hi):
            raise InvalidArgument(f"pixel values outside [{lo},{hi}]")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise InvalidArgument("labels and images differ in length")

    def __len__(self):
        return len(self.images)

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.images[idx], labels, self.name, self.value_range)

    def to_range(self, target: tuple) -> "Dataset":
        """Affinely map pixel values from the current range to ``target``."""
        (lo, hi), (a, b) = self.value_range, target
        imgs = (self.images - lo) / (hi - lo) * (b - a) + a
        return Dataset(np.clip(imgs, a, b), self.labels, self.name, tuple(target))

    def describe(self) -> str:
        n = len(self)
        c, h, w = self.images.shape[1:]
        text = f"{n} × {c}×{h}×{w}, range [{self.images.min():g},{self.images.max():g}]"
        if self.labels is not None:
            hist = np.bincount(self.labels.astype(np.int64))
            text += "\nlabels: " + " ".join(f"{i}:{c}" for i, c in enumerate(hist))
        return text


# -- MNIST -----------------------------------------------------------------


def _open_maybe_gz(path: Path) -> bytes:
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise FileNotFoundError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, expected_magic: int) -> np.ndarray:
    if len(raw) < 8:
        raise FormatError(f"IDX file truncated at byte offset {len(raw)} (header needs 8 bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"bad IDX magic: expected 0x{expected_magic:08x}, got 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"IDX file truncated at byte offset {len(raw)} (header needs {header} bytes)")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise FormatError(f"IDX file truncated at byte offset {len(raw)}; expected {need} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=int(np.prod(dims)), offset=header).reshape(dims)


def write_idx(path, array: np.ndarray, compress=False):
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    raw = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    Path(path).write_bytes(gzip.compress(raw, mtime=0) if compress else raw)


def load_mnist(directory, subset_size=None, split="train", seed=0) -> Dataset:
    """Load MNIST IDX files from ``directory`` as [N,1,28,28] in [0,1].

    With ``subset_size``, a seeded random subset of that size is returned.
    """
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"MNIST directory not found: {d}")
    img = parse_idx(_open_maybe_gz(d / MNIST_FILES[f"{split}_images"]), IDX_IMAGES_MAGIC)
    lab = parse_idx(_open_maybe_gz(d / MNIST_FILES[f"{split}_labels"]), IDX_LABELS_MAGIC)
    if len(img) != len(lab):
        raise FormatError(f"{len(img)} images but {len(lab)} labels")
    ds = Dataset(img.reshape(-1, 1, 28, 28).astype(np.float64) / 255.0, lab.astype(np.int64), f"mnist-{split}")
    if subset_size is not None:
        ds = take_subset(ds, subset_size, seed)
    return ds


def take_subset(ds: Dataset, n: int, seed=0) -> Dataset:
    if n > len(ds):
        raise InvalidArgument(f"subset of {n} requested from a dataset of {len(ds)}")
    idx = np.sort(Rng(seed).child("subset").choice(len(ds), n))
    return ds.subset(idx)


def split(ds: Dataset, n_test: int, seed=0):
    """Seeded disjoint (train, test) split."""
    if not 0 < n_test < len(ds):
        raise InvalidArgument(f"test size {n_test} invalid for {len(ds)} samples")
    perm = Rng(seed).child("split").permutation(len(ds))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


# -- CIFAR-10 ----------------------------------------------------------------


def parse_cifar_records(raw: bytes):
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise FormatError(f"CIFAR-10 batch of {len(raw)} bytes is not a positive multiple of {CIFAR_RECORD}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), rec[:, 0].astype(np.int64)


def load_cifar10(directory, subset_size=None, seed=0) -> Dataset:
    """Load every ``*.bin`` batch under ``directory`` as [N,3,32,32] in [0,1]."""
    d = Path(directory)
    files = sorted(d.glob("*.bin")) if d.is_dir() else [d]
    if not files or not files[0].exists():
        raise FileNotFoundError(f"no CIFAR-10 .bin batches in {d}")
    imgs, labs = zip(*(parse_cifar_records(f.read_bytes()) for f in files))
    ds = Dataset(np.concatenate(imgs).astype(np.float64) / 255.0, np.concatenate(labs), "cifar10")
    if subset_size is not None:
        ds = take_subset(ds, subset_size, seed)
    return ds


# -- raw tensors ---------------------------------------------------------------


def tensor_to_bytes(a: np.ndarray) -> bytes:
    a = np.asarray(a, dtype="<f8")
    return RAW_MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape) + a.tobytes()


def tensor_from_bytes(raw: bytes) -> np.ndarray:
    if raw[:4] != RAW_MAGIC:
        raise FormatError(f"bad raw tensor magic: expected {RAW_MAGIC!r}, got {raw[:4]!r}")
    (ndim,) = struct.unpack("<I", raw[4:8])
    dims = struct.unpack(f"<{ndim}I", raw[8:8 + 4 * ndim])
    off = 8 + 4 * ndim
    n = int(np.prod(dims))
    if len(raw) != off + 8 * n:
        raise FormatError(f"raw tensor payload is {len(raw) - off} bytes, expected {8 * n}")
    return np.frombuffer(raw, dtype="<f8", offset=off).reshape(dims).astype(np.float64)


def save_image_dir(directory, images: np.ndarray):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(images))))
    for i, img in enumerate(images):
        (d / f"{i:0{width}d}.degt").write_bytes(tensor_to_bytes(img))


def load_image_dir(directory, value_range=(0.0, 1.0), name=None) -> Dataset:
    d = Path(directory)
    files = sorted(d.glob("*.degt"))
    if not files:
        raise FileNotFoundError(f"no .degt tensors in {d}")
    imgs = np.stack([tensor_from_bytes(f.read_bytes()) for f in files])
    if imgs.ndim == 3:
        imgs = imgs[:, None]
    return Dataset(imgs, None, name or d.name, value_range)


def write_pnm(path, image: np.ndarray, value_range=(0.0, 1.0)):
    """Write one [C,H,W] image as binary PGM (C=1) or PPM (C=3)."""
    lo, hi = value_range
    img = np.clip((np.asarray(image) - lo) / (hi - lo), 0, 1)
    pix = np.round(img * 255).astype(np.uint8)
    c, h, w = pix.shape
    if c == 1:
        header, body = b"P5", pix[0].tobytes()
    elif c == 3:
        header, body = b"P6", pix.transpose(1, 2, 0).tobytes()
    else:
        raise InvalidArgument(f"PNM export needs 1 or 3 channels, got {c}")
    Path(path).write_bytes(header + f"\n{w} {h}\n255\n".encode() + body)


def image_grid(images: np.ndarray, cols=8, pad=1, fill=0.0) -> np.ndarray:
    n, c, h, w = images.shape
    rows = -(-n // cols)
    grid = np.full((c, rows * (h + pad) + pad, cols * (w + pad) + pad), fill)
    for i, img in enumerate(images):
        r, k = divmod(i, cols)
        grid[:, pad + r * (h + pad): pad + r * (h + pad) + h, pad + k * (w + pad): pad + k * (w + pad) + w] = img
    return grid


# -- batching ----------------------------------------------------------------


@dataclass
class BatchPlan:
    batch_size: int
    seed: int = 0
    drop_last: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise InvalidArgument(f"batch size must be >= 2 (batch norm), got {self.batch_size}")


def batch_indices(n: int, batch_size: int, rng: Rng, drop_last=True):
    if batch_size > n:
        raise InvalidArgument(f"batch size {batch_size} exceeds dataset size {n}")
    perm = rng.permutation(n)
    stop = n - n % batch_size if drop_last else n
    for i in range(0, stop, batch_size):
        yield perm[i:i + batch_size]


def batches(ds: Dataset, plan: BatchPlan, epoch=0):
    """Yield ``(images, labels)`` for one epoch; order is fixed by seed and epoch."""
    rng = Rng(plan.seed).child(f"epoch{epoch}")
    for idx in batch_indices(len(ds), plan.batch_size, rng, plan.drop_last):
        yield ds.images[idx], (None if ds.labels is None else ds.labels[idx])


# -- synthetic manifolds -----------------------------------------------------------

MANIFOLDS = ("line", "gaussian_d", "sphere_d", "swiss_roll")


def synth_manifold(kind, n, ambient_dim, intrinsic_dim=None, noise_sigma=0.0, rng=None) -> np.ndarray:
    """``n`` points on a manifold of known dimension, randomly rotated into R^ambient.

    line: uniform on a segment of length 10; gaussian_d: standard normal in d
    dims; sphere_d: uniform on the unit d-sphere (embedded in d+1 dims);
    swiss_roll: the classic 2-d roll (embedded in 3 dims).
    """
    rng = rng or Rng(0)
    if kind not in MANIFOLDS:
        raise InvalidArgument(f"unknown manifold {kind!r}; expected one of {MANIFOLDS}")
    d = {"line": 1, "swiss_roll": 2}.get(kind, intrinsic_dim)
    if d is None or d < 1:
        raise InvalidArgument(f"{kind} needs intrinsic_dim >= 1")
    if kind == "line":
        local = rng.uniform((n, 1), 0.0, 10.0)
    elif kind == "gaussian_d":
        local = rng.normal((n, d))
    elif kind == "sphere_d":
        g = rng.normal((n, d + 1))
        local = g / np.linalg.norm(g, axis=1, keepdims=True)
    else:
        t = 1.5 * np.pi * (1 + 2 * rng.uniform((n,)))
        h = 21 * rng.uniform((n,))
        local = np.stack([t * np.cos(t), h, t * np.sin(t)], axis=1)
    if local.shape[1] > ambient_dim:
        raise InvalidArgument(f"intrinsic_dim {d} (embedding dim {local.shape[1]}) exceeds ambient_dim {ambient_dim}")
    pts = np.zeros((n, ambient_dim))
    pts[:, :local.shape[1]] = local
    pts = pts @ rng.orthogonal(ambient_dim).T
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.normal(pts.shape)
    return pts


# -- fetching ----------------------------------------------------------------


def file_digest(path, algorithm="sha256") -> str:
    h = hashlib.new(algorithm)
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ChecksumMismatch(FormatError):
    def __init__(self, path, expected, actual, quarantined):
        super().__init__(f"checksum mismatch for {path}: expected {expected}, got {actual}; moved to {quarantined}")
        self.quarantined = quarantined


def verify(path, sha256=None, md5=None):
    """Check ``path`` against the given digests; quarantine it on mismatch."""
    path = Path(path)
    for algo, expected in (("sha256", sha256), ("md5", md5)):
        if expected is None:
            continue
        actual = file_digest(path, algo)
        if actual != expected.lower():
            q = path.with_name(path.name + ".quarantine")
            path.replace(q)
            raise ChecksumMismatch(path, expected, actual, q)
    return path


def fetch(url: str, dest, sha256: str | None = None, md5: str | None = None):
    """Download ``url`` to ``dest`` and verify it.

    A file failing verification is renamed with a ``.quarantine`` suffix.
    """
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    log.info("fetching %s", url)
    with urllib.request.urlopen(url) as resp, open(dest, "wb") as out:
        while chunk := resp.read(1 << 20):
            out.write(chunk)
    return verify(dest, sha256, md5)
