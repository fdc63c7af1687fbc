import gzip
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degan import data
from degan.errors import FormatError, InvalidArgument
from degan.numcore.rng import Rng


def _write_fake_mnist(d, n=30, split="train"):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labs = (np.arange(n) % 10).astype(np.uint8)
    prefix = "train" if split == "train" else "t10k"
    data.write_idx(d / f"{prefix}-images-idx3-ubyte.gz", imgs, compress=True)
    data.write_idx(d / f"{prefix}-labels-idx1-ubyte", labs)
    return imgs, labs


# -- IDX ---------------------------------------------------------------------------


def test_idx_round_trip(tmp_path):
    imgs, labs = _write_fake_mnist(tmp_path)
    ds = data.load_mnist(tmp_path)
    assert ds.images.shape == (30, 1, 28, 28)
    assert np.array_equal(ds.images[:, 0], imgs / 255.0)
    assert np.array_equal(ds.labels, labs)


def test_idx_bad_magic_names_both():
    raw = struct.pack(">IIII", 0x00000801, 1, 28, 28) + bytes(784)
    with pytest.raises(FormatError, match="expected 0x00000803, got 0x00000801"):
        data.parse_idx(raw, data.IDX_IMAGES_MAGIC)


def test_idx_truncation_reports_offset():
    raw = struct.pack(">IIII", 0x00000803, 2, 28, 28) + bytes(1000)
    with pytest.raises(FormatError, match="byte offset 1016"):
        data.parse_idx(raw, data.IDX_IMAGES_MAGIC)
    with pytest.raises(FormatError, match="byte offset 6"):
        data.parse_idx(raw[:6], data.IDX_IMAGES_MAGIC)


def test_subset_deterministic(tmp_path):
    _write_fake_mnist(tmp_path)
    a = data.load_mnist(tmp_path, subset_size=12, seed=3)
    b = data.load_mnist(tmp_path, subset_size=12, seed=3)
    c = data.load_mnist(tmp_path, subset_size=12, seed=4)
    assert np.array_equal(a.images, b.images)
    assert not np.array_equal(a.labels, c.labels) or not np.array_equal(a.images, c.images)
    with pytest.raises(InvalidArgument):
        data.load_mnist(tmp_path, subset_size=31)


def test_missing_mnist_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        data.load_mnist(tmp_path / "nope")


def test_bundled_mnist_split(mnist_dir):
    train = data.load_mnist(mnist_dir)
    test = data.load_mnist(mnist_dir, split="test")
    assert train.images.shape == (4000, 1, 28, 28) and len(test) == 1000
    assert 0.0 == train.images.min() and train.images.max() == 1.0
    assert np.all(np.bincount(train.labels) == 400)
    assert "4000 × 1×28×28, range [0,1]" in train.describe()


def test_split_disjoint():
    ds = data.Dataset(np.arange(20.0).reshape(20, 1, 1, 1) / 20)
    tr, te = data.split(ds, 5)
    assert len(tr) == 15 and len(te) == 5
    assert not set(tr.images.ravel()) & set(te.images.ravel())


# -- CIFAR -------------------------------------------------------------------------


def test_cifar_record_layout(tmp_path):
    rec = bytes([7]) + bytes([10] * 1024 + [20] * 1024 + [30] * 1024)
    (tmp_path / "data_batch_1.bin").write_bytes(rec * 2)
    ds = data.load_cifar10(tmp_path)
    assert ds.images.shape == (2, 3, 32, 32)
    assert ds.labels.tolist() == [7, 7]
    assert np.allclose(ds.images[0, :, 0, 0], np.array([10, 20, 30]) / 255)


@pytest.mark.parametrize("size", [0, 3072, 3075])
def test_cifar_bad_length(size):
    with pytest.raises(FormatError):
        data.parse_cifar_records(bytes(size))


# -- raw tensors and images -------------------------------------------------------------


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 1000))
def test_raw_tensor_round_trip(shape, seed):
    a = Rng(seed).normal(tuple(shape))
    b = data.tensor_from_bytes(data.tensor_to_bytes(a))
    assert b.tobytes() == a.tobytes() and b.shape == a.shape


def test_raw_tensor_rejects_bad_magic():
    with pytest.raises(FormatError):
        data.tensor_from_bytes(b"XXXX" + bytes(12))


def test_image_dir_round_trip(tmp_path):
    imgs = Rng(0).uniform((5, 1, 4, 4))
    data.save_image_dir(tmp_path / "g", imgs)
    ds = data.load_image_dir(tmp_path / "g")
    assert ds.images.tobytes() == imgs.tobytes()


def test_pnm_headers(tmp_path):
    data.write_pnm(tmp_path / "a.pgm", np.zeros((1, 2, 3)))
    data.write_pnm(tmp_path / "b.ppm", np.ones((3, 2, 3)))
    assert (tmp_path / "a.pgm").read_bytes() == b"P5\n3 2\n255\n" + bytes(6)
    assert (tmp_path / "b.ppm").read_bytes() == b"P6\n3 2\n255\n" + bytes([255] * 18)


def test_image_grid_shape():
    g = data.image_grid(np.ones((10, 1, 4, 4)), cols=4)
    assert g.shape == (1, 3 * 5 + 1, 4 * 5 + 1)


def test_dataset_range_invariant():
    with pytest.raises(InvalidArgument):
        data.Dataset(np.full((1, 1, 2, 2), 1.5))
    ds = data.Dataset(np.full((1, 1, 2, 2), 0.25)).to_range((-1, 1))
    assert np.allclose(ds.images, -0.5) and ds.value_range == (-1, 1)


# -- batching ----------------------------------------------------------------------


def test_batch_count_drop_last():
    ds = data.Dataset(np.zeros((10, 1, 1, 1)))
    assert len(list(data.batches(ds, data.BatchPlan(3, drop_last=True)))) == 3


@given(st.integers(2, 50), st.integers(2, 9), st.integers(0, 100))
def test_batches_cover_all_indices(n, bs, seed):
    bs = min(bs, n)
    idx = np.concatenate(list(data.batch_indices(n, bs, Rng(seed), drop_last=False)))
    assert sorted(idx.tolist()) == list(range(n))


def test_batches_deterministic():
    ds = data.Dataset(np.arange(12.0).reshape(12, 1, 1, 1) / 12)
    a = [b[0].ravel().tolist() for b in data.batches(ds, data.BatchPlan(4, seed=5))]
    b = [b[0].ravel().tolist() for b in data.batches(ds, data.BatchPlan(4, seed=5))]
    assert a == b
    c = [b[0].ravel().tolist() for b in data.batches(ds, data.BatchPlan(4, seed=5), epoch=1)]
    assert a != c


def test_batch_errors():
    with pytest.raises(InvalidArgument):
        data.BatchPlan(1)
    with pytest.raises(InvalidArgument):
        list(data.batch_indices(3, 4, Rng(0)))


# -- synthetic manifolds ------------------------------------------------------------------


def test_line_is_rank_one():
    pts = data.synth_manifold("line", 200, 20, rng=Rng(0))
    assert pts.shape == (200, 20)
    sv = np.linalg.svd(pts - pts.mean(0), compute_uv=False)
    assert sv[1] < 1e-9 * sv[0]


def test_gaussian_rank():
    pts = data.synth_manifold("gaussian_d", 500, 50, 5, rng=Rng(0))
    assert np.linalg.matrix_rank(pts, tol=1e-8) == 5


def test_sphere_on_unit_sphere():
    pts = data.synth_manifold("sphere_d", 300, 3, 2, rng=Rng(0))
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)


def test_manifold_noise_and_errors():
    clean = data.synth_manifold("line", 50, 5, rng=Rng(1))
    noisy = data.synth_manifold("line", 50, 5, noise_sigma=0.1, rng=Rng(1))
    assert 0 < np.abs(noisy - clean).max() < 1
    with pytest.raises(InvalidArgument):
        data.synth_manifold("gaussian_d", 10, 3, 5)
    with pytest.raises(InvalidArgument):
        data.synth_manifold("torus", 10, 3, 2)


# -- fetch --------------------------------------------------------------------------


def test_fetch_verifies_and_quarantines(tmp_path):
    src = tmp_path / "src.bin"
    src.write_bytes(gzip.compress(b"hello"))
    good = data.file_digest(src)
    out = data.fetch(src.as_uri(), tmp_path / "dl" / "a.gz", sha256=good)
    assert out.exists()
    with pytest.raises(data.ChecksumMismatch) as e:
        data.fetch(src.as_uri(), tmp_path / "dl" / "b.gz", sha256="0" * 64)
    assert e.value.quarantined.name == "b.gz.quarantine" and e.value.quarantined.exists()
    assert not (tmp_path / "dl" / "b.gz").exists()
