import os
from pathlib import Path

import pytest
from hypothesis import settings

from degan import persist
from degan.data import load_mnist
from degan.numcore.rng import Rng

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def _need_mnist():
    if not (MNIST_DIR / "train-images-idx3-ubyte.gz").exists():
        pytest.skip("MNIST IDX files not present; run scripts/make_mnist_idx.py")


@pytest.fixture(scope="session")
def mnist_dir():
    _need_mnist()
    return MNIST_DIR


@pytest.fixture(scope="session")
def mnist500(mnist_dir):
    return load_mnist(mnist_dir, subset_size=500)


@pytest.fixture(scope="session")
def mnist_test(mnist_dir):
    return load_mnist(mnist_dir, split="test")


@pytest.fixture(scope="session")
def trained_vae(mnist500):
    """VAE trained 1 epoch on the 500-image subset, plus its loss history."""
    from degan.vae import build_vae, train_vae

    vae = build_vae(rng=Rng(0).child("vae"))
    hist = train_vae(mnist500.images, vae, Rng(0).child("vae-train"), epochs=1, batch_size=8)
    return vae, hist


@pytest.fixture(scope="session")
def classifier(mnist_dir, tmp_path_factory):
    """Classifier on the 4000/1000 split, trained once per session and checkpointed."""
    from degan.metrics import train_classifier

    train = load_mnist(mnist_dir)
    test = load_mnist(mnist_dir, split="test")
    clf = train_classifier(train, test, Rng(0))
    path = tmp_path_factory.mktemp("clf") / "classifier.degc"
    persist.save_model(path, clf)
    return clf, path
