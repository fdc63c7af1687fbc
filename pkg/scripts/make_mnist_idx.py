"""Build IDX-format MNIST files from the 5000-digit sample bundled in mlxtend.

Used when the canonical MNIST files cannot be downloaded. The sample is split
into disjoint train (4000) and t10k (1000) files, class-balanced by seed.

    python scripts/make_mnist_idx.py [--wheel PATH] [--out data/mnist]

Without --wheel, ``pip download mlxtend`` fetches the wheel into a temp dir.
"""
import argparse
import gzip
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from degan.data import write_idx  # noqa: E402
from degan.numcore.rng import Rng  # noqa: E402

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    wheel = args.wheel
    if wheel is None:
        tmp = tempfile.mkdtemp()
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend==0.24.0", "-d", tmp],
                       check=True)
        wheel = next(Path(tmp).glob("mlxtend-*.whl"))
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",").astype(np.uint8)
    images, labels = table[:, :-1].reshape(-1, 28, 28), table[:, -1]

    rng = Rng(args.seed)
    per_class = args.test // 10
    test_idx = np.concatenate([rng.choice(np.flatnonzero(labels == c).size, per_class) + np.flatnonzero(labels == c)[0]
                               for c in range(10)])
    mask = np.zeros(len(labels), bool)
    mask[test_idx] = True
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, sel in (("train", ~mask), ("t10k", mask)):
        order = rng.permutation(int(sel.sum()))
        write_idx(out / f"{prefix}-images-idx3-ubyte.gz", images[sel][order], compress=True)
        write_idx(out / f"{prefix}-labels-idx1-ubyte.gz", labels[sel][order], compress=True)
        print(f"{prefix}: {int(sel.sum())} digits")


if __name__ == "__main__":
    main()
