"""Intrinsic-dimension curves for the synthetic manifolds and an MNIST subset.

    python3 scripts/run_idim.py --mnist-sample 2000 --out runs/idim
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from degan.data import load_mnist, synth_manifold  # noqa: E402
from degan.idim import estimate_idim, recommend_noise_dim  # noqa: E402
from degan.numcore.rng import Rng  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data/mnist")
    ap.add_argument("--mnist-sample", type=int, default=2000)
    ap.add_argument("--k-min", type=int, default=5)
    ap.add_argument("--k-max", type=int, default=30)
    ap.add_argument("--out", default="runs/idim")
    args = ap.parse_args()

    inputs = {
        "line_R20": synth_manifold("line", 2000, 20, rng=Rng(1)),
        "gauss5_R50": synth_manifold("gaussian_d", 5000, 50, 5, rng=Rng(1)),
        "sphere2_R3": synth_manifold("sphere_d", 2000, 3, 2, rng=Rng(1)),
    }
    if Path(args.data).exists():
        inputs["mnist"] = load_mnist(args.data, subset_size=args.mnist_sample).images.reshape(args.mnist_sample, -1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, pts in inputs.items():
        curve = estimate_idim(pts, args.k_min, args.k_max)
        curve.write_csv(out / f"{name}.csv")
        dim, _ = recommend_noise_dim(curve)
        summary[name] = {"M_final": curve.M_final, "n": curve.n_points, "recommended_noise_dim": dim}
        print(f"{name:<12} M_final {curve.M_final:6.2f}  noise dim {dim}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
