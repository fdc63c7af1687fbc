"""One-epoch VAE on a digit subset, then the effect of the noise bridge.

Prints the loss trend, held-out reconstruction error against an untrained
copy, and covariance eigenvalue ratios of raw and shaped noise.

    python3 scripts/run_vae_desk.py --subset 500 --out runs/vae_desk
"""
import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from degan import persist  # noqa: E402
from degan.data import load_mnist  # noqa: E402
from degan.experiments import smoothed_decrease_fraction  # noqa: E402
from degan.noisebridge import anisotropy, shape_noise  # noqa: E402
from degan.numcore.rng import Rng  # noqa: E402
from degan.vae import build_vae, reconstruction_mse, train_vae  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data/mnist")
    ap.add_argument("--subset", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--out", default="runs/vae_desk")
    args = ap.parse_args()

    rng = Rng(args.seed)
    train = load_mnist(args.data, subset_size=args.subset).images
    test = load_mnist(args.data, split="test").images
    vae = build_vae(rng=rng.child("vae"))
    base = reconstruction_mse(vae, test)
    hist = train_vae(train, vae, rng.child("vae-train"), epochs=args.epochs, batch_size=8)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "vae_losses.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("step", "loss", "kl", "recon"))
        w.writerows((h["step"], h["loss"], h["kl"], h["recon"]) for h in hist)
    persist.save_model(out / "vae.degc", vae)

    print(f"{len(hist)} steps; smoothed loss decreasing in {smoothed_decrease_fraction([h['loss'] for h in hist]):.0%}"
          " of 10-step windows")
    print(f"held-out MSE {reconstruction_mse(vae, test):.4f} (untrained {base:.4f})")
    z = rng.child("noise").normal((args.samples, vae.latent_dim))
    print(f"eigenvalue ratio: raw {anisotropy(z):.2f}, shaped {anisotropy(shape_noise(vae, z)):.3g}")


if __name__ == "__main__":
    main()
