"""Decoder-encoder vs gaussian noise on a 500-digit subset, several seeds.

Trains the classifier (or loads --classifier), then for each seed a VAE and
two GANs from the same initial weights. Writes a CSV of recognizability per
epoch and prints the win count.

    python3 scripts/run_de_vs_gaussian.py --seeds 5 --out runs/de_vs_gaussian.csv
"""
import argparse
import csv
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from degan import persist  # noqa: E402
from degan.data import load_mnist  # noqa: E402
from degan.experiments import compare_noise  # noqa: E402
from degan.metrics import train_classifier  # noqa: E402
from degan.numcore.rng import Rng  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data/mnist")
    ap.add_argument("--classifier", help="classifier checkpoint; trained and saved next to --out if absent")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--subset", type=int, default=500)
    ap.add_argument("--out", default="runs/de_vs_gaussian.csv")
    args = ap.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.classifier and Path(args.classifier).exists():
        clf = persist.load_model(args.classifier, "classifier")
    else:
        clf = train_classifier(load_mnist(args.data), load_mnist(args.data, split="test"), Rng(0))
        persist.save_model(args.classifier or out.with_name("classifier.degc"), clf)
    print(f"classifier test accuracy {clf.test_accuracy:.4f}")

    images = load_mnist(args.data, subset_size=args.subset).images
    wins = 0
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("seed", "epoch", "decoder_encoder", "gaussian"))
        for seed in range(args.seeds):
            t = time.perf_counter()
            r = compare_noise(images, clf, seed, epochs=args.epochs)
            for e, (a, b) in enumerate(zip(r.de_curve, r.gaussian_curve), 1):
                w.writerow((seed, e, a, b))
            wins += r.de_wins
            print(f"seed {seed}: DE {r.de:.3f}  gaussian {r.gaussian:.3f}  ({time.perf_counter() - t:.0f}s)")
    print(f"DE >= gaussian on {wins}/{args.seeds} seeds; curves in {out}")


if __name__ == "__main__":
    main()
