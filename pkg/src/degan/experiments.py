"""Desk-scale experiment protocols shared by the scripts and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversarial import GanHyperparams, build_gan, generate, train_degan
from .metrics import Classifier, quality_score
from .noisebridge import noise_source
from .numcore.rng import Rng
from .vae import build_vae, train_vae


@dataclass
class NoiseComparison:
    seed: int
    de: float  # recognizability of decoder-encoder samples after the last epoch
    gaussian: float
    de_curve: list
    gaussian_curve: list

    @property
    def de_wins(self) -> bool:
        return self.de >= self.gaussian


def smoothed_decrease_fraction(losses, window=10) -> float:
    """Share of steps t where the ``window``-step moving average at t+window is below its value at t."""
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) < 2 * window:
        raise ValueError(f"need at least {2 * window} losses, got {len(losses)}")
    sm = np.convolve(losses, np.ones(window) / window, mode="valid")
    return float(np.mean(sm[window:] < sm[:-window]))


def compare_noise(images: np.ndarray, clf: Classifier, seed: int, epochs=2, n_eval=500,
                  hp: GanHyperparams | None = None) -> NoiseComparison:
    """Train one GAN per noise kind from identical initial weights and batch order.

    The VAE for the decoder-encoder source is trained for one epoch on the same
    images. Recognizability is measured after every epoch on ``n_eval`` samples.
    """
    hp = hp or GanHyperparams(epochs=epochs)
    rng = Rng(seed)
    vae = build_vae(rng=rng.child("vae"))
    train_vae(images, vae, rng.child("vae-train"), epochs=1, batch_size=8)
    curves = {}
    for kind in ("decoder_encoder", "gaussian"):
        gan = build_gan(rng=rng.child("gan"))
        source = noise_source(kind, rng.child("noise"), vae if kind == "decoder_encoder" else None)
        curve = []

        def score(epoch, model, kind=kind, curve=curve):
            src = noise_source(kind, rng.child("eval"), vae if kind == "decoder_encoder" else None)
            curve.append(quality_score(clf, generate(model, src, n_eval)).overall)

        train_degan(images, gan, source, hp, rng.child("train"), on_epoch=score)
        curves[kind] = curve
    de, ga = curves["decoder_encoder"], curves["gaussian"]
    return NoiseComparison(seed, de[-1], ga[-1], de, ga)
