"""Decoder-encoder noise shaping.

A trained VAE is run backwards relative to its training direction: Gaussian
noise goes through the decoder to an image, and the encoder maps that image
back to a latent code. The code has the same dimension as the input noise but
carries structure learned from the data. The VAE is never updated here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidArgument
from .numcore.rng import Rng
from .numcore.tensor import no_grad
from .vae import VaeModel, decode, encode, reparameterize

NOISE_KINDS = ("gaussian", "decoder_encoder")


@dataclass
class NoiseBatch:
    raw: np.ndarray
    shaped: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.raw.shape != self.shaped.shape:
            raise InvalidArgument(f"raw {self.raw.shape} and shaped {self.shaped.shape} noise differ in shape")


def shape_noise(vae: VaeModel, z_n, mode="mean", rng: Rng | None = None, batch=512) -> np.ndarray:
    """Map Gaussian noise ``z_n`` [B, latent] to encoder(decoder(z_n)).

    ``mode="mean"`` returns the encoder's mean head; ``"sample"`` draws from
    the encoder's posterior and needs ``rng``.
    """
    z_n = np.asarray(z_n, dtype=np.float64)
    if z_n.ndim != 2 or z_n.shape[1] != vae.latent_dim:
        raise InvalidArgument(f"noise must be [B,{vae.latent_dim}], got {list(z_n.shape)}")
    if mode not in ("mean", "sample"):
        raise InvalidArgument(f"mode must be 'mean' or 'sample', got {mode!r}")
    if mode == "sample" and rng is None:
        raise InvalidArgument("sample mode needs an rng")
    out = []
    with no_grad():
        for i in range(0, len(z_n), batch):
            x_hat = decode(vae, z_n[i:i + batch])
            mu, logvar = encode(vae, x_hat)
            out.append(mu.data if mode == "mean" else reparameterize(mu, logvar, rng).data)
    return np.concatenate(out)


class NoiseSource:
    """Repeatable sampler of generator inputs.

    ``gaussian`` returns z_n unchanged; ``decoder_encoder`` returns the shaped
    noise alongside it.
    """

    def __init__(self, kind: str, rng: Rng, latent_dim: int = 128, vae: VaeModel | None = None,
                 mode: str = "mean"):
        if kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
        if kind == "decoder_encoder":
            if vae is None:
                raise ConfigurationError("decoder_encoder noise needs a trained VAE")
            latent_dim = vae.latent_dim
        self.kind, self.vae, self.mode, self.latent_dim = kind, vae, mode, latent_dim
        self._rng = rng
        self._shape_rng = rng.child("posterior")

    def sample(self, batch_size: int) -> NoiseBatch:
        raw = self._rng.normal((batch_size, self.latent_dim))
        if self.kind == "gaussian":
            return NoiseBatch(raw, raw, "gaussian")
        shaped = shape_noise(self.vae, raw, self.mode, self._shape_rng)
        return NoiseBatch(raw, shaped, "decoder_encoder")


def noise_source(kind: str, rng: Rng, vae: VaeModel | None = None, latent_dim: int = 128,
                 mode: str = "mean") -> NoiseSource:
    return NoiseSource(kind, rng, latent_dim, vae, mode)


def covariance_eigenvalues(z: np.ndarray) -> np.ndarray:
    """Eigenvalues of the sample covariance of ``z``, descending."""
    return np.linalg.eigvalsh(np.cov(z, rowvar=False))[::-1]


def anisotropy(z: np.ndarray) -> float:
    """Ratio of largest to smallest covariance eigenvalue."""
    ev = covariance_eigenvalues(z)
    return float(ev[0] / max(ev[-1], np.finfo(float).tiny))
