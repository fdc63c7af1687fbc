import numpy as np
import pytest

from degan.errors import ConfigurationError, InvalidArgument
from degan.noisebridge import NoiseBatch, anisotropy, covariance_eigenvalues, noise_source, shape_noise
from degan.numcore.nn import LayerSpec, NetworkSpec, build_network
from degan.numcore.rng import Rng
from degan.vae import VaeModel


def _identity_like_vae(latent=4):
    """Decoder reshapes z to a 1x2x2 image; encoder flattens and applies one dense layer."""
    dec = build_network(NetworkSpec((latent,), [LayerSpec("reshape", shape=(1, 2, 2))]), Rng(0))
    enc = build_network(NetworkSpec((1, 2, 2), [LayerSpec("flatten"), LayerSpec("dense", units=2 * latent)]), Rng(1))
    return VaeModel(enc, dec, latent, (1, 2, 2))


def test_shape_preserved(trained_vae):
    vae, _ = trained_vae
    z = Rng(0).normal((16, 128))
    assert shape_noise(vae, z).shape == (16, 128)
    assert shape_noise(vae, z, "sample", Rng(1)).shape == (16, 128)


def test_identity_vae_returns_mean_head():
    vae = _identity_like_vae()
    z = Rng(2).normal((5, 4))
    w, b = (p.data for p in vae.encoder.parameters())
    assert np.array_equal(shape_noise(vae, z), (z @ w + b)[:, :4])


def test_shape_noise_errors():
    vae = _identity_like_vae()
    with pytest.raises(InvalidArgument):
        shape_noise(vae, np.zeros((2, 5)))
    with pytest.raises(InvalidArgument):
        shape_noise(vae, np.zeros((2, 4)), mode="sample")
    with pytest.raises(InvalidArgument):
        shape_noise(vae, np.zeros((2, 4)), mode="median")


def test_gaussian_source():
    b = noise_source("gaussian", Rng(0), latent_dim=8).sample(3)
    assert b.provenance == "gaussian" and np.array_equal(b.raw, b.shaped)


def test_decoder_encoder_source_matches_pipeline():
    vae = _identity_like_vae()
    b = noise_source("decoder_encoder", Rng(7), vae).sample(6)
    assert b.provenance == "decoder_encoder"
    z = Rng(7).normal((6, 4))
    assert np.array_equal(b.raw, z)
    assert np.array_equal(b.shaped, shape_noise(vae, z))


def test_same_seed_same_batches():
    vae = _identity_like_vae()
    a, b = (noise_source("decoder_encoder", Rng(3), vae) for _ in range(2))
    for _ in range(3):
        x, y = a.sample(4), b.sample(4)
        assert np.array_equal(x.raw, y.raw) and np.array_equal(x.shaped, y.shaped)


def test_source_errors():
    with pytest.raises(ConfigurationError):
        noise_source("decoder_encoder", Rng(0))
    with pytest.raises(ConfigurationError):
        noise_source("uniform", Rng(0))
    with pytest.raises(InvalidArgument):
        NoiseBatch(np.zeros((2, 3)), np.zeros((2, 4)), "gaussian")


def test_anisotropy_of_isotropic_noise():
    z = Rng(0).normal((10000, 4))
    ev = covariance_eigenvalues(z)
    assert np.all(np.diff(ev) <= 0)
    assert 1 <= anisotropy(z) < 1.2


def test_trained_vae_makes_noise_anisotropic(trained_vae):
    vae, _ = trained_vae
    z = Rng(1).normal((10000, 128))
    assert anisotropy(shape_noise(vae, z)) >= 2 * anisotropy(z)
