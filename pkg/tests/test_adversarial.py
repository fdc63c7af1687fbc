import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import ks_2samp

from degan import persist
from degan.adversarial import (HISTORY_FIELDS, GanHyperparams, GanModel, LossWeights, adversarial_loss,
                               build_gan, discriminator_loss, generate, generator_loss, hidden_loss,
                               train_degan)
from degan.errors import ConfigurationError, InvalidArgument, TrainingError
from degan.noisebridge import noise_source
from degan.numcore.optim import sgd_step
from degan.numcore.rng import Rng
from degan.numcore.tensor import Tensor, backward, concat

EPS = 1e-7
probs = arrays(np.float64, 6, elements=st.floats(0, 1))
acts = arrays(np.float64, (3, 5), elements=st.floats(-100, 100))


# -- losses -------------------------------------------------------------------------


def test_discriminator_loss_oracles():
    assert discriminator_loss(np.array([0.5]), np.array([0.5])).item() == pytest.approx(2 * math.log(2), abs=1e-12)
    assert discriminator_loss(np.array([1 - EPS]), np.array([EPS])).item() < 1e-6
    worst = discriminator_loss(np.array([EPS]), np.array([1 - EPS])).item()
    assert worst == pytest.approx(2 * math.log(1 / EPS), rel=1e-6)


def test_adversarial_loss_oracles():
    assert adversarial_loss(np.array([0.5]), np.array([0.5])).item() == pytest.approx(-1.3863, abs=1e-4)
    assert -1e-6 < adversarial_loss(np.array([1.0]), np.array([0.0])).item() <= 0


@given(probs, probs)
def test_adversarial_is_negated_discriminator(a, b):
    assert adversarial_loss(a, b).item() == -discriminator_loss(a, b).item()
    assert adversarial_loss(a, b).item() <= 0


@pytest.mark.parametrize("bad", [[-0.1], [1.2], [np.nan]])
def test_probabilities_validated(bad):
    with pytest.raises(InvalidArgument):
        discriminator_loss(np.array(bad), np.array([0.5]))


def test_hidden_loss_oracles():
    h = Rng(0).normal((4, 7))
    assert hidden_loss(h, h).item() == 0.0
    assert hidden_loss(np.array([[3.0, 4.0]]), np.zeros((1, 2))).item() == 5.0
    with pytest.raises(InvalidArgument):
        hidden_loss(np.zeros((2, 3)), np.zeros((2, 4)))


@given(acts, acts, acts)
def test_hidden_loss_pseudometric(a, b, c):
    ab, ba = hidden_loss(a, b).item(), hidden_loss(b, a).item()
    assert ab >= 0 and ab == pytest.approx(ba, abs=1e-12)
    assert hidden_loss(a, c).item() <= ab + hidden_loss(b, c).item() + 1e-9


@given(acts, acts, st.floats(-5, 5))
def test_hidden_loss_homogeneous(a, b, c):
    assert hidden_loss(a * c, b * c).item() == pytest.approx(abs(c) * hidden_loss(a, b).item(), rel=1e-9, abs=1e-9)


def test_hidden_loss_zero_gradient_at_identical_rows():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    (g,) = backward(hidden_loss(np.ones((2, 3)), a), [a])
    assert np.all(np.isfinite(g)) and np.all(g == 0)


def test_generator_loss_oracles():
    h = np.zeros((1, 3))
    assert generator_loss(np.array([1 - EPS]), h, h, LossWeights(1, 0)).item() < 1e-6
    hr, hg = Rng(0).normal((3, 4)), Rng(1).normal((3, 4))
    assert generator_loss(np.full(3, 0.3), hr, hg, LossWeights(0, 2)).item() == 2 * hidden_loss(hr, hg).item()
    assert generator_loss(np.array([0.5]), h, h).item() == pytest.approx(math.log(2), abs=1e-12)


@pytest.mark.parametrize("l1,l2", [(0, 0), (-1, 1), (1, -0.5)])
def test_loss_weights_rejected(l1, l2):
    with pytest.raises(ConfigurationError):
        LossWeights(l1, l2)


# -- model ---------------------------------------------------------------------------


def test_gan_model_validation():
    gan = build_gan(rng=Rng(0))
    assert gan.discriminator.layers[gan.probe_layer].spec.kind == "flatten"
    with pytest.raises(ConfigurationError):
        GanModel(gan.generator, gan.discriminator, len(gan.discriminator.layers) - 1, 128)
    with pytest.raises(ConfigurationError):
        build_gan(rng=Rng(0), probe_layer=99)


def test_discriminator_step_decreases_its_loss():
    gan = build_gan(rng=Rng(0))
    D = gan.discriminator
    params = D.parameters()
    real = Rng(1).uniform((8, 1, 28, 28))
    fake = generate(gan, noise_source("gaussian", Rng(2)), 8)
    snapshot = {k: v.copy() for k, v in D.state().items()}

    def loss():
        out = D(concat((Tensor(real), Tensor(fake))), training=True)
        return discriminator_loss(out[:8], out[8:])

    before = loss()
    grads = backward(before, params)
    D.load_state(snapshot)  # undo the running-stat update of the forward pass
    sgd_step(params, grads, 1e-4)
    after = loss()
    assert after.item() < before.item()


# -- training -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def gan_run(mnist500, tmp_path_factory):
    run = tmp_path_factory.mktemp("gan")
    gan = build_gan(rng=Rng(0))
    hist = train_degan(mnist500.images, gan, noise_source("gaussian", Rng(1)), GanHyperparams(), Rng(2), run)
    return gan, hist, run


def test_history_and_run_dir(gan_run):
    gan, hist, run = gan_run
    assert len(hist) == 2 * (500 // 8)
    assert all(np.isfinite(h[k]) for h in hist for k in ("d_loss", "g_loss", "adv", "hid"))
    lines = (run / "losses.csv").read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_FIELDS) and len(lines) == len(hist) + 1
    assert sorted(p.name for p in (run / "checkpoints").iterdir()) == ["gan_epoch1.degc", "gan_epoch2.degc"]
    back = persist.load_model(run / "checkpoints" / "gan_epoch2.degc", "gan")
    assert persist.state_checksum(back.state()) == persist.state_checksum(gan.state())


def test_training_deterministic(mnist500, gan_run, tmp_path):
    _, _, run = gan_run
    gan = build_gan(rng=Rng(0))
    train_degan(mnist500.images, gan, noise_source("gaussian", Rng(1)), GanHyperparams(), Rng(2), tmp_path)
    assert (tmp_path / "losses.csv").read_bytes() == (run / "losses.csv").read_bytes()


def test_generate_contract(gan_run):
    gan, _, _ = gan_run
    a = generate(gan, noise_source("gaussian", Rng(5)), 64)
    b = generate(gan, noise_source("gaussian", Rng(5)), 64)
    assert a.shape == (64, 1, 28, 28) and np.all((a >= 0) & (a <= 1))
    assert np.array_equal(a, b)
    untrained = generate(build_gan(rng=Rng(0)), noise_source("gaussian", Rng(5)), 64)
    assert ks_2samp(a.ravel(), untrained.ravel()).statistic > 0.1


def test_vae_frozen_during_gan_epoch(trained_vae, mnist500):
    vae, _ = trained_vae
    before = persist.state_checksum(vae.state())
    gan = build_gan(rng=Rng(0))
    hp = GanHyperparams(epochs=1)
    train_degan(mnist500.images[:64], gan, noise_source("decoder_encoder", Rng(1), vae), hp, Rng(2))
    assert persist.state_checksum(vae.state()) == before


def test_latent_mismatch_rejected(mnist500):
    gan = build_gan(rng=Rng(0))
    with pytest.raises(ConfigurationError):
        train_degan(mnist500.images, gan, noise_source("gaussian", Rng(0), latent_dim=64), GanHyperparams(), Rng(0))
    with pytest.raises(ConfigurationError):
        GanHyperparams(lambda1=0, lambda2=0).weights


class _PoisonedSource:
    """Gaussian noise that turns to NaN after ``good`` batches."""

    def __init__(self, good):
        self.inner, self.good, self.latent_dim = noise_source("gaussian", Rng(0)), good, 128

    def sample(self, b):
        self.good -= 1
        batch = self.inner.sample(b)
        if self.good < 0:
            batch.shaped[:] = np.nan
        return batch


def test_divergence_reports_last_checkpoint(mnist500, tmp_path):
    gan = build_gan(rng=Rng(0))
    hp = GanHyperparams(epochs=3)
    with pytest.raises(TrainingError) as e:
        train_degan(mnist500.images[:64], gan, _PoisonedSource(10), hp, Rng(0), tmp_path)
    assert e.value.checkpoint.name == "gan_epoch1.degc" and e.value.checkpoint.exists()
    assert e.value.step == 10
