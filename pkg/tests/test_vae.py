import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from degan import persist
from degan.errors import InvalidArgument, NumericError
from degan.numcore.rng import Rng
from degan.numcore.tensor import Tensor, backward
from degan.vae import (build_vae, encode, kl_gaussian, reconstruction_mse, reconstruction_nll,
                       reparameterize, train_vae)

small = st.floats(-3, 3, allow_nan=False)


@pytest.fixture(scope="module")
def fresh_vae():
    return build_vae(rng=Rng(11))


def test_encode_heads_and_determinism(fresh_vae):
    x = Rng(0).uniform((5, 1, 28, 28))
    mu, logvar = encode(fresh_vae, x)
    assert mu.shape == (5, 128) and logvar.shape == (5, 128)
    mu2, _ = encode(fresh_vae, x)
    assert np.array_equal(mu.data, mu2.data)
    z_mu, z_lv = encode(fresh_vae, np.zeros((2, 1, 28, 28)))
    assert np.all(np.isfinite(z_mu.data)) and np.all(np.isfinite(z_lv.data))


def test_encode_non_finite_names_layer(fresh_vae):
    x = np.zeros((2, 1, 28, 28))
    x[0, 0, 5, 5] = np.inf
    with pytest.raises(NumericError, match=r"layer \d+"):
        encode(fresh_vae, x)


def test_encode_wrong_shape(fresh_vae):
    with pytest.raises(InvalidArgument):
        encode(fresh_vae, np.zeros((2, 1, 32, 32)))


def test_reparameterize_limit_and_statistics():
    mu = Rng(0).normal((4, 3))
    z = reparameterize(mu, np.full((4, 3), -50.0), Rng(1)).data
    assert np.abs(z - mu).max() < 1e-10
    z = reparameterize(np.zeros((100000, 1)), np.zeros((100000, 1)), Rng(2)).data
    assert abs(z.mean()) < 0.05 and abs(z.var() - 1) < 0.05


def test_reparameterize_grad_wrt_mu_is_ones():
    mu = Tensor(np.zeros((3, 2)), requires_grad=True)
    lv = Tensor(np.zeros((3, 2)), requires_grad=True)
    gm, _ = backward(reparameterize(mu, lv, Rng(0)).sum(), [mu, lv])
    assert np.array_equal(gm, np.ones((3, 2)))


def test_kl_oracles():
    assert kl_gaussian(np.zeros((2, 4)), np.zeros((2, 4))).item() == 0.0
    assert kl_gaussian(np.ones((1, 1)), np.zeros((1, 1))).item() == pytest.approx(0.5, abs=1e-15)


@given(arrays(np.float64, (3, 4), elements=small), arrays(np.float64, (3, 4), elements=small))
def test_kl_nonnegative(mu, lv):
    v = kl_gaussian(mu, lv).item()
    assert v >= 0
    if v == 0:
        assert np.all(mu == 0) and np.all(lv == 0)


def test_kl_matches_monte_carlo():
    rng = Rng(5)
    mu, lv = rng.normal((1, 3)) * 0.7, rng.normal((1, 3)) * 0.5
    sd = np.exp(lv / 2)
    z = mu + sd * rng.normal((400000, 3))
    log_q = -0.5 * (((z - mu) / sd) ** 2 + lv + np.log(2 * np.pi))
    log_p = -0.5 * (z ** 2 + np.log(2 * np.pi))
    mc = (log_q - log_p).sum(axis=1).mean()
    assert kl_gaussian(mu, lv).item() == pytest.approx(mc, rel=0.02)


def test_mse_head_perfect_reconstruction_is_zero():
    vae = build_vae("cifar10", latent_dim=8, width_mult=0.125, rng=Rng(0))
    assert vae.likelihood == "mse"
    x = Rng(0).uniform((2, 3, 32, 32), -1, 1)
    loss = reconstruction_nll(vae, Tensor(x), x) + kl_gaussian(np.zeros((2, 8)), np.zeros((2, 8)))
    assert loss.item() == 0.0


def test_training_reduces_loss_and_error(trained_vae, mnist500, mnist_test):
    vae, hist = trained_vae
    losses = np.array([h["loss"] for h in hist])
    assert losses[-10:].mean() < losses[:10].mean()
    base = reconstruction_mse(build_vae(rng=Rng(0).child("vae")), mnist_test.images[:300])
    assert reconstruction_mse(vae, mnist_test.images[:300]) <= 0.5 * base


def test_checkpoint_reload_bit_identical_encode(trained_vae, tmp_path, mnist_test):
    vae, _ = trained_vae
    persist.save_model(tmp_path / "v.degc", vae)
    back = persist.load_model(tmp_path / "v.degc", "vae")
    x = mnist_test.images[:8]
    assert encode(back, x)[0].data.tobytes() == encode(vae, x)[0].data.tobytes()


def test_training_deterministic(mnist500):
    def run():
        v = build_vae(rng=Rng(3))
        return train_vae(mnist500.images[:64], v, Rng(4), epochs=1, batch_size=8)

    assert run() == run()


def test_heavier_kl_weight_gives_smaller_kl(mnist500):
    kls = []
    for w in (1.0, 2.0):
        v = build_vae(rng=Rng(3))
        hist = train_vae(mnist500.images, v, Rng(4), epochs=2, batch_size=8, kl_weight=w)
        kls.append(np.mean([h["kl"] for h in hist[-20:]]))
    assert kls[1] <= kls[0]


def test_empty_dataset_rejected(fresh_vae):
    with pytest.raises(InvalidArgument):
        train_vae(np.zeros((0, 1, 28, 28)), fresh_vae, Rng(0))
