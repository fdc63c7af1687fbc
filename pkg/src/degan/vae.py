"""Variational autoencoder with a diagonal-Gaussian latent.

The encoder's last dense layer carries the mean and log-variance heads side by
side; ``encode`` splits them. The decoder ends in the dataset's output
activation and is flattened, so ``decode`` reshapes back to images.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericError, TrainingError
from .numcore import functional as F
from .numcore import presets
from .numcore.nn import Network, NetworkSpec, build_network
from .numcore.optim import make_optimizer
from .numcore.rng import Rng
from .numcore.tensor import Tensor, as_tensor, backward, no_grad


@dataclass
class VaeModel:
    encoder: Network
    decoder: Network
    latent_dim: int
    image_shape: tuple
    # "bernoulli" for [0,1] data behind a sigmoid head, "mse" for [-1,1] behind tanh
    likelihood: str = "bernoulli"

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def state(self) -> dict:
        out = {f"encoder.{k}": v for k, v in self.encoder.state().items()}
        out.update({f"decoder.{k}": v for k, v in self.decoder.state().items()})
        return out

    def load_state(self, state: dict):
        self.encoder.load_state({k[8:]: v for k, v in state.items() if k.startswith("encoder.")})
        self.decoder.load_state({k[8:]: v for k, v in state.items() if k.startswith("decoder.")})

    def meta(self) -> dict:
        return {"encoder": self.encoder.spec.to_dict(), "decoder": self.decoder.spec.to_dict(),
                "latent_dim": self.latent_dim, "image_shape": list(self.image_shape),
                "likelihood": self.likelihood}

    @classmethod
    def from_meta(cls, meta: dict, rng=None) -> "VaeModel":
        rng = rng or Rng(0)
        return cls(build_network(NetworkSpec.from_dict(meta["encoder"]), rng.child("encoder")),
                   build_network(NetworkSpec.from_dict(meta["decoder"]), rng.child("decoder")),
                   meta["latent_dim"], tuple(meta["image_shape"]), meta["likelihood"])


def build_vae(dataset="mnist", latent_dim=128, width_mult=0.25, rng=None,
              encoder_spec=None, decoder_spec=None) -> VaeModel:
    rng = rng or Rng(0)
    enc = encoder_spec or presets.encoder(dataset, latent_dim, width_mult)
    dec = decoder_spec or presets.decoder(dataset, latent_dim, width_mult)
    encoder = build_network(enc, rng.child("encoder"))
    decoder = build_network(dec, rng.child("decoder"))
    if encoder.output_shape != (2 * latent_dim,):
        raise InvalidArgument(f"encoder must emit 2*latent_dim={2 * latent_dim} units, got {encoder.output_shape}")
    if int(np.prod(decoder.output_shape)) != int(np.prod(enc.input_shape)):
        raise InvalidArgument("decoder output size does not match the encoder's input shape")
    head = presets.OUTPUT_ACTIVATION.get(dataset, "sigmoid")
    return VaeModel(encoder, decoder, latent_dim, tuple(enc.input_shape),
                    "bernoulli" if head == "sigmoid" else "mse")


def _check_finite(net: Network, x, training, rng):
    """Re-run ``net`` layer by layer to name the first non-finite output."""
    x = as_tensor(x)
    with no_grad():
        for layer in net.layers:
            x = layer.forward(x, training, rng)
            if not np.all(np.isfinite(x.data)):
                raise NumericError(f"non-finite activations at layer {layer.index} ({layer.spec.kind}) of {net.spec.name}")


def encode(model: VaeModel, x, training=False, rng=None):
    """Return the (mu, logvar) heads, each [B, latent_dim]."""
    x = as_tensor(x)
    if tuple(x.shape[1:]) != tuple(model.image_shape):
        raise InvalidArgument(f"encoder expects images of shape {model.image_shape}, got {x.shape[1:]}")
    h = model.encoder(x, training=training, rng=rng)
    if not np.all(np.isfinite(h.data)):
        _check_finite(model.encoder, x, training, rng)
    L = model.latent_dim
    return h[:, :L], h[:, L:]


def decode(model: VaeModel, z, training=False):
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise InvalidArgument(f"decoder expects [B,{model.latent_dim}] latents, got {list(z.shape)}")
    out = model.decoder(z, training=training)
    return out.reshape((z.shape[0],) + tuple(model.image_shape))


def reparameterize(mu, logvar, rng: Rng) -> Tensor:
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, I)."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise InvalidArgument(f"mu {mu.shape} and logvar {logvar.shape} differ in shape")
    eps = rng.normal(mu.shape)
    return mu + (logvar * 0.5).exp() * eps


def kl_gaussian(mu, logvar) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over latents, averaged over batch."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise InvalidArgument(f"mu {mu.shape} and logvar {logvar.shape} differ in shape")
    per = mu * mu + logvar.exp() - 1.0 - logvar
    return per.sum() * (0.5 / mu.shape[0])


def reconstruction_nll(model: VaeModel, x_hat, x) -> Tensor:
    x_hat = x_hat.reshape(x_hat.shape[0], -1)
    x = as_tensor(x).reshape(x.shape[0], -1)
    if model.likelihood == "bernoulli":
        return F.binary_cross_entropy(x_hat, x)
    return F.mse_sum(x_hat, x)


def vae_loss(model: VaeModel, x, rng: Rng, kl_weight=1.0, training=True):
    """Negative ELBO. Returns ``(loss, kl, recon)`` tensors."""
    mu, logvar = encode(model, x, training=training, rng=rng)
    z = reparameterize(mu, logvar, rng)
    x_hat = decode(model, z, training=training)
    kl = kl_gaussian(mu, logvar)
    recon = reconstruction_nll(model, x_hat, x)
    loss = recon + kl * kl_weight
    if not np.isfinite(loss.item()):
        raise NumericError("VAE loss is not finite")
    return loss, kl, recon


def reconstruct(model: VaeModel, x) -> np.ndarray:
    """Decode the posterior mean of ``x`` (inference mode)."""
    with no_grad():
        mu, _ = encode(model, x)
        return decode(model, mu).data


def reconstruction_mse(model: VaeModel, images: np.ndarray, batch=256) -> float:
    errs = []
    for i in range(0, len(images), batch):
        x = images[i:i + batch]
        errs.append(((reconstruct(model, x) - x) ** 2).reshape(len(x), -1).mean(axis=1))
    return float(np.concatenate(errs).mean())


def train_vae(images: np.ndarray, model: VaeModel, rng: Rng, epochs=1, batch_size=8, lr=1e-3,
              optimizer="adam", kl_weight=1.0, on_epoch=None):
    """Minimize the negative ELBO with minibatches. Returns the loss history.

    History rows are dicts with keys ``step, loss, kl, recon``. ``on_epoch`` is
    called with the epoch index after each epoch (used for checkpointing).
    """
    from .data import batch_indices

    if len(images) == 0:
        raise InvalidArgument("cannot train a VAE on an empty dataset")
    opt = make_optimizer(optimizer, model.parameters(), lr)
    params = model.parameters()
    history = []
    step = 0
    for epoch in range(epochs):
        for idx in batch_indices(len(images), batch_size, rng.child(f"epoch{epoch}"), drop_last=True):
            try:
                loss, kl, recon = vae_loss(model, images[idx], rng, kl_weight)
            except NumericError as e:
                raise TrainingError(f"step {step}: {e}", step=step) from e
            grads = backward(loss, params)
            opt.step(grads)
            history.append({"step": step, "loss": loss.item(), "kl": kl.item(), "recon": recon.item()})
            step += 1
        if on_epoch is not None:
            on_epoch(epoch)
    return history
