"""Generator/discriminator pair, the GAN losses, and the training loop.

Loss orientation: the discriminator labels real images 1 and generated ones
0, so its loss is ``-mean log D(x_real) - mean log(1 - D(G(z)))`` and the
adversarial value is its negation. The generator minimizes
``lambda1 * (-mean log D(G(z))) + lambda2 * hidden_loss``, the non-saturating
form of the adversarial term plus the feature-matching distance between
discriminator activations of real and generated batches.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidArgument, NumericError, TrainingError
from .numcore import presets
from .numcore.nn import Network, NetworkSpec, build_network
from .numcore.optim import make_optimizer
from .numcore.rng import Rng
from .numcore.tensor import Tensor, as_tensor, backward, concat, no_grad

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
HISTORY_FIELDS = ("epoch", "step", "d_loss", "g_loss", "adv", "hid")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError(f"loss weights must be nonnegative, got {self.lambda1}, {self.lambda2}")
        if self.lambda1 + self.lambda2 <= 0:
            raise ConfigurationError("at least one of lambda1, lambda2 must be positive")


def _probs(p) -> Tensor:
    p = as_tensor(p)
    if np.any(p.data < 0) or np.any(p.data > 1) or not np.all(np.isfinite(p.data)):
        raise InvalidArgument("discriminator outputs must be probabilities in [0,1]")
    return p.clip(PROB_CLAMP, 1 - PROB_CLAMP)


def discriminator_loss(d_real, d_fake) -> Tensor:
    """-mean log D(x_real) - mean log(1 - D(x_gen))."""
    d_real, d_fake = _probs(d_real), _probs(d_fake)
    return -(d_real.log().mean() + (1 - d_fake).log().mean())


def adversarial_loss(d_real, d_fake) -> Tensor:
    """mean log D(x_real) + mean log(1 - D(x_gen)); the negated discriminator loss."""
    return -discriminator_loss(d_real, d_fake)


def hidden_loss(h_real, h_gen) -> Tensor:
    """Mean over the batch of the Euclidean distance between paired activations."""
    h_real, h_gen = as_tensor(h_real), as_tensor(h_gen)
    if h_real.shape != h_gen.shape:
        raise InvalidArgument(f"activation shapes differ: {h_real.shape} vs {h_gen.shape}")
    d = (h_real - h_gen).reshape(h_real.shape[0], -1)
    sq = (d * d).sum(axis=1)
    # sqrt has an infinite slope at 0; identical rows contribute a zero gradient
    safe = sq + (sq.data == 0)
    return ((safe.sqrt() * (sq.data > 0)).sum()) * (1.0 / h_real.shape[0])


def generator_loss(d_fake, h_real, h_gen, w: LossWeights = LossWeights()) -> Tensor:
    d_fake = _probs(d_fake)
    loss = None
    if w.lambda1:
        loss = -(d_fake.log().mean()) * w.lambda1
    if w.lambda2:
        hid = hidden_loss(h_real, h_gen) * w.lambda2
        loss = hid if loss is None else loss + hid
    return loss


@dataclass
class GanModel:
    generator: Network
    discriminator: Network
    probe_layer: int
    latent_dim: int

    def __post_init__(self):
        if self.discriminator.output_shape != (1,):
            raise ConfigurationError(f"discriminator must output one probability, got {self.discriminator.output_shape}")
        last = self.discriminator.layers[-1].spec
        if not (last.kind == "activation" and last.activation == "sigmoid"):
            raise ConfigurationError("discriminator must end in a sigmoid")
        if not 0 <= self.probe_layer < len(self.discriminator.layers) - 1:
            raise ConfigurationError(f"probe_layer {self.probe_layer} is not a hidden layer index")
        if self.generator.output_shape != tuple(self.discriminator.spec.input_shape):
            raise ConfigurationError(
                f"generator output {self.generator.output_shape} does not match discriminator input "
                f"{tuple(self.discriminator.spec.input_shape)}")

    def state(self) -> dict:
        out = {f"generator.{k}": v for k, v in self.generator.state().items()}
        out.update({f"discriminator.{k}": v for k, v in self.discriminator.state().items()})
        return out

    def load_state(self, state: dict):
        self.generator.load_state({k[10:]: v for k, v in state.items() if k.startswith("generator.")})
        self.discriminator.load_state({k[14:]: v for k, v in state.items() if k.startswith("discriminator.")})

    def meta(self) -> dict:
        return {"generator": self.generator.spec.to_dict(), "discriminator": self.discriminator.spec.to_dict(),
                "probe_layer": self.probe_layer, "latent_dim": self.latent_dim}

    @classmethod
    def from_meta(cls, meta: dict, rng=None) -> "GanModel":
        rng = rng or Rng(0)
        return cls(build_network(NetworkSpec.from_dict(meta["generator"]), rng.child("generator")),
                   build_network(NetworkSpec.from_dict(meta["discriminator"]), rng.child("discriminator")),
                   meta["probe_layer"], meta["latent_dim"])


def build_gan(dataset="mnist", latent_dim=128, width_mult=0.25, rng=None, probe_layer=None,
              generator_spec=None, discriminator_spec=None) -> GanModel:
    rng = rng or Rng(0)
    g = build_network(generator_spec or presets.generator(dataset, latent_dim, width_mult), rng.child("generator"))
    d = build_network(discriminator_spec or presets.discriminator(dataset, width_mult), rng.child("discriminator"))
    if g.spec.input_shape != (latent_dim,) and tuple(g.spec.input_shape) != (latent_dim,):
        raise ConfigurationError(f"generator input {g.spec.input_shape} does not match latent_dim {latent_dim}")
    probe = d.default_probe() if probe_layer is None else probe_layer
    return GanModel(g, d, probe, latent_dim)


@dataclass
class GanHyperparams:
    lr: float = 0.02
    batch_size: int = 8
    lambda1: float = 1.0
    lambda2: float = 1.0
    epochs: int = 2
    optimizer: str = "sgd"
    beta1: float = 0.5
    momentum: float = 0.9

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)


def train_degan(images: np.ndarray, model: GanModel, source, hp: GanHyperparams, rng: Rng,
                run_dir=None, on_epoch=None):
    """Alternate one discriminator step and one generator step per batch.

    Returns the history as a list of dicts (columns ``HISTORY_FIELDS``). With
    ``run_dir``, the history is written to ``losses.csv`` and the model is
    checkpointed to ``checkpoints/gan_epoch{k}.degc`` after every epoch.
    ``on_epoch(epoch, model)`` is called after each epoch.
    """
    from . import persist
    from .data import batch_indices

    if len(images) == 0:
        raise InvalidArgument("cannot train on an empty dataset")
    if source.latent_dim != model.latent_dim:
        raise ConfigurationError(f"noise dimension {source.latent_dim} does not match generator input {model.latent_dim}")
    w = hp.weights  # validates the weights before any work
    g_params = model.generator.parameters()
    d_params = model.discriminator.parameters()
    opt_g = make_optimizer(hp.optimizer, g_params, hp.lr, hp.momentum, hp.beta1)
    opt_d = make_optimizer(hp.optimizer, d_params, hp.lr, hp.momentum, hp.beta1)
    D, G, tap = model.discriminator, model.generator, model.probe_layer
    run_dir = Path(run_dir) if run_dir is not None else None
    writer = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        fh = open(run_dir / "losses.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
    history, step, last_ckpt = [], 0, None
    try:
        for epoch in range(hp.epochs):
            for idx in batch_indices(len(images), hp.batch_size, rng.child(f"epoch{epoch}")):
                b = len(idx)
                x_real = images[idx]
                z = source.sample(b).shaped
                x_gen = G(z, training=True)
                if not np.all(np.isfinite(x_gen.data)):
                    raise TrainingError(f"generator produced non-finite images at epoch {epoch} step {step}",
                                        last_ckpt, step)

                # Real and generated images share one discriminator batch: with
                # separate batches, batchnorm normalizes away the very statistics
                # that tell them apart.
                d_out = D(concat((x_real, x_gen.detach())), training=True)
                d_loss = discriminator_loss(d_out[:b], d_out[b:])
                opt_d.step(backward(d_loss, d_params))
                adv = -d_loss.item()

                # generator step against the updated discriminator
                d_out, h = D.run(concat((x_real, x_gen)), training=True, tap=tap)
                d_fake_g, h_real, h_gen = d_out[b:], h[:b].detach(), h[b:]
                g_loss = generator_loss(d_fake_g, h_real, h_gen, w)
                hid = hidden_loss(h_real, h_gen.detach()).item()
                opt_g.step(backward(g_loss, g_params))

                row = {"epoch": epoch, "step": step, "d_loss": d_loss.item(), "g_loss": g_loss.item(),
                       "adv": adv, "hid": hid}
                if not all(np.isfinite(v) for v in row.values()):
                    raise TrainingError(f"non-finite loss at epoch {epoch} step {step}", last_ckpt, step)
                history.append(row)
                if writer is not None:
                    writer.writerow([row[k] if k in ("epoch", "step") else repr(row[k]) for k in HISTORY_FIELDS])
                step += 1
            if run_dir is not None:
                last_ckpt = persist.save_model(run_dir / "checkpoints" / f"gan_epoch{epoch + 1}.degc", model)
                fh.flush()
            if on_epoch is not None:
                on_epoch(epoch, model)
    except NumericError as e:
        if isinstance(e, TrainingError):
            raise
        raise TrainingError(f"numeric failure at step {step}: {e}", last_ckpt, step) from e
    finally:
        if writer is not None:
            fh.close()
    return history


def generate(model: GanModel, source, count: int, batch=256) -> np.ndarray:
    """Draw ``count`` images from the generator in inference mode."""
    out = []
    with no_grad():
        remaining = count
        while remaining > 0:
            n = min(batch, remaining)
            out.append(model.generator(source.sample(n).shaped, training=False).data)
            remaining -= n
    return np.concatenate(out)
