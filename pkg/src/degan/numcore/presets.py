"""Named network presets for MNIST, celebA and CIFAR-10.

Each preset follows the published architecture tables row by row. Channel and
unit counts are multiplied by ``width_mult`` (rounded, at least 1) so the same
layouts train on a CPU. Where a published row does not compose with its
neighbours, the nearest shape-consistent choice is used; each such
substitution is listed in the builder's docstring.

All ``↓`` rows are 5x5 stride-2 convolutions with padding 2; ``↑`` rows are
stride-2 transposed convolutions whose padding/output-padding is picked to hit
the next published spatial size.
"""
from __future__ import annotations

from ..errors import ConfigurationError
from .nn import LayerSpec as L
from .nn import NetworkSpec

DATASETS = ("mnist", "celeba", "cifar10")
ROLES = ("decoder", "encoder", "generator", "discriminator", "classifier")

IMAGE_SHAPES = {"mnist": (1, 28, 28), "celeba": (3, 64, 64), "cifar10": (3, 32, 32)}
OUTPUT_ACTIVATION = {"mnist": "sigmoid", "celeba": "tanh", "cifar10": "tanh"}


def _w(n, width_mult):
    return max(1, int(round(n * width_mult)))


def _down(ch):
    return L("conv", channels=ch, kernel=5, stride=2, padding=2)


def _up(ch, k=5, pad=2, opad=1, stride=2):
    return L("deconv", channels=ch, kernel=k, stride=stride, padding=pad, output_padding=opad)


def _act(name):
    return L("activation", activation=name)


def encoder(dataset="mnist", latent_dim=128, width_mult=0.25, dropout=0.5) -> NetworkSpec:
    """Encoder: three ``5x5 ↓`` blocks (32, 64, 128), dropout, flatten, dense.

    Substitutions: an lrelu follows each conv (the table lists none); the
    final dense layer emits ``2 * latent_dim`` units holding the mean and
    log-variance heads side by side.
    """
    w = lambda n: _w(n, width_mult)  # noqa: E731
    layers = []
    for ch in (32, 64, 128):
        layers += [_down(w(ch)), _act("lrelu")]
    layers += [L("dropout", p=dropout), L("flatten"), L("dense", units=2 * latent_dim)]
    return NetworkSpec(IMAGE_SHAPES[dataset], layers, f"{dataset}-encoder")


def decoder(dataset="mnist", latent_dim=128, width_mult=0.25) -> NetworkSpec:
    """Decoder: noise reshaped to 1x1, then the ``↑`` stack, output head, flatten.

    MNIST: 3x3x128 (1->3), 5x5x64 (3->7), 5x5x32 (7->14), 5x5x1 (14->28), Sigmoid.
    celebA: 4x4x128 (1->4), 64, 32, 16, 3 (4->64), tanh.
    CIFAR-10: 4x4x128 (1->4), 64, 32, 3 (4->32), tanh.
    Substitution: relu between upsamplers (the table lists none).
    The output is flattened as in the table; use ``unflatten`` to recover images.
    """
    w = lambda n: _w(n, width_mult)  # noqa: E731
    c, _, _ = IMAGE_SHAPES[dataset]
    layers = [L("reshape", shape=(latent_dim, 1, 1))]
    if dataset == "mnist":
        layers += [_up(w(128), k=3, pad=0, opad=0, stride=1), _act("relu"),
                   _up(w(64), pad=1, opad=0), _act("relu"),
                   _up(w(32)), _act("relu"),
                   _up(1)]
    else:
        chans = (64, 32, 16) if dataset == "celeba" else (64, 32)
        layers += [_up(w(128), k=4, pad=0, opad=0, stride=1), _act("relu")]
        for ch in chans:
            layers += [_up(w(ch)), _act("relu")]
        layers += [_up(c)]
    layers += [_act(OUTPUT_ACTIVATION[dataset]), L("flatten")]
    return NetworkSpec((latent_dim,), layers, f"{dataset}-decoder")


def generator(dataset="mnist", latent_dim=128, width_mult=0.25) -> NetworkSpec:
    """Generator.

    MNIST follows the table exactly: 1024 FC+BN+relu, 6272 FC+BN+relu
    (reshaped to 128x7x7), 5x5x128 ↑ +BN+relu (7->14), 1x5x5 ↑ (14->28),
    Sigmoid.

    celebA / CIFAR-10 substitutions: the 1024 FC output is reshaped to
    64x4x4; the upsamplers 512, 256, 512 double the extent to 32; for celebA
    the 64-channel row doubles to 64, for CIFAR-10 it keeps stride 1. The
    table never reaches 3 channels, so a final 5x5x3 stride-1 deconv precedes
    tanh.
    """
    w = lambda n: _w(n, width_mult)  # noqa: E731
    bn_relu = [L("batchnorm"), _act("relu")]
    if dataset == "mnist":
        layers = [L("dense", units=w(1024)), *bn_relu,
                  L("dense", units=w(128) * 49), *bn_relu,
                  L("reshape", shape=(w(128), 7, 7)),
                  _up(w(128)), *bn_relu,
                  _up(1), _act("sigmoid")]
    else:
        base = w(64)
        layers = [L("dense", units=base * 16), *bn_relu, L("reshape", shape=(base, 4, 4))]
        for ch in (512, 256, 512):
            layers += [_up(w(ch)), *bn_relu]
        if dataset == "celeba":
            layers += [_up(w(64)), *bn_relu]
        else:
            layers += [_up(w(64), pad=2, opad=0, stride=1), *bn_relu]
        layers += [_up(3, pad=2, opad=0, stride=1), _act("tanh")]
    return NetworkSpec((latent_dim,), layers, f"{dataset}-generator")


def discriminator(dataset="mnist", width_mult=0.25) -> NetworkSpec:
    """Discriminator.

    MNIST follows the table: 5x5x11 ↓ lrelu, 5x5x74 ↓ BN+lrelu, 1024
    FC+BN+lrelu, 1 FC, Sigmoid. The odd widths compose, so they are kept.

    celebA / CIFAR-10: 64, 128, 256 ↓ blocks. The table lists "1 FC" before
    "64 FC"; that order cannot end in a scalar, so it is 64 FC+lrelu then 1 FC.
    """
    w = lambda n: _w(n, width_mult)  # noqa: E731
    if dataset == "mnist":
        layers = [_down(w(11)), _act("lrelu"),
                  _down(w(74)), L("batchnorm"), _act("lrelu"),
                  L("flatten"),
                  L("dense", units=w(1024)), L("batchnorm"), _act("lrelu"),
                  L("dense", units=1), _act("sigmoid")]
    else:
        layers = [_down(w(64)), _act("lrelu")]
        for ch in (128, 256):
            layers += [_down(w(ch)), L("batchnorm"), _act("lrelu")]
        layers += [L("flatten"), L("dense", units=w(64)), _act("lrelu"),
                   L("dense", units=1), _act("sigmoid")]
    return NetworkSpec(IMAGE_SHAPES[dataset], layers, f"{dataset}-discriminator")


def classifier(dataset="mnist", width_mult=0.25, num_classes=10) -> NetworkSpec:
    """Two conv blocks and a dense head emitting class logits."""
    w = lambda n: _w(n, width_mult)  # noqa: E731
    layers = [_down(w(32)), _act("relu"),
              _down(w(64)), _act("relu"),
              L("flatten"), L("dense", units=w(256)), _act("relu"),
              L("dense", units=num_classes)]
    return NetworkSpec(IMAGE_SHAPES[dataset], layers, f"{dataset}-classifier")


_BUILDERS = {"encoder": encoder, "decoder": decoder, "generator": generator,
             "discriminator": discriminator, "classifier": classifier}


def preset(dataset: str, role: str, **kw) -> NetworkSpec:
    if dataset not in DATASETS:
        raise ConfigurationError(f"unknown dataset preset {dataset!r}; expected one of {DATASETS}")
    if role not in _BUILDERS:
        raise ConfigurationError(f"unknown network role {role!r}; expected one of {ROLES}")
    return _BUILDERS[role](dataset, **kw)
