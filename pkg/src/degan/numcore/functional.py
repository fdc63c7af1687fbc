"""Differentiable ops used by the network layers.

Convolutions use an im2col layout: a strided window view of the padded input
is contracted against the flattened kernel, and the adjoint scatters columns
back with one strided add per kernel offset.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgument
from .tensor import Tensor, as_tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LRELU_ALPHA = 0.2


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise InvalidArgument(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    return Tensor._make(a.data @ b.data, (a, b), bw, "matmul")


# -- convolution ---------------------------------------------------------


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def deconv_out_size(n, k, stride, pad, out_pad=0):
    return (n - 1) * stride - 2 * pad + k + out_pad


def _windows(xp, kh, kw, sh, sw):
    # [N, C, H', W', kh, kw] view, no copy
    v = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return v[:, :, ::sh, ::sw]


def _conv_forward(x, w, stride, pad):
    sh, sw = stride
    ph, pw = pad
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = _windows(xp, w.shape[2], w.shape[3], sh, sw)
    return np.einsum("nchwij,fcij->nfhw", win, w, optimize=True)


def _conv_adjoint(g, w, in_hw, stride, pad):
    """Scatter output-space gradient ``g`` [N,F,H',W'] back to input space."""
    sh, sw = stride
    ph, pw = pad
    n = g.shape[0]
    c, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    h, wd = in_hw
    ho, wo = g.shape[2], g.shape[3]
    # cols[n, c, i, j, h', w'] = sum_f g[n,f,h',w'] w[f,c,i,j]
    cols = np.einsum("nfhw,fcij->ncijhw", g, w, optimize=True)
    hp, wp = h + 2 * ph, wd + 2 * pw
    # extent must cover every window even if the forward input was trimmed
    hp = max(hp, (ho - 1) * sh + kh)
    wp = max(wp, (wo - 1) * sw + kw)
    out = np.zeros((n, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += cols[:, :, i, j]
    return out[:, :, ph:ph + h, pw:pw + wd]


def _conv_weight_grad(x, g, kshape, stride, pad):
    sh, sw = stride
    ph, pw = pad
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = _windows(xp, kshape[0], kshape[1], sh, sw)
    win = win[:, :, : g.shape[2], : g.shape[3]]
    return np.einsum("nchwij,nfhw->fcij", win, g, optimize=True)


def conv2d(x, w, stride=1, padding=0) -> Tensor:
    """Cross-correlation of x [N,C,H,W] with w [F,C,kh,kw]."""
    x, w = as_tensor(x), as_tensor(w)
    stride, pad = _pair(stride), _pair(padding)
    if x.ndim != 4 or w.ndim != 4:
        raise InvalidArgument(f"conv2d expects 4-d input and kernel, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise InvalidArgument(f"conv2d channel mismatch: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    if min(stride) < 1:
        raise InvalidArgument("stride must be >= 1")
    if w.shape[2] > x.shape[2] + 2 * pad[0] or w.shape[3] > x.shape[3] + 2 * pad[1]:
        raise InvalidArgument(f"kernel {w.shape[2:]} larger than padded input {x.shape[2:]}")
    out = _conv_forward(x.data, w.data, stride, pad)

    def bw(g):
        if x.requires_grad:
            x._accum(_conv_adjoint(g, w.data, x.shape[2:], stride, pad))
        if w.requires_grad:
            w._accum(_conv_weight_grad(x.data, g, w.shape[2:], stride, pad))

    return Tensor._make(out, (x, w), bw, "conv2d")


def deconv2d(x, w, stride=1, padding=0, output_padding=0) -> Tensor:
    """Transposed convolution of x [N,F,H,W] with w [F,C,kh,kw] -> [N,C,H'',W''].

    Output extent is (H-1)*stride - 2*padding + kh + output_padding. With the
    same ``w``, this is the adjoint of ``conv2d`` mapping C -> F.
    """
    x, w = as_tensor(x), as_tensor(w)
    stride, pad, opad = _pair(stride), _pair(padding), _pair(output_padding)
    if x.ndim != 4 or w.ndim != 4:
        raise InvalidArgument(f"deconv2d expects 4-d input and kernel, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise InvalidArgument(f"deconv2d channel mismatch: input has {x.shape[1]}, kernel expects {w.shape[0]}")
    if min(stride) < 1:
        raise InvalidArgument("stride must be >= 1")
    if any(o >= s for o, s in zip(opad, stride)):
        raise InvalidArgument("output_padding must be smaller than stride")
    oh = deconv_out_size(x.shape[2], w.shape[2], stride[0], pad[0], opad[0])
    ow = deconv_out_size(x.shape[3], w.shape[3], stride[1], pad[1], opad[1])
    if oh < 1 or ow < 1:
        raise InvalidArgument(f"deconv2d output extent {oh}x{ow} is empty")
    out = _conv_adjoint(x.data, w.data, (oh, ow), stride, pad)

    def bw(g):
        if x.requires_grad:
            x._accum(_conv_forward(g, w.data, stride, pad)[:, :, : x.shape[2], : x.shape[3]])
        if w.requires_grad:
            # role swap: the output-space tensor is g, the "conv output" is x
            w._accum(_conv_weight_grad(g, x.data, w.shape[2:], stride, pad))

    return Tensor._make(out, (x, w), bw, "deconv2d")


# -- normalization -------------------------------------------------------


def batchnorm(x, gamma, beta, running_mean=None, running_var=None, training=True,
              eps=BN_EPS, momentum=BN_MOMENTUM) -> Tensor:
    """Per-channel batch normalization for [N,F] or [N,C,H,W] inputs.

    In training mode the running buffers (numpy arrays) are updated in place.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim == 2:
        axes, bshape = (0,), (1, -1)
    elif x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    else:
        raise InvalidArgument(f"batchnorm expects 2-d or 4-d input, got {x.shape}")
    m = int(np.prod([x.shape[a] for a in axes]))
    if training:
        if x.shape[0] < 2:
            raise InvalidArgument("batchnorm in training mode needs batch size >= 2")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= momentum
            running_mean += (1 - momentum) * mean
            running_var *= momentum
            running_var += (1 - momentum) * var * m / max(m - 1, 1)
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(bshape)) * inv.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def bw(g):
        gamma._accum((g * xhat).sum(axis=axes))
        beta._accum(g.sum(axis=axes))
        if not x.requires_grad:
            return
        gx = g * gamma.data.reshape(bshape)
        if training:
            mean_g = gx.mean(axis=axes, keepdims=True)
            mean_gx = (gx * xhat).mean(axis=axes, keepdims=True)
            x._accum((gx - mean_g - xhat * mean_gx) * inv.reshape(bshape))
        else:
            x._accum(gx * inv.reshape(bshape))

    return Tensor._make(out, (x, gamma, beta), bw, "batchnorm")


# -- activations ---------------------------------------------------------


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def bw(g):
        x._accum(g * mask)

    return Tensor._make(x.data * mask, (x,), bw, "relu")


def lrelu(x, alpha=LRELU_ALPHA) -> Tensor:
    if not 0 < alpha < 1:
        raise InvalidArgument(f"lrelu slope must be in (0,1), got {alpha}")
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)

    def bw(g):
        x._accum(g * slope)

    return Tensor._make(x.data * slope, (x,), bw, "lrelu")


def _stable_sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _stable_sigmoid(x.data)

    def bw(g):
        x._accum(g * s * (1 - s))

    return Tensor._make(s, (x,), bw, "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)

    def bw(g):
        x._accum(g * (1 - t * t))

    return Tensor._make(t, (x,), bw, "tanh")


ACTIVATIONS = {"relu": relu, "lrelu": lrelu, "sigmoid": sigmoid, "tanh": tanh}


def activation(x, kind: str, alpha: float = LRELU_ALPHA) -> Tensor:
    if kind not in ACTIVATIONS:
        raise InvalidArgument(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}")
    if kind == "lrelu":
        return lrelu(x, alpha)
    return ACTIVATIONS[kind](x)


def dropout(x, p: float, rng, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not 0 <= p < 1:
        raise InvalidArgument(f"drop probability must be in [0,1), got {p}")
    x = as_tensor(x)
    if not training or p == 0:
        return x
    keep = (rng.uniform(x.shape) >= p) / (1.0 - p)

    def bw(g):
        x._accum(g * keep)

    return Tensor._make(x.data * keep, (x,), bw, "dropout")


# -- losses ----------------------------------------------------------------


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        x._accum(g - soft * g.sum(axis=1, keepdims=True))

    return Tensor._make(out, (x,), bw, "log_softmax")


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(logits)
    n = labels.shape[0]
    return -(lp[np.arange(n), labels].sum()) * (1.0 / n)


def binary_cross_entropy(p, target, eps=1e-7) -> Tensor:
    """Sum over features of Bernoulli NLL, averaged over the batch."""
    p = as_tensor(p).clip(eps, 1 - eps)
    t = as_tensor(target)
    per = -(t * p.log() + (1 - t) * (1 - p).log())
    return per.sum() * (1.0 / p.shape[0])


def mse_sum(pred, target) -> Tensor:
    """Sum over features of squared error, averaged over the batch."""
    pred = as_tensor(pred)
    d = pred - as_tensor(target)
    return (d * d).sum() * (1.0 / pred.shape[0])
