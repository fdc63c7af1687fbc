"""Finite-difference verification of every differentiable op.

Each case builds a scalar function of one or more float64 arrays through the
autodiff engine; the analytic gradient is compared against central
differences with step ``h``. Relative error is ``|a - n| / max(|a|, |n|)``
taken over the whole gradient array (norm-wise), with a floor for arrays
that are zero on both sides.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import functional as F
from .numcore.rng import Rng
from .numcore.tensor import Tensor, concat

H = 1e-5
TOL = 1e-4


def numeric_grad(fn, arrays, index, h=H):
    x = arrays[index]
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = fn(*[Tensor(a) for a in arrays]).item()
        x[i] = orig - h
        fm = fn(*[Tensor(a) for a in arrays]).item()
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def analytic_grad(fn, arrays):
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*ts)
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def rel_error(a, n):
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check(fn, arrays, h=H) -> float:
    """Largest relative error over all inputs of ``fn``."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    ana = analytic_grad(fn, arrays)
    return max(rel_error(ana[i], numeric_grad(fn, arrays, i, h)) for i in range(len(arrays)))


def _proj(rng, shape):
    """Random projection weights so non-scalar outputs become a scalar loss."""
    return Tensor(rng.normal(shape))


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin * 2, x)


# Each case: rng -> (fn, arrays)
def _case_dense(rng):
    x, w, b = rng.normal((4, 5)), rng.normal((5, 3)), rng.normal(3)
    p = _proj(rng, (4, 3))
    return (lambda x, w, b: ((F.matmul(x, w) + b) * p).sum()), [x, w, b]


def _case_conv(rng):
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 3))
    x, w = rng.normal((2, 2, 6, 6)), rng.normal((3, 2, 3, 3))
    out = F.conv2d(x, w, stride, pad)
    p = _proj(rng, out.shape)
    return (lambda x, w: (F.conv2d(x, w, stride, pad) * p).sum()), [x, w]


def _case_deconv(rng):
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    opad = int(rng.integers(0, stride))
    x, w = rng.normal((2, 3, 3, 3)), rng.normal((3, 2, 3, 3))
    out = F.deconv2d(x, w, stride, pad, opad)
    p = _proj(rng, out.shape)
    return (lambda x, w: (F.deconv2d(x, w, stride, pad, opad) * p).sum()), [x, w]


def _case_batchnorm(rng):
    shape = (4, 3, 2, 2) if rng.uniform(1)[0] < 0.5 else (5, 3)
    x = rng.normal(shape)
    gamma, beta = rng.normal(3), rng.normal(3)
    p = _proj(rng, shape)
    return (lambda x, g, b: (F.batchnorm(x, g, b, training=True) * p).sum()), [x, gamma, beta]


def _case_batchnorm_eval(rng):
    x = rng.normal((4, 3))
    rm, rv = rng.normal(3), rng.uniform(3, 0.5, 2.0)
    p = _proj(rng, (4, 3))
    return (lambda x, g, b: (F.batchnorm(x, g, b, rm, rv, training=False) * p).sum()), \
        [x, rng.normal(3), rng.normal(3)]


def _elementwise(op):
    def case(rng):
        x = _away_from_zero(rng, (3, 4))
        p = _proj(rng, (3, 4))
        return (lambda x: (op(x) * p).sum()), [x]
    return case


def _case_dropout(rng):
    x = rng.normal((3, 4))
    p = _proj(rng, (3, 4))
    seed = int(rng.integers(0, 2**31))
    return (lambda x: (F.dropout(x, 0.5, Rng(seed), True) * p).sum()), [x]


def _case_reshape(rng):
    x = rng.normal((2, 3, 4))
    p = _proj(rng, (2, 12))
    return (lambda x: (x.reshape(2, 12) * p).sum()), [x]


def _case_concat(rng):
    p = _proj(rng, (5, 3))
    return (lambda a, b: (concat((a, b)) * p).sum()), [rng.normal((2, 3)), rng.normal((3, 3))]


def _case_cross_entropy(rng):
    x = rng.normal((5, 4))
    labels = rng.integers(0, 4, 5)
    return (lambda x: F.cross_entropy(x, labels)), [x]


def _case_bce(rng):
    p = rng.uniform((3, 4), 0.05, 0.95)
    t = rng.uniform((3, 4))
    return (lambda p: F.binary_cross_entropy(p, t)), [p]


def _case_mse(rng):
    x = rng.normal((3, 4))
    t = rng.normal((3, 4))
    return (lambda x: F.mse_sum(x, t)), [x]


def _case_discriminator_loss(rng):
    from .adversarial import discriminator_loss
    return discriminator_loss, [rng.uniform((6, 1), 0.05, 0.95), rng.uniform((6, 1), 0.05, 0.95)]


def _case_adversarial_loss(rng):
    from .adversarial import adversarial_loss
    return adversarial_loss, [rng.uniform((6, 1), 0.05, 0.95), rng.uniform((6, 1), 0.05, 0.95)]


def _case_hidden_loss(rng):
    from .adversarial import hidden_loss
    return hidden_loss, [rng.normal((4, 5)), rng.normal((4, 5))]


def _case_generator_loss(rng):
    from .adversarial import LossWeights, generator_loss
    w = LossWeights(float(rng.uniform(1, 0.1, 2)[0]), float(rng.uniform(1, 0.1, 2)[0]))
    return (lambda d, a, b: generator_loss(d, a, b, w)), \
        [rng.uniform((4, 1), 0.05, 0.95), rng.normal((4, 5)), rng.normal((4, 5))]


def _case_kl(rng):
    from .vae import kl_gaussian
    return kl_gaussian, [rng.normal((3, 4)), rng.normal((3, 4)) * 0.5]


def _case_reparameterize(rng):
    from .vae import reparameterize
    seed = int(rng.integers(0, 2**31))
    p = _proj(rng, (3, 4))
    return (lambda m, lv: (reparameterize(m, lv, Rng(seed)) * p).sum()), \
        [rng.normal((3, 4)), rng.normal((3, 4)) * 0.5]


CASES = {
    "dense": _case_dense,
    "conv": _case_conv,
    "deconv": _case_deconv,
    "batchnorm": _case_batchnorm,
    "batchnorm_eval": _case_batchnorm_eval,
    "relu": _elementwise(F.relu),
    "lrelu": _elementwise(F.lrelu),
    "sigmoid": _elementwise(F.sigmoid),
    "tanh": _elementwise(F.tanh),
    "dropout": _case_dropout,
    "reshape": _case_reshape,
    "concat": _case_concat,
    "cross_entropy": _case_cross_entropy,
    "bernoulli_nll": _case_bce,
    "mse": _case_mse,
    "discriminator_loss": _case_discriminator_loss,
    "adversarial_loss": _case_adversarial_loss,
    "hidden_loss": _case_hidden_loss,
    "generator_loss": _case_generator_loss,
    "kl_gaussian": _case_kl,
    "reparameterize": _case_reparameterize,
}


def _miswired(t: Tensor, factor=1.5) -> Tensor:
    """Identity whose backward rule scales the gradient: a known-bad rule."""
    return Tensor._make(t.data, (t,), lambda g: t._accum(g * factor), "miswired")


def corrupted(name: str, cases=None) -> dict:
    """Copy of ``cases`` where op ``name`` has a deliberately wrong gradient."""
    cases = dict(CASES if cases is None else cases)
    if name not in cases:
        raise KeyError(f"unknown op {name!r}")
    make = cases[name]

    def bad(rng):
        fn, arrays = make(rng)
        return (lambda *a: _miswired(fn(*a))), arrays

    cases[name] = bad
    return cases


@dataclass
class GradcheckResult:
    name: str
    instances: int
    max_rel_error: float
    passed: bool


def run_suite(instances=10, seed=0, tol=TOL, cases=None) -> list[GradcheckResult]:
    cases = CASES if cases is None else cases
    results = []
    for name, make in cases.items():
        rng = Rng(seed).child(name)
        worst = 0.0
        for _ in range(instances):
            fn, arrays = make(rng)
            worst = max(worst, check(fn, arrays))
        results.append(GradcheckResult(name, instances, worst, worst < tol))
    return results


def format_table(results) -> str:
    lines = [f"{'op':<20} {'n':>3} {'max_rel_err':>12}  status"]
    for r in results:
        lines.append(f"{r.name:<20} {r.instances:>3} {r.max_rel_error:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
