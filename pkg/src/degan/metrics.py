"""Sample-quality and diversity measures for generated images.

* Diversity degree: sum of squared distances of a set to its mean image.
  The relative diversity degree (rdd) divides it by the reference set's value
  for the same class.
* Quality: a CNN classifier trained on real data scores generated images.
  Without intended labels, an image counts as recognizable when the
  classifier's top softmax probability reaches ``RECOGNIZABLE``; with intended
  labels, quality is plain accuracy.
* PCA: 2-d embedding of noise vectors via the covariance eigendecomposition.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .numcore import functional as F
from .numcore import presets
from .numcore.nn import Network, NetworkSpec, build_network
from .numcore.optim import make_optimizer
from .numcore.rng import Rng
from .numcore.tensor import backward, no_grad

RECOGNIZABLE = 0.9


# -- diversity -----------------------------------------------------------------


def diversity_degree(images) -> float:
    x = np.asarray(images, dtype=np.float64)
    if len(x) == 0:
        raise InvalidArgument("diversity of an empty set is undefined")
    x = x.reshape(len(x), -1)
    return float(((x - x.mean(axis=0)) ** 2).sum())


@dataclass
class DiversityReport:
    per_class: dict  # class -> {"D": ..., "D_ref": ..., "rdd": ...}
    average_rdd: float
    missing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"per_class": {str(k): v for k, v in self.per_class.items()},
                "average_rdd": self.average_rdd, "missing": self.missing}

    def rows(self):
        yield ("class", "D", "D_ref", "rdd")
        for c, v in sorted(self.per_class.items()):
            yield (c, v["D"], v["D_ref"], v["rdd"])


def rdd(images_by_class: dict, reference_by_class: dict) -> DiversityReport:
    """Per-class D(X) / D(reference) and the unweighted mean over present classes."""
    if set(images_by_class) - set(reference_by_class):
        raise InvalidArgument(f"classes without a reference: {sorted(set(images_by_class) - set(reference_by_class))}")
    per, missing = {}, []
    for c in sorted(reference_by_class):
        imgs = images_by_class.get(c)
        if imgs is None or len(imgs) == 0:
            missing.append(c)
            continue
        d_ref = diversity_degree(reference_by_class[c])
        d = diversity_degree(imgs)
        per[c] = {"D": d, "D_ref": d_ref, "rdd": d / d_ref if d_ref > 0 else float("nan")}
    if missing:
        warnings.warn(f"classes with no samples, excluded from the average: {missing}", stacklevel=2)
    avg = float(np.mean([v["rdd"] for v in per.values()])) if per else float("nan")
    return DiversityReport(per, avg, missing)


def bucket_by_class(images, labels) -> dict:
    labels = np.asarray(labels)
    return {int(c): images[labels == c] for c in np.unique(labels)}


# -- classifier ---------------------------------------------------------------


@dataclass
class Classifier:
    net: Network
    num_classes: int = 10
    test_accuracy: float | None = None

    def logits(self, images, batch=500) -> np.ndarray:
        out = []
        with no_grad():
            for i in range(0, len(images), batch):
                out.append(self.net(images[i:i + batch], training=False).data)
        return np.concatenate(out)

    def predict_proba(self, images) -> np.ndarray:
        return F.softmax(self.logits(images))

    def predict(self, images) -> np.ndarray:
        return self.logits(images).argmax(axis=1)

    def accuracy(self, images, labels) -> float:
        return float((self.predict(images) == np.asarray(labels)).mean())

    def state(self) -> dict:
        return self.net.state()

    def load_state(self, state):
        self.net.load_state(state)

    def meta(self) -> dict:
        return {"net": self.net.spec.to_dict(), "num_classes": self.num_classes,
                "test_accuracy": self.test_accuracy}

    @classmethod
    def from_meta(cls, meta, rng=None) -> "Classifier":
        net = build_network(NetworkSpec.from_dict(meta["net"]), rng or Rng(0))
        return cls(net, meta["num_classes"], meta.get("test_accuracy"))


def scrambled(images, rng: Rng) -> np.ndarray:
    """Independently permute the pixels of each image: same ink, no shape."""
    flat = images.reshape(len(images), -1)
    idx = np.argsort(rng.uniform(flat.shape), axis=1)
    return np.take_along_axis(flat, idx, axis=1).reshape(images.shape)


def uniform_target_loss(logits):
    """Cross-entropy against the uniform class distribution."""
    lp = F.log_softmax(logits)
    return -lp.mean(axis=1).mean()


def train_classifier(train, test=None, rng: Rng | None = None, epochs=12, batch_size=32, lr=1e-3,
                     optimizer="adam", width_mult=0.5, spec: NetworkSpec | None = None,
                     outlier_fraction=0.1) -> Classifier:
    """Fit a CNN classifier to a labeled dataset; record test accuracy if given.

    Each batch is joined by ``outlier_fraction * batch_size`` pixel-scrambled
    copies of its images, trained toward a uniform prediction, so that the
    softmax confidence means something on images that are not digits.
    """
    from .data import batch_indices

    if train.labels is None:
        raise InvalidArgument("classifier training needs a labeled dataset")
    rng = rng or Rng(0)
    num_classes = int(train.labels.max()) + 1
    if spec is None:
        dataset = "mnist" if train.images.shape[1:] == (1, 28, 28) else "cifar10"
        spec = presets.classifier(dataset, width_mult, max(num_classes, 10))
    net = build_network(spec, rng.child("init"))
    params = net.parameters()
    opt = make_optimizer(optimizer, params, lr, beta1=0.9)
    n_out = int(round(outlier_fraction * batch_size))
    srng = rng.child("scramble")
    for epoch in range(epochs):
        for idx in batch_indices(len(train), batch_size, rng.child(f"epoch{epoch}")):
            x = train.images[idx]
            loss = F.cross_entropy(net(x, training=True, rng=rng), train.labels[idx])
            if n_out:
                junk = scrambled(x[:n_out], srng)
                loss = loss + uniform_target_loss(net(junk, training=True, rng=rng)) * (n_out / batch_size)
            opt.step(backward(loss, params))
    clf = Classifier(net, spec.layers[-1].units)
    if test is not None:
        clf.test_accuracy = clf.accuracy(test.images, test.labels)
    return clf


@dataclass
class QualityReport:
    overall: float
    per_class: dict
    count: int
    mode: str  # "recognizability" or "accuracy"

    def to_dict(self) -> dict:
        return {"overall": self.overall, "per_class": {str(k): v for k, v in self.per_class.items()},
                "count": self.count, "mode": self.mode}


def quality_score(clf: Classifier, images, intended_labels=None, threshold=RECOGNIZABLE) -> QualityReport:
    """Recognizability (no labels) or accuracy against intended labels.

    Per-class values bucket images by predicted class (recognizability) or by
    intended label (accuracy).
    """
    images = np.asarray(images, dtype=np.float64)
    if len(images) == 0:
        raise InvalidArgument("quality of an empty set is undefined")
    proba = clf.predict_proba(images)
    pred = proba.argmax(axis=1)
    if intended_labels is None:
        ok = proba.max(axis=1) >= threshold
        groups, mode = pred, "recognizability"
    else:
        intended = np.asarray(intended_labels)
        ok = pred == intended
        groups, mode = intended, "accuracy"
    per = {int(c): float(ok[groups == c].mean()) for c in np.unique(groups)}
    return QualityReport(float(ok.mean()), per, len(images), mode)


# -- PCA ------------------------------------------------------------------------


@dataclass
class PcaResult:
    embedding: np.ndarray
    eigenvalues: np.ndarray  # all covariance eigenvalues, descending
    components: np.ndarray  # [out_dim, d]
    mean: np.ndarray
    degenerate: bool = False

    @property
    def explained(self) -> float:
        total = self.eigenvalues.sum()
        k = self.components.shape[0]
        return float(self.eigenvalues[:k].sum() / total) if total > 0 else 0.0


def pca_embed(vectors, out_dim=2) -> PcaResult:
    """Project mean-centered vectors onto the top covariance eigenvectors.

    Each eigenvector's sign is fixed so that its first nonzero coordinate is
    positive. Zero-variance input yields a zero embedding and a warning.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise InvalidArgument(f"need at least 2 vectors of shape [n,d], got {x.shape}")
    if out_dim > x.shape[1]:
        raise InvalidArgument(f"out_dim {out_dim} exceeds input dimension {x.shape[1]}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (len(x) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order[:out_dim]].T.copy()
    for row in comps:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    if evals[0] <= 0:
        warnings.warn("zero-variance input; PCA embedding is all zeros", stacklevel=2)
        return PcaResult(np.zeros((len(x), out_dim)), evals, comps, mean, degenerate=True)
    return PcaResult(xc @ comps.T, evals, comps, mean)
