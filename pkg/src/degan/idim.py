"""Maximum-likelihood intrinsic dimension estimation from nearest neighbors.

For a point x_i with sorted neighbor distances T_1 <= ... <= T_k, the local
estimate is

    m_k(x_i) = [ 1/(k-1) * sum_{j<k} log(T_k / T_j) ]^{-1}

and M_k is its mean over all points. The estimate as k grows is summarized by
averaging M_k over the upper half of the requested k range.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegeneratePointError, InvalidArgument

# extra candidates fetched before exact re-ranking, so near-ties at the k-th
# boundary cannot differ between the brute-force and tree paths
_MARGIN = 4


def _exact_sorted(points, i_rows, cand, k_max):
    """Recompute distances to candidate neighbors directly and keep the k_max smallest."""
    diff = points[cand] - points[i_rows][:, None, :]
    d = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))
    d.sort(axis=1)
    return d[:, :k_max]


def knn_brute(points: np.ndarray, k_max: int, chunk=512) -> np.ndarray:
    n = len(points)
    m = min(k_max + _MARGIN, n - 1)
    sq = np.einsum("nd,nd->n", points, points)
    out = np.empty((n, k_max))
    for s in range(0, n, chunk):
        rows = np.arange(s, min(s + chunk, n))
        d2 = sq[rows, None] + sq[None, :] - 2.0 * points[rows] @ points.T
        d2[np.arange(len(rows)), rows] = np.inf
        cand = np.argpartition(d2, m - 1, axis=1)[:, :m]
        out[rows] = _exact_sorted(points, rows, cand, k_max)
    return out


def knn_tree(points: np.ndarray, k_max: int) -> np.ndarray:
    n = len(points)
    m = min(k_max + _MARGIN, n - 1)
    _, idx = cKDTree(points).query(points, k=m + 1)
    # drop the point itself wherever it appears in its own list
    rows = np.arange(n)
    keep = idx != rows[:, None]
    cand = np.array([r[k][:m] for r, k in zip(idx, keep)])
    return _exact_sorted(points, rows, cand, k_max)


def knn_distances(points, k_max: int, method="auto") -> np.ndarray:
    """[n, k_max] Euclidean distances to the 1st..k_max-th neighbors, ascending.

    The point itself is excluded; duplicates show up as zero distances.
    ``method`` is "brute", "tree" or "auto" (tree for low ambient dimension).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise InvalidArgument(f"points must be [n,d], got shape {points.shape}")
    n = len(points)
    if not 1 <= k_max < n:
        raise InvalidArgument(f"need 1 <= k_max < n, got k_max={k_max}, n={n}")
    if method == "auto":
        method = "tree" if points.shape[1] <= 16 else "brute"
    if method == "brute":
        return knn_brute(points, k_max)
    if method == "tree":
        return knn_tree(points, k_max)
    raise InvalidArgument(f"unknown kNN method {method!r}")


def mle_local(dists, k: int) -> float:
    """Local MLE from one row of sorted neighbor distances."""
    d = np.asarray(dists, dtype=np.float64)
    return float(mle_local_rows(d[None, :], k)[0])


def mle_local_rows(dists: np.ndarray, k: int) -> np.ndarray:
    """Vectorized ``mle_local`` over rows of a distance matrix."""
    if k < 2:
        raise InvalidArgument(f"k must be >= 2, got {k}")
    if dists.shape[1] < k:
        raise InvalidArgument(f"need at least k={k} distances per row, got {dists.shape[1]}")
    t = dists[:, :k]
    bad = np.flatnonzero((t[:, :k - 1] <= 0).any(axis=1) | (t[:, k - 1] <= 0))
    if bad.size:
        raise DegeneratePointError(f"{bad.size} point(s) with zero neighbor distance, first index {bad[0]}", bad)
    s = np.log(t[:, k - 1:k] / t[:, :k - 1]).sum(axis=1) / (k - 1)
    bad = np.flatnonzero(s <= 0)
    if bad.size:
        raise DegeneratePointError(f"{bad.size} point(s) with all {k} neighbors equidistant, first index {bad[0]}", bad)
    return 1.0 / s


@dataclass
class IdimCurve:
    k_values: np.ndarray
    M_hat: np.ndarray
    M_final: float
    n_points: int
    ambient_dim: int
    warnings: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"n": self.n_points, "ambient_dim": self.ambient_dim, "k_min": int(self.k_values[0]),
                "k_max": int(self.k_values[-1]), "M_final": self.M_final, "warnings": list(self.warnings)}

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["k", "M_hat"])
            for k, m in zip(self.k_values, self.M_hat):
                w.writerow([int(k), repr(float(m))])

    def write_summary(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n")


def estimate_idim(points, k_min=5, k_max=30, method="auto") -> IdimCurve:
    """M_k for k in [k_min, k_max] and its upper-half average ``M_final``.

    Duplicate rows are coalesced first; more than 1% duplicates adds a warning.
    """
    pts = np.asarray(points, dtype=np.float64)
    pts = pts.reshape(len(pts), -1)
    if k_min < 2:
        raise InvalidArgument(f"k_min must be >= 2, got {k_min}")
    if k_max < k_min:
        raise InvalidArgument(f"k_max ({k_max}) must be >= k_min ({k_min})")
    notes = []
    uniq = np.unique(pts, axis=0)
    n_dup = len(pts) - len(uniq)
    if n_dup:
        pts = uniq
        if n_dup > 0.01 * (len(uniq) + n_dup):
            notes.append(f"{n_dup} duplicate points coalesced ({100 * n_dup / (len(uniq) + n_dup):.1f}%)")
    if k_max >= len(pts):
        raise InvalidArgument(f"k_max ({k_max}) must be smaller than the number of distinct points ({len(pts)})")
    dists = knn_distances(pts, k_max, method)
    ks = np.arange(k_min, k_max + 1)
    m_hat = np.empty(len(ks))
    for i, k in enumerate(ks):
        try:
            m_hat[i] = mle_local_rows(dists, int(k)).mean()
        except DegeneratePointError as e:
            raise DegeneratePointError(f"k={k}: {e} ({len(e.indices)} affected points)", e.indices) from e
    upper = m_hat[len(ks) // 2:]
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return IdimCurve(ks, m_hat, float(upper.mean()), len(pts), pts.shape[1], notes)


def recommend_noise_dim(curve: IdimCurve, ceiling=128):
    """Smallest power of two >= max(2, ceil(M_final)), capped at ``ceiling``.

    Returns ``(dim, rationale)``.
    """
    target = max(2, math.ceil(curve.M_final))
    dim = 1 << (target - 1).bit_length()
    text = (f"estimated intrinsic dimension {curve.M_final:.2f}; noise vectors need at least "
            f"{target} dimensions to cover the data manifold")
    if dim > ceiling:
        text += f"; {dim} exceeds the ceiling, capped at {ceiling}"
        warnings.warn(f"recommended noise dimension {dim} capped at {ceiling}", stacklevel=2)
        dim = ceiling
    text += f"; recommended {dim} (the reference setup uses 128)"
    return dim, text
