import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degan.data import synth_manifold
from degan.errors import DegeneratePointError, InvalidArgument
from degan.idim import IdimCurve, estimate_idim, knn_distances, mle_local, mle_local_rows, recommend_noise_dim
from degan.numcore.rng import Rng


def test_collinear_neighbors():
    d = knn_distances(np.array([[0.0], [1.0], [3.0]]), 2, "brute")
    assert d[1].tolist() == [1.0, 2.0]
    assert np.array_equal(d, knn_distances(np.array([[0.0], [1.0], [3.0]]), 2, "tree"))


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_tree_equals_brute(seed, dim):
    pts = Rng(seed).normal((120, dim))
    b = knn_distances(pts, 10, "brute")
    assert np.array_equal(b, knn_distances(pts, 10, "tree"))
    assert np.all(np.diff(b, axis=1) >= 0)


def test_tree_equals_brute_500():
    pts = Rng(3).uniform((500, 3))
    assert np.array_equal(knn_distances(pts, 30, "brute"), knn_distances(pts, 30, "tree"))


def test_knn_errors():
    with pytest.raises(InvalidArgument):
        knn_distances(np.zeros((5, 2)), 5)
    with pytest.raises(InvalidArgument):
        knn_distances(np.zeros((5, 2)), 2, "ball")


def test_mle_geometric_oracle():
    assert mle_local(np.exp([1.0, 2.0, 3.0]), 3) == pytest.approx(2 / 3, abs=1e-12)


@given(st.floats(1.01, 10), st.integers(2, 20))
def test_mle_geometric_closed_form(r, k):
    t = r ** np.arange(1, k + 1)
    assert mle_local(t, k) == pytest.approx(2 / (k * math.log(r)), rel=1e-9)


def test_mle_degenerate():
    with pytest.raises(DegeneratePointError) as e:
        mle_local_rows(np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 2.0]]), 3)
    assert list(e.value.indices) == [1]
    with pytest.raises(DegeneratePointError):
        mle_local_rows(np.array([[0.0, 1.0, 2.0]]), 3)
    with pytest.raises(InvalidArgument):
        mle_local(np.ones(3), 1)


def test_line_local_estimates_near_one():
    pts = synth_manifold("line", 10_000, 3, rng=Rng(0))
    m = mle_local_rows(knn_distances(pts, 10), 10)
    assert abs(np.median(m) - 1) < 0.15


@pytest.mark.parametrize("kind,n,amb,d,lo,hi", [("line", 2000, 20, None, 0.8, 1.3),
                                                ("gaussian_d", 5000, 50, 5, 4.0, 6.0),
                                                ("sphere_d", 2000, 3, 2, 1.7, 2.4)])
def test_manifold_fixtures(kind, n, amb, d, lo, hi):
    curve = estimate_idim(synth_manifold(kind, n, amb, d, rng=Rng(1)))
    assert lo <= curve.M_final <= hi
    assert np.all(curve.M_hat > 0) and curve.k_values.tolist() == list(range(5, 31))


def test_summary_is_upper_half_mean():
    curve = estimate_idim(synth_manifold("sphere_d", 500, 3, 2, rng=Rng(0)), 5, 12)
    assert curve.M_final == pytest.approx(curve.M_hat[4:].mean(), abs=0)


def test_scale_and_isometry_invariance():
    rng = Rng(4)
    pts = synth_manifold("gaussian_d", 800, 10, 3, rng=rng)
    base = estimate_idim(pts).M_hat
    moved = pts @ rng.orthogonal(10).T + rng.normal(10)
    assert np.abs(estimate_idim(moved).M_hat - base).max() < 1e-9
    assert np.abs(estimate_idim(pts * 7.5).M_hat - base).max() < 1e-9


def test_noise_never_lowers_line_estimate():
    vals = [estimate_idim(synth_manifold("line", 1500, 10, noise_sigma=s, rng=Rng(2))).M_final
            for s in (0.0, 0.01, 0.1)]
    assert vals == sorted(vals)


def test_duplicates_coalesced_with_warning():
    pts = synth_manifold("sphere_d", 300, 3, 2, rng=Rng(0))
    pts = np.concatenate([pts, pts[:10]])
    with pytest.warns(UserWarning, match="duplicate"):
        curve = estimate_idim(pts)
    assert curve.n_points == 300 and curve.warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not estimate_idim(pts[:300]).warnings


def test_estimate_errors():
    pts = Rng(0).normal((20, 3))
    with pytest.raises(InvalidArgument):
        estimate_idim(pts, 5, 20)
    with pytest.raises(InvalidArgument):
        estimate_idim(pts, 1, 10)
    with pytest.raises(InvalidArgument):
        estimate_idim(pts, 8, 6)


def _curve(m):
    return IdimCurve(np.arange(5, 8), np.full(3, m), m, 100, 5)


def test_recommend_noise_dim():
    assert recommend_noise_dim(_curve(12.7))[0] == 16
    assert "128" in recommend_noise_dim(_curve(12.7))[1]
    assert recommend_noise_dim(_curve(1.0))[0] == 2
    with pytest.warns(UserWarning):
        assert recommend_noise_dim(_curve(200.0))[0] == 128


def test_curve_outputs(tmp_path):
    curve = estimate_idim(synth_manifold("line", 200, 3, rng=Rng(0)), 5, 8)
    curve.write_csv(tmp_path / "c.csv")
    curve.write_summary(tmp_path / "s.json")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "k,M_hat" and len(lines) == 5
    import json
    s = json.loads((tmp_path / "s.json").read_text())
    assert set(s) == {"n", "ambient_dim", "k_min", "k_max", "M_final", "warnings"}
