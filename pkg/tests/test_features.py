import numpy as np
import pytest

from mrdnn import apply_pca, extract_bottleneck, fit_pca, forward, init_network
from mrdnn.features import load_pca, save_pca
from mrdnn.network import Layer, Network


def test_bottleneck_is_input_under_identity():
    net = Network([Layer(np.eye(3), np.zeros(3), "softmax")], bottleneck_index=0)
    X = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(extract_bottleneck(net, X), X)


def test_bottleneck_matches_trace():
    net = init_network([6, 16, 40, 3], bottleneck_index=2, seed=0)
    X = np.random.default_rng(1).normal(size=(9, 6))
    B = extract_bottleneck(net, X)
    assert B.shape == (9, 40)
    np.testing.assert_array_equal(B, forward(net, X).acts[2])


def test_no_bottleneck_error():
    with pytest.raises(ValueError, match="bottleneck"):
        extract_bottleneck(init_network([2, 2]), np.ones((1, 2)))


def test_diagonal_covariance():
    rng = np.random.default_rng(0)
    n = 4000
    X = rng.normal(size=(n, 2)) * [2.0, 1.0]
    t = fit_pca(X, 1)
    tol = 4 * 4.0 * np.sqrt(2.0 / n)  # four standard errors of a variance estimate
    assert t.eigenvalues[0] == pytest.approx(4.0, abs=tol)
    np.testing.assert_allclose(np.abs(t.basis[:, 0]), [1.0, 0.0], atol=0.05)
    assert t.basis[0, 0] > 0


def test_isotropic_orthonormal():
    X = np.vstack([np.eye(3), -np.eye(3)])
    t = fit_pca(X, 3)
    np.testing.assert_allclose(t.basis.T @ t.basis, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(t.eigenvalues, t.eigenvalues[0], atol=1e-12)


def test_full_rank_round_trip_and_decorrelation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 5)) @ rng.normal(size=(5, 5))
    t = fit_pca(X, 5)
    P = apply_pca(t, X)
    np.testing.assert_allclose(t.inverse(P), X, atol=1e-9)
    np.testing.assert_allclose(P @ t.basis.T, X - t.mean, atol=1e-9)
    C = np.cov(P, rowvar=False)
    off = C - np.diag(np.diag(C))
    assert np.abs(off).max() < 1e-8 * t.eigenvalues[0]
    assert np.all(np.diff(np.diag(C)) <= 1e-12)
    np.testing.assert_array_equal(apply_pca(t, np.tile(t.mean, (2, 1))), 0.0)


def test_errors():
    with pytest.raises(ValueError):
        fit_pca(np.ones((1, 3)), 1)
    with pytest.raises(ValueError):
        fit_pca(np.ones((4, 3)), 4)
    t = fit_pca(np.random.default_rng(0).normal(size=(5, 3)), 2)
    with pytest.raises(ValueError):
        apply_pca(t, np.ones((2, 4)))


def test_save_load(tmp_path):
    t = fit_pca(np.random.default_rng(0).normal(size=(30, 4)), 3)
    save_pca(t, tmp_path / "p.pca")
    back = load_pca(tmp_path / "p.pca")
    for a, b in ((t.mean, back.mean), (t.basis, back.basis), (t.eigenvalues, back.eigenvalues)):
        np.testing.assert_array_equal(a, b)
