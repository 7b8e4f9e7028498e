"""Tandem features: bottleneck activations decorrelated by PCA."""

from dataclasses import dataclass

import numpy as np

from mrdnn import linalg
from mrdnn._fileio import read_tagged, write_tagged
from mrdnn.network import forward

PCA_MAGIC = "MRDNN-PCA-1"


@dataclass(frozen=True, eq=False)
class PcaTransform:
    mean: np.ndarray  # (D,)
    basis: np.ndarray  # (D, d), orthonormal columns
    eigenvalues: np.ndarray  # (d,), descending

    @property
    def input_dim(self):
        return self.basis.shape[0]

    @property
    def n_components(self):
        return self.basis.shape[1]

    def inverse(self, P):
        return np.asarray(P, dtype=np.float64) @ self.basis.T + self.mean


def extract_bottleneck(net, X):
    if net.bottleneck_index is None:
        raise ValueError("network has no bottleneck layer defined")
    return forward(net, X).acts[net.bottleneck_index]


def fit_pca(X, d):
    """Top-``d`` principal directions of ``X`` from its sample covariance.

    The covariance uses ``1/(N-1)``; eigenpairs come from the Jacobi solver.
    Each basis column is signed so its largest-magnitude entry is positive.
    """
    X = linalg.as_matrix(X, "X")
    N, D = X.shape
    if N < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {N}")
    if not 1 <= d <= D:
        raise ValueError(f"cannot keep {d} components of {D}-dimensional data")
    mean = X.mean(axis=0)
    Xc = X - mean
    S = Xc.T @ Xc / (N - 1)
    w, V = linalg.sym_eig(0.5 * (S + S.T))
    w = w[:d].copy()
    if w.min() < -1e-12 * max(1.0, w.max()):
        raise ValueError(f"covariance has a negative eigenvalue {w.min():.3g}")
    w = np.maximum(w, 0.0)
    V = V[:, :d].copy()
    pivot = np.argmax(np.abs(V), axis=0)
    V *= np.where(V[pivot, np.arange(d)] < 0, -1.0, 1.0)
    return PcaTransform(mean, V, w)


def apply_pca(t, X):
    X = linalg.as_matrix(X, "X")
    if X.shape[1] != t.input_dim:
        raise ValueError(f"expected {t.input_dim} columns, got {X.shape[1]}")
    return (X - t.mean) @ t.basis


def save_pca(t, path):
    write_tagged(path, PCA_MAGIC, {"dim": t.input_dim, "components": t.n_components},
                 {"mean": t.mean, "eigenvalues": t.eigenvalues, "basis": t.basis})


def load_pca(path):
    _, arrays = read_tagged(path, PCA_MAGIC)
    return PcaTransform(arrays["mean"], arrays["basis"], arrays["eigenvalues"])
