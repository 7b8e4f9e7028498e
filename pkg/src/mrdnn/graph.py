"""Class-dependent kNN intrinsic graph with Gaussian heat-kernel affinities.

Each vector is linked to its ``k`` nearest neighbours *of the same class*
(exact search, ties broken by lower index) and every edge carries
``exp(-||x_i - x_j||^2 / rho)``.  Edges are stored per query point, so the
graph is directed; cross-class pairs never get an edge.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mrdnn._fileio import read_tagged, write_tagged

GRAPH_MAGIC = "MRDNN-GRAPH-1"

DEFAULT_K = 10
DEFAULT_RHO = 1000.0


def sq_distance(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sum(d * d))


def affinity(xi, xj, rho):
    if not rho > 0:
        raise ValueError(f"heat parameter rho must be > 0, got {rho}")
    xi = np.asarray(xi, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    if xi.shape != xj.shape:
        raise ValueError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    return math.exp(-sq_distance(xi, xj) / rho)


@dataclass(frozen=True, eq=False)
class IntrinsicGraph:
    neighbors: tuple
    weights: tuple
    k: int
    rho: float

    @property
    def n(self):
        return len(self.neighbors)

    def edges(self):
        """Flattened ``(src, dst, weight)`` arrays in storage order."""
        counts = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)
        src = np.repeat(np.arange(self.n), counts)
        if counts.sum():
            dst = np.concatenate([nb for nb in self.neighbors if len(nb)])
            w = np.concatenate([wt for wt in self.weights if len(wt)])
        else:
            dst = np.zeros(0, dtype=np.int64)
            w = np.zeros(0)
        return src, dst.astype(np.int64), w.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, IntrinsicGraph):
            return NotImplemented
        return (
            self.k == other.k
            and self.rho == other.rho
            and self.n == other.n
            and all(np.array_equal(a, b) for a, b in zip(self.neighbors, other.neighbors))
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
        )

    __hash__ = None


def _class_members(labels):
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def _query(X, labels, members, i, k):
    peers = members[int(labels[i])]
    peers = peers[peers != i]
    if peers.size == 0:
        return np.zeros(0, dtype=np.int64)
    diff = X[peers] - X[i]
    d = np.sum(diff * diff, axis=1)
    # peers are in ascending index order, so a stable sort breaks ties by index
    order = np.argsort(d, kind="stable")[:k]
    return peers[order].astype(np.int64)


def knn_same_class(ds, i, k):
    """Indices of the ``k`` same-class vectors closest to ``ds.vectors[i]``."""
    if not 0 <= i < ds.n:
        raise IndexError(f"index {i} outside [0, {ds.n})")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return _query(ds.vectors, ds.labels, _class_members(ds.labels), i, k)


def build_intrinsic_graph(ds, k=DEFAULT_K, rho=DEFAULT_RHO, threads=1):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not rho > 0:
        raise ValueError(f"heat parameter rho must be > 0, got {rho}")
    X = ds.vectors
    members = _class_members(ds.labels)

    def one(i):
        nb = _query(X, ds.labels, members, i, k)
        w = np.array([affinity(X[i], X[j], rho) for j in nb], dtype=np.float64)
        return nb, w

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(ds.n)))
    else:
        results = [one(i) for i in range(ds.n)]
    neighbors = tuple(nb for nb, _ in results)
    weights = tuple(w for _, w in results)
    for arr in neighbors + weights:
        arr.setflags(write=False)
    return IntrinsicGraph(neighbors, weights, int(k), float(rho))


def median_sq_distance(X):
    """Median squared Euclidean distance over all unordered pairs of rows."""
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    iu = np.triu_indices(X.shape[0], 1)
    return float(np.median(D[iu]))


def graph_scatter(graph, Z):
    """Sum of ``w_ij * ||z_i - z_j||^2`` over the stored edges."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != graph.n:
        raise ValueError(f"expected {graph.n} mapped rows, got shape {Z.shape}")
    src, dst, w = graph.edges()
    if src.size == 0:
        return 0.0
    diff = Z[src] - Z[dst]
    return float(np.sum(w * np.sum(diff * diff, axis=1)))


def save_graph(graph, path):
    counts = np.array([len(nb) for nb in graph.neighbors], dtype=np.int64)
    _, dst, w = graph.edges()
    write_tagged(
        path,
        GRAPH_MAGIC,
        {"n": graph.n, "k": graph.k, "rho": graph.rho},
        {"counts": counts, "neighbors": dst, "weights": w},
    )


def load_graph(path):
    meta, arrays = read_tagged(path, GRAPH_MAGIC)
    counts = arrays["counts"]
    if counts.size != meta["n"] or counts.sum() != arrays["neighbors"].size:
        raise ValueError(f"{path}: neighbor counts inconsistent with header")
    splits = np.cumsum(counts)[:-1]
    neighbors = tuple(np.split(arrays["neighbors"], splits))
    weights = tuple(np.split(arrays["weights"], splits))
    return IntrinsicGraph(neighbors, weights, int(meta["k"]), float(meta["rho"]))
