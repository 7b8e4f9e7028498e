"""Regularized training criterion: cross-entropy + L2 weight decay + manifold term.

For a batch ``B`` of primary vectors with graph neighbours ``j`` the loss is::

    (1/|B|) sum_i CE(z_i, t_i)
    + gamma1 * sum_l ||W_l||^2
    + (1/|B|) sum_i gamma2/k^2 sum_j w_ij ||z_i - z_j||^2

The cross-entropy and manifold terms are batch means; weight decay is applied
once per evaluation and never touches biases.  ``z`` is the tapped activation:
the softmax outputs by default, or the bottleneck layer.
"""

from dataclasses import asdict, dataclass

import numpy as np

from mrdnn.network import backprop, forward, output_error_signal

LOG_FLOOR = 1e-12
TAPS = ("output", "bottleneck")


@dataclass(frozen=True)
class ObjectiveConfig:
    gamma1: float = 1e-4
    gamma2: float = 1e-3
    k: int = 10
    manifold_tap: str = "output"

    def __post_init__(self):
        for name in ("gamma1", "gamma2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.gamma2 > 0 and self.k < 1:
            raise ValueError(f"k must be >= 1 when gamma2 > 0, got {self.k}")
        if self.manifold_tap not in TAPS:
            raise ValueError(f"manifold_tap must be one of {TAPS}, got {self.manifold_tap!r}")


@dataclass(frozen=True)
class LossBreakdown:
    cross_entropy: float
    l2_penalty: float
    manifold_penalty: float
    total: float

    @classmethod
    def of(cls, ce, l2, manifold):
        ce, l2, manifold = float(ce), float(l2), float(manifold)
        return cls(ce, l2, manifold, ce + l2 + manifold)

    def as_dict(self):
        return asdict(self)


def cross_entropy(Z, T):
    Z = np.asarray(Z, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if Z.shape != T.shape:
        raise ValueError(f"shape mismatch: outputs {Z.shape}, targets {T.shape}")
    return float(-np.sum(T * np.log(np.maximum(Z, LOG_FLOOR))) / Z.shape[0])


def l2_penalty(net, gamma1):
    if gamma1 < 0:
        raise ValueError("gamma1 must be >= 0")
    return float(gamma1 * sum(np.sum(lay.weight * lay.weight) for lay in net.layers))


def _check_neighbors(zi, Zn, weights):
    zi = np.asarray(zi, dtype=np.float64)
    Zn = np.asarray(Zn, dtype=np.float64).reshape(-1, zi.size)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (Zn.shape[0],):
        raise ValueError(f"{Zn.shape[0]} neighbours but {w.size} weights")
    if np.any((w < 0) | (w > 1)):
        raise ValueError("affinity weights must lie in [0, 1]")
    return zi, Zn, w


def manifold_penalty(zi, z_neighbors, weights, k, gamma2):
    """``gamma2/k^2 * sum_j w_j ||z_i - z_j||^2`` for one primary vector."""
    zi, Zn, w = _check_neighbors(zi, z_neighbors, weights)
    if Zn.shape[0] == 0:
        return 0.0
    diff = zi - Zn
    return float(gamma2 / k**2 * np.sum(w * np.sum(diff * diff, axis=1)))


def manifold_output_deltas(zi, z_neighbors, weights, k, gamma2):
    """Sensitivities of :func:`manifold_penalty` w.r.t. ``z_i`` and each ``z_j``."""
    zi, Zn, w = _check_neighbors(zi, z_neighbors, weights)
    coef = 2.0 * gamma2 / k**2
    per_edge = coef * w[:, None] * (zi - Zn)
    return per_edge.sum(axis=0), -per_edge


def tap_index(net, cfg):
    if cfg.manifold_tap == "output":
        return len(net.layers)
    if net.bottleneck_index is None:
        raise ValueError("bottleneck tap requested but the network has no bottleneck layer")
    return net.bottleneck_index


def neighbor_batch(graph, batch_index):
    """Flatten graph neighbours of a batch into ``(owner, neighbor, weight)`` arrays.

    ``owner`` holds positions within the batch, in batch order then neighbour
    order.
    """
    owners, nbrs, ws = [], [], []
    for pos, i in enumerate(batch_index):
        nb = graph.neighbors[int(i)]
        if len(nb):
            owners.append(np.full(len(nb), pos, dtype=np.int64))
            nbrs.append(nb)
            ws.append(graph.weights[int(i)])
    if not owners:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(owners), np.concatenate(nbrs).astype(np.int64), np.concatenate(ws)


def add_l2_grads(net, grads, gamma1):
    return [(dW + 2.0 * gamma1 * lay.weight, db) for (dW, db), lay in zip(grads, net.layers)]


def batch_objective(net, X, T, cfg, X_nbr=None, owner=None, w=None, manifold=True, with_grad=True):
    """Loss breakdown (and gradients) for one batch under the shared-weight scheme.

    The primary rows ``X`` and the neighbour rows ``X_nbr`` are propagated as
    separate copies of the same network.  ``owner[e]`` is the row of ``X``
    whose neighbour is ``X_nbr[e]`` and ``w[e]`` the edge weight.  With
    ``manifold=False`` the manifold term is neither evaluated nor
    differentiated and the neighbour copies are never run.

    Returns ``(LossBreakdown, grads)``; ``grads`` is None unless requested.
    """
    B = X.shape[0]
    tp = forward(net, X)
    ce = cross_entropy(tp.output, T)
    l2 = l2_penalty(net, cfg.gamma1)
    use_manifold = manifold and X_nbr is not None and len(X_nbr) > 0
    man = 0.0
    if use_manifold:
        tap = tap_index(net, cfg)
        tn = forward(net, X_nbr)
        diff = tp.acts[tap][owner] - tn.acts[tap]
        man = cfg.gamma2 / (cfg.k**2 * B) * float(np.sum(w * np.sum(diff * diff, axis=1)))
    loss = LossBreakdown.of(ce, l2, man)
    if not with_grad:
        return loss, None

    delta = output_error_signal(tp, T) / B
    if not use_manifold:
        grads = backprop(net, tp, delta)
        return loss, add_l2_grads(net, grads, cfg.gamma1)

    coef = 2.0 * cfg.gamma2 / (cfg.k**2 * B)
    edge = coef * w[:, None] * diff
    g_primary = np.zeros_like(tp.acts[tap])
    np.add.at(g_primary, owner, edge)
    grads_p = backprop(net, tp, delta, {tap: g_primary})
    grads_n = backprop(net, tn, np.zeros_like(tn.output), {tap: -edge})
    grads = [(dWp + dWn, dbp + dbn) for (dWp, dbp), (dWn, dbn) in zip(grads_p, grads_n)]
    return loss, add_l2_grads(net, grads, cfg.gamma1)


def dataset_loss(net, ds, cfg, graph=None):
    """Loss breakdown over a whole dataset treated as one batch.

    Neighbour outputs are read from the same forward pass, which is exact
    because graph neighbours are dataset rows.
    """
    trace = forward(net, ds.vectors)
    ce = cross_entropy(trace.output, ds.one_hot())
    l2 = l2_penalty(net, cfg.gamma1)
    man = 0.0
    if graph is not None:
        Z = trace.acts[tap_index(net, cfg)]
        src, dst, w = graph.edges()
        if src.size:
            diff = Z[src] - Z[dst]
            man = cfg.gamma2 / (cfg.k**2 * ds.n) * float(np.sum(w * np.sum(diff * diff, axis=1)))
    return LossBreakdown.of(ce, l2, man)
