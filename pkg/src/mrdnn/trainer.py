"""Mini-batch gradient descent for plain and manifold-regularized networks.

Each step of :func:`train` forward-propagates the batch vectors and, through
the same weights, every graph neighbour of every batch vector (the ``k + 1``
copies of the network).  The cross-entropy signal comes only from the primary
copy; the manifold term contributes to both sides of each edge.  Parameters
move by ``w <- w - lr_e * grad`` with ``lr_e = lr0 * lr_decay**e``.

:func:`train_baseline` is the plain L2-regularized loop with no graph at all.
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from mrdnn.network import backprop, forward, output_error_signal
from mrdnn.objective import (
    LossBreakdown,
    ObjectiveConfig,
    add_l2_grads,
    batch_objective,
    cross_entropy,
    dataset_loss,
    l2_penalty,
    neighbor_batch,
)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    lr0: float = 1e-3
    lr_decay: float = 0.9
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    manifold_epochs: int = None
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.manifold_epochs is not None and self.manifold_epochs < 0:
            raise ValueError("manifold_epochs must be >= 0")

    def learning_rate(self, epoch):
        return self.lr0 * self.lr_decay**epoch

    def manifold_active(self, epoch):
        return self.manifold_epochs is None or epoch < self.manifold_epochs

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    loss: LossBreakdown
    manifold_active: bool
    seconds: float = 0.0

    def as_dict(self, timing=True):
        rec = {"epoch": self.epoch, "lr": self.lr, **self.loss.as_dict(), "manifold_active": self.manifold_active}
        if timing:
            rec["seconds"] = self.seconds
        return rec

    @classmethod
    def from_dict(cls, rec):
        loss = LossBreakdown(rec["cross_entropy"], rec["l2_penalty"], rec["manifold_penalty"], rec["total"])
        return cls(rec["epoch"], rec["lr"], loss, rec["manifold_active"], rec.get("seconds", 0.0))


@dataclass
class TrainReport:
    epochs: list
    network: object
    config: TrainConfig = None

    @property
    def final_loss(self):
        return self.epochs[-1].loss

    def same_trajectory(self, other):
        """True when networks and per-epoch metrics agree bit for bit (timings ignored)."""
        return self.network.equals(other.network) and [e.as_dict(False) for e in self.epochs] == [
            e.as_dict(False) for e in other.epochs
        ]


def _check_inputs(net, ds):
    if net.input_dim != ds.dim:
        raise ValueError(f"network input size {net.input_dim} != dataset dim {ds.dim}")
    if net.output_dim != ds.class_count:
        raise ValueError(f"network output size {net.output_dim} != class count {ds.class_count}")


def _apply(net, grads, lr):
    for lay, (dW, db) in zip(net.layers, grads):
        lay.weight -= lr * dW
        lay.bias -= lr * db


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[s:s + batch_size] for s in range(0, n, batch_size)]


def train(net, ds, graph, cfg, on_epoch=None):
    """Manifold-regularized training; returns a report holding a trained copy of ``net``.

    ``graph`` must have been built over ``ds``.  Epochs at or past
    ``cfg.manifold_epochs`` drop the manifold gradient; the epoch metrics keep
    reporting the manifold penalty so its evolution stays visible.
    """
    _check_inputs(net, ds)
    if graph is not None and graph.n != ds.n:
        raise ValueError(f"graph has {graph.n} nodes but dataset has {ds.n} rows")
    obj = cfg.objective
    if graph is None and obj.gamma2 > 0 and (cfg.manifold_epochs is None or cfg.manifold_epochs > 0):
        raise ValueError("manifold training needs an intrinsic graph")
    net = net.copy()
    X, T = ds.vectors, ds.one_hot()
    rng = np.random.default_rng(cfg.shuffle_seed)
    records = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.learning_rate(epoch)
        run_copies = cfg.manifold_active(epoch) and graph is not None
        for b, idx in enumerate(_batches(ds.n, cfg.batch_size, rng)):
            if run_copies:
                owner, nbr, w = neighbor_batch(graph, idx)
                loss, grads = batch_objective(net, X[idx], T[idx], obj, X[nbr], owner, w)
            else:
                loss, grads = batch_objective(net, X[idx], T[idx], obj, manifold=False)
            if not math.isfinite(loss.total):
                raise TrainingDiverged(epoch, b, loss.total)
            _apply(net, grads, lr)
        epoch_loss = dataset_loss(net, ds, obj, graph)
        if not math.isfinite(epoch_loss.total):
            raise TrainingDiverged(epoch, None, epoch_loss.total)
        active = run_copies and obj.gamma2 > 0
        rec = EpochRecord(epoch, lr, epoch_loss, active, time.perf_counter() - t0)
        records.append(rec)
        if on_epoch is not None:
            on_epoch(rec, net)
    return TrainReport(records, net, cfg)


def train_baseline(net, ds, cfg, on_epoch=None):
    """Plain L2-regularized training (no graph, no neighbour copies)."""
    _check_inputs(net, ds)
    net = net.copy()
    gamma1 = cfg.objective.gamma1
    X, T = ds.vectors, ds.one_hot()
    rng = np.random.default_rng(cfg.shuffle_seed)
    records = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.learning_rate(epoch)
        for b, idx in enumerate(_batches(ds.n, cfg.batch_size, rng)):
            trace = forward(net, X[idx])
            ce = cross_entropy(trace.output, T[idx])
            if not math.isfinite(ce):
                raise TrainingDiverged(epoch, b, ce)
            grads = backprop(net, trace, output_error_signal(trace, T[idx]) / len(idx))
            _apply(net, add_l2_grads(net, grads, gamma1), lr)
        full = forward(net, X)
        loss = LossBreakdown.of(cross_entropy(full.output, T), l2_penalty(net, gamma1), 0.0)
        rec = EpochRecord(epoch, lr, loss, False, time.perf_counter() - t0)
        records.append(rec)
        if on_epoch is not None:
            on_epoch(rec, net)
    return TrainReport(records, net, replace(cfg, objective=replace(cfg.objective, gamma2=0.0)))


def classify(net, X):
    """Arg-max class per row; ties go to the lowest class index."""
    out = forward(net, X).output
    return np.argmax(out, axis=1)


def write_metrics(records, path, timing=False):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict(timing), sort_keys=True) + "\n")


def read_metrics(path):
    with open(path) as fh:
        return [EpochRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
