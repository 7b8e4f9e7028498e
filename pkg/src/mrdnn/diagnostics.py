"""Neighbourhood-preservation and gradient diagnostics.

The contraction ratio of a pair is ``||z_i - z_j||^2 / ||x_i - x_j||^2`` with
``z`` a layer's activations.  :func:`contraction_profile` averages it inside
radius bins whose edges are equal-mass quantiles of the pairwise input
distances: for each bin, a mean over the pairs of each anchor vector, then a
mean over anchors that have at least one pair in the bin.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from mrdnn.network import forward
from mrdnn.objective import batch_objective, neighbor_batch


@dataclass(frozen=True)
class ContractionProfile:
    bin_edges: list  # radii, ascending; len = len(ratios) + 1
    ratios: list
    counts: list  # ordered pairs per bin
    zero_distance_pairs: int = 0

    def as_dict(self):
        return asdict(self)

    def mean_ratio(self):
        vals = [r for r, c in zip(self.ratios, self.counts) if c]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("r_low,r_high,ratio,count\n")
            for lo, hi, r, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.ratios, self.counts):
                fh.write(f"{lo!r},{hi!r},{r!r},{c}\n")


def _pairwise_sq(A):
    out = np.empty((A.shape[0], A.shape[0]))
    for i in range(A.shape[0]):
        diff = A - A[i]
        out[i] = np.sum(diff * diff, axis=1)
    return out


def contraction_profile(net, X, layer=1, bins=10):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("contraction profile needs at least 2 rows")
    if not 0 <= layer <= len(net.layers):
        raise ValueError(f"layer index {layer} out of range [0, {len(net.layers)}]")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    Z = forward(net, X).acts[layer]
    DX = _pairwise_sq(X)
    DZ = _pairwise_sq(Z)
    N = X.shape[0]
    off = ~np.eye(N, dtype=bool)
    iu = np.triu_indices(N, 1)
    upper = DX[iu]
    zero_pairs = int(np.sum(upper == 0.0))
    positive = upper[upper > 0]
    if positive.size == 0:
        return ContractionProfile([], [], [], zero_pairs)
    sq_edges = np.unique(np.quantile(positive, np.linspace(0.0, 1.0, bins + 1)))
    if sq_edges.size == 1:
        sq_edges = np.array([0.0, sq_edges[0]])
    else:
        sq_edges[0] = 0.0
    valid = off & (DX > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(valid, DZ / np.where(valid, DX, 1.0), 0.0)
    ratios, counts = [], []
    for lo, hi in zip(sq_edges[:-1], sq_edges[1:]):
        in_bin = valid & (DX > lo) & (DX <= hi)
        per_anchor = in_bin.sum(axis=1)
        has = per_anchor > 0
        counts.append(int(per_anchor.sum()))
        if not has.any():
            ratios.append(float("nan"))
            continue
        anchor_means = np.where(in_bin, R, 0.0).sum(axis=1)[has] / per_anchor[has]
        ratios.append(float(anchor_means.mean()))
    return ContractionProfile([float(e) for e in np.sqrt(sq_edges)], ratios, counts, zero_pairs)


@dataclass(frozen=True)
class AuditReport:
    max_rel_error: float
    worst_param: tuple  # (layer, "W" or "b", flat index)
    analytic: float
    numeric: float
    n_params: int


def gradient_audit(net, ds, graph, cfg, epsilon=1e-5, floor=1e-8, max_rows=16, max_params=500):
    """Compare back-propagated gradients of the full loss with central differences.

    The whole dataset is one batch.  The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps coordinates whose
    true gradient is (near) zero from dividing rounding noise by zero.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"invalid step {epsilon!r}")
    if ds.n > max_rows or net.n_params() > max_params:
        raise ValueError(f"audit is for tiny instances (<= {max_rows} rows, <= {max_params} parameters)")
    X, T = ds.vectors, ds.one_hot()
    idx = np.arange(ds.n)
    if graph is not None:
        owner, nbr, w = neighbor_batch(graph, idx)
        nb_args = (X[nbr], owner, w)
    else:
        nb_args = (None, None, None)

    def loss_of(n):
        value = batch_objective(n, X, T, cfg, *nb_args, with_grad=False)[0].total
        if not math.isfinite(value):
            raise ValueError(f"non-finite loss {value!r} during audit")
        return value

    _, grads = batch_objective(net, X, T, cfg, *nb_args)
    probe = net.copy()
    worst = (-1.0, None, 0.0, 0.0)
    for l, lay in enumerate(probe.layers):
        for name, param, g in (("W", lay.weight, grads[l][0]), ("b", lay.bias, grads[l][1])):
            flat = param.reshape(-1)
            gflat = g.reshape(-1)
            for p in range(flat.size):
                orig = flat[p]
                flat[p] = orig + epsilon
                up = loss_of(probe)
                flat[p] = orig - epsilon
                down = loss_of(probe)
                flat[p] = orig
                numeric = (up - down) / (2.0 * epsilon)
                a = float(gflat[p])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                if err > worst[0]:
                    worst = (err, (l, name, p), a, numeric)
    return AuditReport(worst[0], worst[1], worst[2], worst[3], net.n_params())


def _accuracy(net, ds):
    out = forward(net, ds.vectors).output
    return float(np.mean(np.argmax(out, axis=1) == ds.labels))


def _rel_delta(a, b):
    # None (JSON null) when the relative change from a zero baseline is undefined
    if a == b:
        return 0.0
    if a == 0.0 or not (math.isfinite(a) and math.isfinite(b)):
        return None
    return (b - a) / abs(a)


@dataclass
class ComparisonTable:
    runs: dict  # name -> metrics dict
    deltas: dict  # metric -> relative delta of run b w.r.t. run a
    bin_edges: list

    def to_lines(self):
        lines = [json.dumps({"record": "bins", "bin_edges": self.bin_edges})]
        for name, row in self.runs.items():
            lines.append(json.dumps({"record": "run", "run": name, **row}, sort_keys=True))
        lines.append(json.dumps({"record": "delta", **self.deltas}, sort_keys=True))
        return lines

    @classmethod
    def from_lines(cls, lines):
        runs, deltas, edges = {}, {}, []
        for line in lines:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("record")
            if kind == "bins":
                edges = rec["bin_edges"]
            elif kind == "run":
                runs[rec.pop("run")] = rec
            elif kind == "delta":
                deltas = rec
            else:
                raise ValueError(f"unknown record type {kind!r}")
        return cls(runs, deltas, edges)

    def __eq__(self, other):
        # NaN-aware comparison via the serialized form
        return isinstance(other, ComparisonTable) and self.to_lines() == other.to_lines()


def compare_runs(report_a, report_b, eval_ds, layer=1, bins=10, names=("a", "b")):
    """Accuracy, final losses and contraction profile per run, plus relative deltas (b vs a)."""
    runs = {}
    edges = None
    for name, rep in zip(names, (report_a, report_b)):
        net = rep.network
        if net.input_dim != eval_ds.dim or net.output_dim != eval_ds.class_count:
            raise ValueError(f"run {name!r}: network shape does not match evaluation data")
        prof = contraction_profile(net, eval_ds.vectors, layer, bins)
        edges = prof.bin_edges
        loss = rep.final_loss
        runs[name] = {
            "accuracy": _accuracy(net, eval_ds),
            **loss.as_dict(),
            "contraction": prof.ratios,
            "mean_contraction": prof.mean_ratio(),
        }
    a, b = runs[names[0]], runs[names[1]]
    deltas = {key: _rel_delta(a[key], b[key]) for key in
              ("accuracy", "cross_entropy", "l2_penalty", "manifold_penalty", "total", "mean_contraction")}
    deltas["contraction"] = [_rel_delta(x, y) for x, y in zip(a["contraction"], b["contraction"])]
    return ComparisonTable(runs, deltas, edges)
