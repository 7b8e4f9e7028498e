"""Fully connected feedforward networks in float64.

Activation indexing used throughout the package: ``trace.acts[0]`` is the
input batch and ``trace.acts[l + 1]`` is the output of layer ``l``.  A
network's ``bottleneck_index`` and the diagnostics' ``layer`` argument refer
to this activation index, so index 1 is the first hidden layer.
"""

from dataclasses import dataclass, field

import numpy as np

from mrdnn import linalg
from mrdnn._fileio import read_tagged, write_tagged

CHECKPOINT_MAGIC = "MRDNN-CHECKPOINT-1"
ACTIVATIONS = ("relu", "softmax", "linear")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "relu"


@dataclass
class Network:
    layers: list
    bottleneck_index: int = None
    seed: int = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for l, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {l}: unknown activation {layer.activation!r}")
            if layer.activation == "softmax" and l != len(self.layers) - 1:
                raise ValueError("softmax is only allowed at the final layer")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[1],):
                raise ValueError(f"layer {l}: weight {layer.weight.shape} / bias {layer.bias.shape} mismatch")
            if l and self.layers[l - 1].weight.shape[1] != layer.weight.shape[0]:
                raise ValueError(f"layer {l}: input size does not chain with previous layer")
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ValueError(f"layer {l}: non-finite parameters")
        if self.bottleneck_index is not None and not 0 <= self.bottleneck_index <= len(self.layers):
            raise ValueError(f"bottleneck index {self.bottleneck_index} out of range")

    @property
    def sizes(self):
        return [self.layers[0].weight.shape[0]] + [lay.weight.shape[1] for lay in self.layers]

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[1]

    def copy(self):
        return Network(
            [Layer(lay.weight.copy(), lay.bias.copy(), lay.activation) for lay in self.layers],
            self.bottleneck_index,
            self.seed,
        )

    def params(self):
        """Flat list of parameter arrays: W0, b0, W1, b1, ..."""
        out = []
        for lay in self.layers:
            out.extend([lay.weight, lay.bias])
        return out

    def n_params(self):
        return sum(p.size for p in self.params())

    def equals(self, other):
        return (
            isinstance(other, Network)
            and self.bottleneck_index == other.bottleneck_index
            and [l.activation for l in self.layers] == [l.activation for l in other.layers]
            and len(self.layers) == len(other.layers)
            and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
        )


@dataclass
class ForwardTrace:
    pre: list = field(default_factory=list)  # pre-activations, one per layer
    acts: list = field(default_factory=list)  # acts[0] = input

    @property
    def output(self):
        return self.acts[-1]


def init_network(layer_sizes, bottleneck_index=None, seed=0, output_activation="softmax"):
    """He-initialised network: ReLU hidden layers, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need input and output sizes")
    if min(sizes) < 1:
        raise ValueError(f"layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        act = output_activation if l == len(sizes) - 2 else "relu"
        layers.append(Layer(W, np.zeros(fan_out), act))
    return Network(layers, bottleneck_index, seed)


def _activate(a, kind):
    if kind == "relu":
        return linalg.relu(a)
    if kind == "softmax":
        return linalg.rowwise_softmax(a)
    return a


def forward(net, X):
    X = linalg.as_matrix(X, "X")
    if X.shape[1] != net.input_dim:
        raise ValueError(f"input has {X.shape[1]} columns, network expects {net.input_dim}")
    trace = ForwardTrace(pre=[], acts=[X])
    a = X
    for layer in net.layers:
        z = a @ layer.weight + layer.bias
        a = _activate(z, layer.activation)
        trace.pre.append(z)
        trace.acts.append(a)
    return trace


def output_error_signal(trace, targets):
    """Softmax/cross-entropy sensitivity at the output pre-activations: z - t."""
    T = np.asarray(targets, dtype=np.float64)
    Z = trace.output
    if T.shape != Z.shape:
        raise ValueError(f"targets shape {T.shape} does not match outputs {Z.shape}")
    if not (np.isin(T, (0.0, 1.0)).all() and np.all(T.sum(axis=1) == 1.0)):
        raise ValueError("target rows must be one-hot")
    return Z - T


def softmax_backward(Z, G):
    """Map a gradient w.r.t. softmax outputs ``Z`` to one w.r.t. its inputs."""
    return Z * (G - np.sum(G * Z, axis=1, keepdims=True))


def backprop(net, trace, output_delta, activation_grads=None):
    """Reverse-mode gradients of a scalar loss.

    ``output_delta`` is the loss sensitivity w.r.t. the final layer's
    pre-activations.  ``activation_grads`` optionally maps activation indices
    (see module docstring) to extra sensitivities w.r.t. those activations;
    they are injected as the backward pass reaches them.  Returns a list of
    ``(dW, db)`` per layer.
    """
    L = len(net.layers)
    delta = np.asarray(output_delta, dtype=np.float64)
    if delta.shape != trace.output.shape:
        raise ValueError(f"delta shape {delta.shape} does not match output {trace.output.shape}")
    extra = activation_grads or {}
    for idx, g in extra.items():
        if not 0 <= idx <= L:
            raise ValueError(f"activation index {idx} out of range")
        if np.shape(g) != trace.acts[idx].shape:
            raise ValueError(f"injected gradient at {idx} has shape {np.shape(g)}, expected {trace.acts[idx].shape}")
    if L in extra:
        g = extra[L]
        kind = net.layers[-1].activation
        if kind == "softmax":
            g = softmax_backward(trace.acts[L], g)
        elif kind == "relu":
            g = g * (trace.pre[-1] > 0)
        delta = delta + g

    grads = [None] * L
    for l in range(L - 1, -1, -1):
        grads[l] = (trace.acts[l].T @ delta, delta.sum(axis=0))
        if l == 0:
            break
        dA = delta @ net.layers[l].weight.T
        if l in extra:
            dA = dA + extra[l]
        kind = net.layers[l - 1].activation
        delta = dA * (trace.pre[l - 1] > 0) if kind == "relu" else dA
    return grads


def save_network(net, path, extra_meta=None):
    meta = {
        "sizes": net.sizes,
        "activations": [lay.activation for lay in net.layers],
        "bottleneck_index": net.bottleneck_index,
        "seed": net.seed,
    }
    if extra_meta:
        meta["extra"] = extra_meta
    arrays = {}
    for l, lay in enumerate(net.layers):
        arrays[f"W{l}"] = lay.weight
        arrays[f"b{l}"] = lay.bias
    write_tagged(path, CHECKPOINT_MAGIC, meta, arrays)


def load_network(path):
    meta, arrays = read_tagged(path, CHECKPOINT_MAGIC)
    layers = []
    for l, act in enumerate(meta["activations"]):
        layers.append(Layer(arrays[f"W{l}"], arrays[f"b{l}"], act))
    net = Network(layers, meta["bottleneck_index"], meta["seed"])
    if net.sizes != meta["sizes"]:
        raise ValueError(f"{path}: layer sizes disagree with header")
    return net
