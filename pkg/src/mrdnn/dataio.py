"""Labeled vector datasets: validation, CSV/binary files, splicing, generators.

CSV layout is one vector per line, features first and the integer class label
in the last column.  The binary layout is an 8-byte magic, ``N, D, C`` as
little-endian uint64, the ``N x D`` float64 payload, then ``N`` int32 labels.
"""

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

BINARY_MAGIC = b"MRDSET01"
_HEADER = struct.Struct("<8sQQQ")

KINDS = ("gaussian-clusters", "two-arcs", "noisy-manifold-strip")


class DatasetError(ValueError):
    """Raised for malformed dataset files or invariant violations.

    ``row`` is the 1-based row (line) number when the problem is tied to one.
    """

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


@dataclass(frozen=True, eq=False)
class Dataset:
    vectors: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        X = np.ascontiguousarray(self.vectors, dtype=np.float64)
        y = np.ascontiguousarray(self.labels)
        if X.ndim != 2:
            raise DatasetError(f"vectors must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise DatasetError("no rows")
        if X.shape[1] < 1:
            raise DatasetError("vectors have zero dimension")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if y.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DatasetError("labels must be integers")
        y = y.astype(np.int64)
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
        if bad.size:
            raise DatasetError("non-finite value", row=int(bad[0]) + 1)
        C = int(self.class_count)
        out = np.flatnonzero((y < 0) | (y >= C))
        if out.size:
            raise DatasetError(f"label {y[out[0]]} outside [0, {C})", row=int(out[0]) + 1)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "vectors", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_count", C)

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def one_hot(self):
        T = np.zeros((self.n, self.class_count))
        T[np.arange(self.n), self.labels] = 1.0
        return T

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.vectors[index], self.labels[index], self.class_count)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class SpliceSpec:
    context: int = 11

    def __post_init__(self):
        if self.context < 1 or self.context % 2 == 0:
            raise ValueError(f"splice context must be odd and >= 1, got {self.context}")


def _detect_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown dataset format {fmt!r}")
        return fmt
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
    return "binary" if head == BINARY_MAGIC else "csv"


def load_dataset(path, format=None, class_count=None):
    """Read a dataset file, validating every row.

    ``format`` is ``"csv"``, ``"binary"`` or None to sniff the magic bytes.
    For CSV the class count defaults to ``max(label) + 1`` (at least 2).
    """
    fmt = _detect_format(path, format)
    if fmt == "binary":
        return _load_binary(path)
    return _load_csv(path, class_count)


def _load_csv(path, class_count):
    rows = []
    labels = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not tok.strip() for tok in rec):
                continue
            if width is None:
                width = len(rec)
                if width < 2:
                    raise DatasetError("need at least one feature and a label column", row=lineno)
            elif len(rec) != width:
                raise DatasetError(f"ragged row: {len(rec)} columns, expected {width}", row=lineno)
            try:
                feats = [float(tok) for tok in rec[:-1]]
            except ValueError:
                raise DatasetError("unparsable feature value", row=lineno) from None
            if not all(math.isfinite(v) for v in feats):
                raise DatasetError("non-finite value", row=lineno)
            try:
                lab = int(rec[-1].strip())
            except ValueError:
                raise DatasetError(f"label {rec[-1].strip()!r} is not an integer", row=lineno) from None
            if lab < 0 or (class_count is not None and lab >= class_count):
                raise DatasetError(f"label {lab} out of range", row=lineno)
            rows.append(feats)
            labels.append(lab)
    if not rows:
        raise DatasetError("no rows")
    C = class_count if class_count is not None else max(2, max(labels) + 1)
    return Dataset(np.array(rows), np.array(labels, dtype=np.int64), C)


def _load_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DatasetError("truncated header")
    magic, N, D, C = _HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC:
        raise DatasetError("bad magic")
    if N == 0:
        raise DatasetError("no rows")
    expected = _HEADER.size + 8 * N * D + 4 * N
    if len(raw) != expected:
        raise DatasetError(f"payload size {len(raw)} does not match header (expected {expected})")
    X = np.frombuffer(raw, dtype="<f8", count=N * D, offset=_HEADER.size).reshape(N, D)
    y = np.frombuffer(raw, dtype="<i4", count=N, offset=_HEADER.size + 8 * N * D)
    return Dataset(X.astype(np.float64), y.astype(np.int64), C)


def save_dataset(ds, path, format="csv"):
    if format == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BINARY_MAGIC, ds.n, ds.dim, ds.class_count))
            fh.write(ds.vectors.astype("<f8").tobytes())
            fh.write(ds.labels.astype("<i4").tobytes())
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            for x, lab in zip(ds.vectors, ds.labels):
                fh.write(",".join(repr(float(v)) for v in x))
                fh.write(f",{int(lab)}\n")
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def splice(ds, spec, segments=None):
    """Concatenate each frame with its temporal context window.

    Rows are treated as one time-ordered sequence, or as consecutive segments
    when ``segments`` gives a per-row segment id.  Frames beyond a segment edge
    are replaced by the edge frame.  Labels are those of the center frame.
    """
    if isinstance(spec, int):
        spec = SpliceSpec(spec)
    half = spec.context // 2
    N = ds.n
    if segments is None:
        seg = np.zeros(N, dtype=np.int64)
    else:
        seg = np.asarray(segments)
        if seg.shape != (N,):
            raise ValueError(f"segments must have length {N}")
    # first/last row index of the segment each row belongs to
    starts = np.empty(N, dtype=np.int64)
    ends = np.empty(N, dtype=np.int64)
    boundaries = np.flatnonzero(np.diff(seg) != 0) + 1
    edges = np.concatenate([[0], boundaries, [N]])
    for a, b in zip(edges[:-1], edges[1:]):
        starts[a:b] = a
        ends[a:b] = b - 1
    base = np.arange(N)
    cols = [ds.vectors[np.clip(base + off, starts, ends)] for off in range(-half, half + 1)]
    return Dataset(np.hstack(cols), ds.labels, ds.class_count)


def _strip_frame(dim):
    # fixed orthonormal embedding of the 2-D strip plane; independent of seed
    if dim < 2:
        raise ValueError("noisy-manifold-strip needs dim >= 2")
    rng = np.random.default_rng(20160101)
    Q, _ = np.linalg.qr(rng.normal(size=(dim, 2)))
    return Q.T


def generate_synthetic(kind, n_per_class, noise, seed, n_classes=2, dim=None, means=None):
    """Deterministic synthetic labeled data.

    gaussian-clusters
        isotropic Gaussian blobs; class ``c`` is centred at ``10*c`` in every
        coordinate unless ``means`` is given (default dim 2).
    two-arcs
        two interleaved half circles in the plane (2 classes only).
    noisy-manifold-strip
        each class is a straight strip ``(s, slope_c * s)``, ``s`` uniform on
        ``[0.3, 3]``, lying in a fixed 2-D plane of a ``dim``-dimensional space
        (default 10), with isotropic Gaussian noise ``noise`` added in every
        coordinate.  Slopes are evenly spaced on ``[-0.5, 0.5]``, so the strips
        fan out from a common apex: classes nearly touch at one end and drift
        apart along the strip.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {', '.join(KINDS)}")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)

    if kind == "gaussian-clusters":
        if means is None:
            d = 2 if dim is None else dim
            means = np.array([[10.0 * c] * d for c in range(n_classes)])
        means = np.asarray(means, dtype=np.float64)
        if means.shape[0] != n_classes:
            raise ValueError(f"need {n_classes} means, got {means.shape[0]}")
        X = means[labels] + noise * rng.normal(size=(labels.size, means.shape[1]))
        return Dataset(X, labels, n_classes)

    if kind == "two-arcs":
        if n_classes != 2:
            raise ValueError("two-arcs has exactly 2 classes")
        t = rng.uniform(0.0, np.pi, size=labels.size)
        X = np.empty((labels.size, 2))
        upper = labels == 0
        X[upper, 0] = np.cos(t[upper])
        X[upper, 1] = np.sin(t[upper])
        X[~upper, 0] = 1.0 - np.cos(t[~upper])
        X[~upper, 1] = 0.5 - np.sin(t[~upper])
        X += noise * rng.normal(size=X.shape)
        return Dataset(X, labels, 2)

    d = 10 if dim is None else dim
    frame = _strip_frame(d)
    if n_classes < 2:
        raise ValueError("noisy-manifold-strip needs at least 2 classes")
    slopes = np.linspace(-0.5, 0.5, n_classes)[::-1]
    s = 0.3 + 2.7 * rng.uniform(0.0, 1.0, size=labels.size)
    plane = np.column_stack([s, slopes[labels] * s])
    X = plane @ frame + noise * rng.normal(size=(labels.size, d))
    return Dataset(X, labels, n_classes)
