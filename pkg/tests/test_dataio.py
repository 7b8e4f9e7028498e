import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrdnn import Dataset, SpliceSpec, generate_synthetic, load_dataset, save_dataset, splice
from mrdnn.dataio import DatasetError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_read(tmp_path):
    ds = load_dataset(write(tmp_path, "1.0,2.0,0\n0.5,0.5,1\n-1.0,3.0,0\n"))
    assert (ds.n, ds.dim, ds.class_count) == (3, 2, 2)
    np.testing.assert_array_equal(ds.vectors, [[1, 2], [0.5, 0.5], [-1, 3]])
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])


def test_csv_empty(tmp_path):
    with pytest.raises(DatasetError, match="no rows"):
        load_dataset(write(tmp_path, ""))


def test_csv_nan_names_row(tmp_path):
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset(write(tmp_path, "1.0,2.0,0\nNaN,1.0,1\n"))


@pytest.mark.parametrize("text, row", [
    ("1,2,0\n1,0\n", 2),
    ("1,x,0\n", 1),
    ("1,2,0\n1,2,-1\n", 2),
    ("1,2,0.5\n", 1),
])
def test_csv_bad_rows(tmp_path, text, row):
    with pytest.raises(DatasetError, match=f"row {row}"):
        load_dataset(write(tmp_path, text))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([0, 2]), 2)
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), np.array([0]), 2)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 20), d=st.integers(1, 5), seed=st.integers(0, 1000))
def test_round_trip(tmp_path_factory, n, d, seed):
    rng = np.random.default_rng(seed)
    ds = Dataset(rng.normal(size=(n, d)) * 10.0 ** rng.integers(-5, 5), rng.integers(0, 3, n), 3)
    tmp = tmp_path_factory.mktemp("rt")
    save_dataset(ds, tmp / "a.bin", "binary")
    assert load_dataset(tmp / "a.bin") == ds
    save_dataset(ds, tmp / "a.csv", "csv")
    back = load_dataset(tmp / "a.csv", class_count=3)
    np.testing.assert_allclose(back.vectors, ds.vectors, rtol=1e-12, atol=0)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_binary_truncated(tmp_path):
    ds = generate_synthetic("gaussian-clusters", 3, 1.0, 0)
    save_dataset(ds, tmp_path / "a.bin", "binary")
    raw = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "b.bin").write_bytes(raw[:-3])
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "b.bin")


def test_splice_shapes_and_identity():
    ds = generate_synthetic("gaussian-clusters", 10, 1.0, 0, dim=39)
    assert splice(ds, SpliceSpec(11)).dim == 429
    assert splice(ds, 1) == ds


def test_splice_single_row_replicates():
    ds = Dataset(np.array([[1.0, 2.0]]), np.array([0]), 2)
    np.testing.assert_array_equal(splice(ds, 3).vectors, [[1, 2, 1, 2, 1, 2]])


def test_splice_window_and_segments():
    X = np.arange(5.0)[:, None]
    ds = Dataset(X, np.zeros(5, dtype=int), 2)
    np.testing.assert_array_equal(splice(ds, 3).vectors,
                                  [[0, 0, 1], [0, 1, 2], [1, 2, 3], [2, 3, 4], [3, 4, 4]])
    seg = splice(ds, 3, segments=[0, 0, 1, 1, 1]).vectors
    np.testing.assert_array_equal(seg, [[0, 0, 1], [0, 1, 1], [2, 2, 3], [2, 3, 4], [3, 4, 4]])


def test_splice_even_context_rejected():
    with pytest.raises(ValueError):
        SpliceSpec(4)


def test_synthetic_zero_noise_clusters():
    ds = generate_synthetic("gaussian-clusters", 5, 0.0, 3, means=[[0, 0], [10, 10]])
    np.testing.assert_array_equal(ds.vectors, np.repeat([[0.0, 0.0], [10.0, 10.0]], 5, axis=0))


@pytest.mark.parametrize("kind", ["gaussian-clusters", "two-arcs", "noisy-manifold-strip"])
def test_synthetic_deterministic(kind):
    assert generate_synthetic(kind, 20, 0.1, 5) == generate_synthetic(kind, 20, 0.1, 5)
    assert generate_synthetic(kind, 20, 0.1, 5) != generate_synthetic(kind, 20, 0.1, 6)


def test_two_arcs_one_nn_oracle():
    ds = generate_synthetic("two-arcs", 200, 0.1, 7)
    rng = np.random.default_rng(0)
    test = rng.permutation(ds.n)[: ds.n // 4]
    train = np.setdiff1d(np.arange(ds.n), test)
    correct = 0
    for i in test:
        d = np.sum((ds.vectors[train] - ds.vectors[i]) ** 2, axis=1)
        correct += ds.labels[train[np.argmin(d)]] == ds.labels[i]
    assert correct / test.size >= 0.95


def test_strip_shape():
    ds = generate_synthetic("noisy-manifold-strip", 200, 0.1, 0)
    assert (ds.n, ds.dim, ds.class_count) == (400, 10, 2)
    # noise-free points lie in a 2-D subspace
    clean = generate_synthetic("noisy-manifold-strip", 50, 0.0, 0)
    assert np.linalg.matrix_rank(clean.vectors, tol=1e-9) == 2


def test_synthetic_errors():
    with pytest.raises(ValueError, match="unknown"):
        generate_synthetic("spiral", 1, 0.1, 0)
    with pytest.raises(ValueError):
        generate_synthetic("two-arcs", 0, 0.1, 0)
    with pytest.raises(ValueError):
        generate_synthetic("two-arcs", 5, -1.0, 0)
