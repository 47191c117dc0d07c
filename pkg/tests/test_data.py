import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedkrls.data import (
    DataError,
    Dataset,
    load_csv,
    make_toy,
    normalize_train_test,
    partition,
    reassemble,
    stratified_split,
)
from fedkrls.landmarks import SharedSeed
from fedkrls.topology import Topology, TopologyError, even_topology


def test_load_hand_written_csv(tmp_path):
    p = tmp_path / "tiny.csv"
    p.write_text("a,b,label\n1.0,2.0,pos\n3.0,4.0,neg\n5.0,6.0,pos\n")
    ds = load_csv(p, "label", "pos")
    assert ds.n == 3 and ds.d == 2
    assert ds.feature_names == ("a", "b")
    assert np.array_equal(ds.y, [1.0, -1.0, 1.0])
    assert np.array_equal(ds.X, [[1, 2], [3, 4], [5, 6]])


def test_load_csv_errors(tmp_path):
    ragged = tmp_path / "r.csv"
    ragged.write_text("a,label\n1.0,x\n2.0\n")
    with pytest.raises(DataError, match="ragged"):
        load_csv(ragged, "label", "x")
    alpha = tmp_path / "a.csv"
    alpha.write_text("a,label\noops,x\n1.0,y\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_csv(alpha, "label", "x")
    mono = tmp_path / "m.csv"
    mono.write_text("a,label\n1.0,x\n2.0,x\n")
    with pytest.raises(DataError, match="degenerate"):
        load_csv(mono, "label", "x")
    with pytest.raises(DataError, match="unknown class"):
        tmp = tmp_path / "c.csv"
        tmp.write_text("a,label\n1.0,x\n2.0,y\n")
        load_csv(tmp, "label", "z")
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv", "label", "x")


def test_iris_fixture_shape(data_dir):
    ds = load_csv(data_dir / "iris.csv", "label", "setosa")
    assert ds.n == 150 and ds.d == 4
    assert int(np.sum(ds.y == 1.0)) == 50


def test_normalize_train_fitted_and_idempotent():
    rng = np.random.default_rng(0)
    train = Dataset(rng.normal(size=(20, 3)) * 5, np.where(np.arange(20) % 2 == 0, 1.0, -1.0),
                    tuple(f"t{i}" for i in range(20)), ("a", "b", "c"))
    test = Dataset(rng.normal(size=(10, 3)) * 5, np.where(np.arange(10) % 2 == 0, 1.0, -1.0),
                   tuple(f"s{i}" for i in range(10)), ("a", "b", "c"))
    ntr, nte = normalize_train_test(train, test)
    assert np.allclose(ntr.X.min(axis=0), 0.0) and np.allclose(ntr.X.max(axis=0), 1.0)
    # renormalizing the normalized split is the identity
    again, _ = normalize_train_test(ntr, nte)
    assert np.max(np.abs(again.X - ntr.X)) <= 1e-15


def test_normalize_constant_column_and_out_of_range():
    train = Dataset(np.array([[1.0, 5.0], [2.0, 5.0]]), np.array([1.0, -1.0]), ("a", "b"), ("f0", "f1"))
    test = Dataset(np.array([[4.0, 5.0]]), np.array([1.0]), ("c",), ("f0", "f1"))
    ntr, nte = normalize_train_test(train, test)
    assert np.allclose(ntr.X[:, 1], 0.5)
    assert nte.X[0, 0] == 3.0  # outside [0,1], passed through unclipped


def test_stratified_split_preserves_balance():
    rng = np.random.default_rng(1)
    y = np.concatenate([np.ones(60), -np.ones(40)])
    ds = Dataset(rng.normal(size=(100, 2)), y, tuple(f"i{i}" for i in range(100)), ("a", "b"))
    train, test = stratified_split(ds, 0.3, SharedSeed(0))
    assert test.n == 30 and train.n == 70
    assert int(np.sum(test.y == 1.0)) == 18  # round(0.3 * 60)
    assert set(train.ids) | set(test.ids) == set(ds.ids)
    assert not set(train.ids) & set(test.ids)
    # deterministic
    train2, _ = stratified_split(ds, 0.3, SharedSeed(0))
    assert train.ids == train2.ids


def test_make_toy_determinism_sizes_and_accuracy_band():
    train, test, topo = make_toy(300, 200, 3, SharedSeed(0))
    train2, test2, _ = make_toy(300, 200, 3, SharedSeed(0))
    assert train.X.tobytes() == train2.X.tobytes()
    assert test.y.tobytes() == test2.y.tobytes()
    assert train.n == 300 and test.n == 200
    assert train.d == 3  # two coordinates plus bias
    assert np.allclose(train.X[:, 2], train.X[0, 2])  # bias constant
    assert topo.n_hospitals == 3


def test_partition_round_trip_even_topology():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.normal(size=(23, 5)), np.where(rng.random(23) < 0.5, 1.0, -1.0),
                 tuple(f"p{i}" for i in range(23)), tuple(f"f{i}" for i in range(5)))
    topo = even_topology(ds.ids, 5, 3, 2)
    part = partition(ds, topo)
    X, y = reassemble(part, ds.ids)
    assert np.array_equal(X, ds.X)
    assert np.array_equal(y, ds.y)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 5))
def test_partition_round_trip_property(seed, n_h, n_p):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(max(n_h, 2), 30))
    d = int(rng.integers(n_p, 8))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    ds = Dataset(rng.normal(size=(n, d)), y, tuple(f"s{i}" for i in range(n)),
                 tuple(f"f{i}" for i in range(d)))
    topo = even_topology(ds.ids, d, n_h, n_p)
    X, yr = reassemble(partition(ds, topo), ds.ids)
    assert np.array_equal(X, ds.X) and np.array_equal(yr, ds.y)


def test_topology_validation():
    with pytest.raises(TopologyError):
        Topology("f", {"h0": ("a",), "h1": ("a",)},
                 {"h0": {"o0": (0,)}, "h1": {"o0": (0,)}}, 1)
    with pytest.raises(TopologyError):
        Topology("f", {"h0": ("a", "b")}, {"h0": {"o0": (0,), "o1": (0,)}}, 2)
    with pytest.raises(TopologyError):
        Topology("f", {"h0": ("a",)}, {"h0": {"o0": (0,)}}, 2)  # feature 1 unserved
    with pytest.raises(TopologyError):
        even_topology(["a", "b"], 3, 3, 1)
    with pytest.raises(TopologyError):
        even_topology(["a", "b"], 3, 1, 4)


def test_partition_rejects_mismatched_topology():
    rng = np.random.default_rng(3)
    ds = Dataset(rng.normal(size=(4, 2)), np.array([1.0, -1.0, 1.0, -1.0]),
                 ("a", "b", "c", "d"), ("f0", "f1"))
    topo = even_topology(["a", "b", "c"], 2, 1, 1)  # misses sample d
    with pytest.raises(TopologyError):
        partition(ds, topo)
    with pytest.raises(TopologyError):
        partition(ds, even_topology(ds.ids, 3, 1, 1))  # wrong feature count


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([0.5, 1.0]), ("a", "b"), ("x", "y"))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([1.0]), ("a", "b"), ("x", "y"))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([1.0, -1.0]), ("a",), ("x", "y"))
