import os
import pickle
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from fbgraph.dataio import (
    Dataset,
    DatasetError,
    SyntheticSpec,
    erdos_renyi_m,
    fractional_split,
    generate_synthetic,
    grid_graph,
    load_citation_dataset,
    parse_graph_spec,
    per_class_split,
    row_normalize,
    write_dataset,
)
from fbgraph.graph import build_graph
from fbgraph.planetoid import convert_planetoid


def _four():
    g = build_graph([(0, 1), (1, 2), (2, 3)])
    x = np.array([[1.0, 1.0], [0.0, 2.0], [0.0, 0.0], [3.0, 1.0]])
    labels = np.array([0, 1, 1, -1])
    m = lambda *v: np.isin(np.arange(4), v)  # noqa: E731
    return Dataset(g, x, labels, m(0), m(1), m(2), 2, "four")


def test_four_vertex_round_trip(tmp_path):
    ds = _four()
    write_dataset(ds, tmp_path / "four")
    back = load_citation_dataset(tmp_path / "four", feature_norm=False)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.graph.m == 3 and back.class_count == 2
    for s in ("train", "val", "test"):
        np.testing.assert_array_equal(back.mask(s), ds.mask(s))
    normed = load_citation_dataset(tmp_path / "four")
    np.testing.assert_allclose(normed.features, [[0.5, 0.5], [0, 1], [0, 0], [0.75, 0.25]])


def test_binary_features(tmp_path):
    ds = generate_synthetic(SyntheticSpec("sbm", 30, feature_mode="random_normal", n_blocks=3))
    write_dataset(ds, tmp_path / "d", binary=True)
    assert (tmp_path / "d" / "features.bin").exists()
    back = load_citation_dataset(tmp_path / "d", feature_norm=False)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.graph.adjacency.toarray(), ds.graph.adjacency.toarray())


def test_loader_errors(tmp_path):
    root = tmp_path / "d"
    write_dataset(_four(), root)
    (root / "labels.txt").write_text("0\t0\n1 x y\n")
    with pytest.raises(DatasetError, match="labels.txt:2"):
        load_citation_dataset(root)
    write_dataset(_four(), root)
    (root / "splits" / "train.ids").write_text("0\n9\n")
    with pytest.raises(DatasetError, match="train.ids:2"):
        load_citation_dataset(root)
    (root / "splits" / "train.ids").write_text("3\n")
    with pytest.raises(DatasetError, match="no label"):
        load_citation_dataset(root)
    (root / "splits" / "train.ids").write_text("1\n")
    with pytest.raises(DatasetError, match="overlap"):
        load_citation_dataset(root)
    (root / "labels.txt").unlink()
    with pytest.raises(DatasetError, match="missing"):
        load_citation_dataset(root)
    with pytest.raises(DatasetError, match="not found"):
        load_citation_dataset(tmp_path / "nope")


def test_dataset_validation():
    ds = _four()
    with pytest.raises(DatasetError):
        ds.with_masks(ds.train_mask, ds.train_mask, ds.test_mask)
    with pytest.raises(DatasetError, match="unlabelled"):
        ds.with_masks(ds.train_mask, ds.val_mask, np.array([0, 0, 1, 1], bool))
    with pytest.raises(DatasetError, match="features"):
        Dataset(ds.graph, ds.features[:3], ds.labels, ds.train_mask, ds.val_mask, ds.test_mask, 2)
    with pytest.raises(DatasetError, match="out of range"):
        Dataset(ds.graph, ds.features, ds.labels, ds.train_mask, ds.val_mask, ds.test_mask, 1)


def test_row_normalize():
    x = np.array([[1.0, -3.0], [0.0, 0.0]])
    np.testing.assert_allclose(row_normalize(x), [[0.25, -0.75], [0, 0]])


@pytest.mark.parametrize("family", ["path", "cycle", "grid", "erdos_renyi", "barbell", "sbm"])
def test_synthetic_families(family):
    spec = SyntheticSpec(family, 36, seed=4, feature_mode="noisy_label", p_edge=0.2, n_blocks=3)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.graph.adjacency.toarray(), b.graph.adjacency.toarray())
    assert a.n == 36 and a.train_mask.any() and a.test_mask.any()
    adj = a.graph.adjacency
    assert (adj != adj.T).nnz == 0 and adj.diagonal().sum() == 0


def test_synthetic_examples():
    assert generate_synthetic(SyntheticSpec("path", 5)).graph.m == 4
    assert generate_synthetic(SyntheticSpec("cycle", 5)).graph.m == 5
    assert generate_synthetic(SyntheticSpec("grid", 12)).graph.m == grid_graph(3, 4).m == 17
    assert generate_synthetic(SyntheticSpec("barbell", 8)).graph.m == 13
    onehot = generate_synthetic(SyntheticSpec("cycle", 4))
    np.testing.assert_array_equal(onehot.features, np.eye(4))
    with pytest.raises(ValueError):
        SyntheticSpec("torus", 10)
    with pytest.raises(ValueError):
        SyntheticSpec("path", 1)


@given(st.integers(2, 300), st.data())
def test_erdos_renyi_m_exact(n, data):
    m = data.draw(st.integers(0, min(n * (n - 1) // 2, 2000)))
    g = erdos_renyi_m(n, m, seed=data.draw(st.integers(0, 100)))
    a = g.adjacency
    assert g.m == m and a.nnz == 2 * m
    assert (a != a.T).nnz == 0 and a.diagonal().sum() == 0 and (a.nnz == 0 or a.data.max() == 1)


def test_erdos_renyi_m_too_many():
    with pytest.raises(ValueError):
        erdos_renyi_m(4, 7)


@given(st.lists(st.integers(0, 4), min_size=10, max_size=200), st.floats(0.05, 0.5), st.integers(0, 50))
def test_fractional_split_properties(labels, frac, seed):
    labels = np.array(labels)
    tr, va, te = fractional_split(labels, frac, 0.2, seed=seed)
    assert not (tr & va).any() and not (tr & te).any() and not (va & te).any()
    assert (tr | va | te).all()
    for c in np.unique(labels):
        assert tr[labels == c].any()
    again = fractional_split(labels, frac, 0.2, seed=seed)
    np.testing.assert_array_equal(again[0], tr)


def test_per_class_split():
    labels = np.repeat(np.arange(7), 200)
    tr, va, te = per_class_split(labels, 20, 500, 100, seed=0)
    assert tr.sum() == 140 and va.sum() == 500 and te.sum() == 100
    assert all(tr[labels == c].sum() == 20 for c in range(7))
    assert not (tr & va).any() and not (va & te).any()


def test_parse_graph_spec(tmp_path):
    assert parse_graph_spec("cycle:8").m == 8
    assert parse_graph_spec("er_m:100:250").m == 250
    from fbgraph.graph import write_edge_list

    write_edge_list(build_graph([(0, 1)]), tmp_path / "e.tsv")
    assert parse_graph_spec(str(tmp_path / "e.tsv")).n == 2
    with pytest.raises(DatasetError):
        parse_graph_spec("blob:3")


def test_permute_dataset():
    ds = _four()
    perm = np.array([3, 1, 0, 2])
    p = ds.permute(perm)
    np.testing.assert_array_equal(p.labels, ds.labels[perm])
    assert p.graph.m == ds.graph.m


def _fake_planetoid(root: Path, name: str):
    """A 9-vertex release: 2 train, 2 allx-only, 4 listed test, 1 missing test slot."""
    rng = np.random.default_rng(0)
    f, c = 3, 2
    allx = sp.csr_matrix(rng.random((4, f)))
    ally = np.eye(c)[[0, 1, 0, 1]]
    test_idx = [8, 5, 7, 4]
    tx = sp.csr_matrix(rng.random((4, f)))
    ty = np.eye(c)[[1, 1, 0, 0]]
    ty[2] = 0  # an unlabelled test vertex
    graph = {0: [1, 1, 0], 1: [0, 2], 2: [1, 4], 4: [5], 5: [4, 7], 7: [8], 8: [7, 20]}
    objs = dict(x=allx[:2], y=ally[:2], allx=allx, ally=ally, tx=tx, ty=ty, graph=graph)
    for k, v in objs.items():
        with open(root / f"ind.{name}.{k}", "wb") as fh:
            pickle.dump(v, fh)
    (root / f"ind.{name}.test.index").write_text("\n".join(map(str, test_idx)) + "\n")
    return allx, tx


def test_planetoid_converter(tmp_path):
    allx, tx = _fake_planetoid(tmp_path, "toy")
    ds, rep = convert_planetoid(tmp_path, "toy", tmp_path / "out")
    assert ds.n == 9 and not (ds.val_mask & ds.test_mask).any() and rep["missing_test_vertices"] == 1
    assert rep["self_loops"] == 1 and rep["edges"] == 6
    np.testing.assert_array_equal(np.flatnonzero(ds.train_mask), [0, 1])
    np.testing.assert_array_equal(np.flatnonzero(ds.val_mask), [2, 3])
    np.testing.assert_array_equal(np.flatnonzero(ds.test_mask), [4, 5, 8])
    np.testing.assert_allclose(ds.features[8], tx.toarray()[0])
    assert ds.labels[6] == -1 and ds.labels[7] == -1 and ds.labels[8] == 1
    back = load_citation_dataset(tmp_path / "out", feature_norm=False)
    np.testing.assert_allclose(back.features, ds.features)


DATA = os.environ.get("FBGRAPH_DATA")


@pytest.mark.skipif(not DATA or not Path(DATA, "cora").is_dir(), reason="Cora not available under $FBGRAPH_DATA")
def test_cora_shape():
    ds = load_citation_dataset(Path(DATA, "cora"))
    assert ds.n == 2708 and ds.n_features == 1433 and ds.class_count == 7
    assert ds.train_mask.sum() == 140 and ds.val_mask.sum() == 500 and ds.test_mask.sum() == 1000
    assert abs(ds.train_mask.sum() / ds.n - 0.052) < 0.001
