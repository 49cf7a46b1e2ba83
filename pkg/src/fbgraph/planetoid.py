"""One-off converter from the public Planetoid pickles to a dataset directory.

The raw release stores ``ind.<name>.{x,tx,allx,y,ty,ally,graph}`` pickles and
a plain-text ``ind.<name>.test.index``. The standard split uses the first
``len(y)`` vertices for training, the next 500 for validation and the listed
test indices for testing. Test vertices that are missing from the release
(Citeseer has a few) become feature-less, unlabelled vertices.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dataio import Dataset, write_dataset
from .graph import Graph

N_VAL = 500


def _load(raw: Path, name: str, key: str):
    with open(raw / f"ind.{name}.{key}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a)


def convert_planetoid(raw_dir: str | Path, name: str, out_dir: str | Path | None = None) -> tuple[Dataset, dict]:
    """Build a :class:`Dataset` from raw Planetoid files.

    Returns the dataset and a report with raw and cleaned edge counts. When
    ``out_dir`` is given the dataset is also written there.
    """
    raw = Path(raw_dir)
    x, y, tx, ty, allx, ally, adj = (_load(raw, name, k) for k in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = np.array([int(s) for s in (raw / f"ind.{name}.test.index").read_text().split()], dtype=np.int64)
    lo, hi = int(test_idx.min()), int(test_idx.max())
    n_all = _dense(allx).shape[0]
    n = max(hi + 1, n_all)
    f = _dense(allx).shape[1]
    c = _dense(ally).shape[1]

    feats = np.zeros((n, f))
    onehot = np.zeros((n, c))
    feats[:n_all] = _dense(allx)
    onehot[:n_all] = _dense(ally)
    feats[test_idx] = _dense(tx)
    onehot[test_idx] = _dense(ty)
    labels = np.where(onehot.any(axis=1), onehot.argmax(axis=1), -1)

    raw_pairs = [(int(u), int(v)) for u, nbrs in adj.items() for v in nbrs]
    keys = {(min(u, v), max(u, v)) for u, v in raw_pairs if u != v and max(u, v) < n}
    iu = np.array([k[0] for k in keys], dtype=np.int64)
    ju = np.array([k[1] for k in keys], dtype=np.int64)
    a = sp.csr_matrix((np.ones(2 * iu.size), (np.concatenate([iu, ju]), np.concatenate([ju, iu]))), shape=(n, n))
    a.sort_indices()
    graph = Graph(n=n, m=len(keys), adjacency=a)

    n_train = _dense(y).shape[0]
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[:n_train] = True
    val[n_train : n_train + N_VAL] = True
    test[test_idx[labels[test_idx] >= 0]] = True
    val &= (labels >= 0) & ~test
    ds = Dataset(graph, feats, labels, train, val, test, c, name)
    report = {
        "name": name,
        "n": n,
        "features": f,
        "classes": c,
        "raw_adjacency_entries": len(raw_pairs),
        "self_loops": sum(1 for u, v in raw_pairs if u == v),
        "edges": len(keys),
        "test_range": [lo, hi],
        "missing_test_vertices": len(set(range(n_all, n)) - set(test_idx.tolist())),
    }
    if out_dir is not None:
        write_dataset(ds, out_dir)
    return ds, report
