"""Datasets on disk and synthetic graph fixtures.

On-disk layout of a dataset directory::

    edges.tsv            i<TAB>j[<TAB>w]
    features.txt|.bin    signal file (see fbgraph.engine.write_signal)
    labels.txt           vertex<TAB>class, one per line
    splits/train.ids     one vertex id per line (also val.ids, test.ids)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .engine import read_signal, write_signal
from .graph import Graph, build_graph, read_edge_list, write_edge_list

SPLITS = ("train", "val", "test")
FAMILIES = ("path", "cycle", "grid", "erdos_renyi", "barbell", "sbm")


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    class_count: int
    name: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        for s in SPLITS:
            setattr(self, f"{s}_mask", np.asarray(getattr(self, f"{s}_mask"), dtype=bool))
        validate_dataset(self)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def mask(self, split: str) -> np.ndarray:
        return getattr(self, f"{split}_mask")

    def with_masks(self, train, val, test) -> "Dataset":
        return Dataset(self.graph, self.features, self.labels, train, val, test, self.class_count, self.name)

    def permute(self, perm) -> "Dataset":
        perm = np.asarray(perm)
        return Dataset(
            self.graph.permute(perm),
            self.features[perm],
            self.labels[perm],
            self.train_mask[perm],
            self.val_mask[perm],
            self.test_mask[perm],
            self.class_count,
            self.name,
        )


def validate_dataset(ds: Dataset) -> None:
    n = ds.graph.n
    if ds.features.ndim != 2 or ds.features.shape[0] != n:
        raise DatasetError(f"features have shape {ds.features.shape}, expected ({n}, f)")
    if ds.labels.shape != (n,):
        raise DatasetError(f"labels have shape {ds.labels.shape}, expected ({n},)")
    masks = [ds.mask(s) for s in SPLITS]
    for s, m in zip(SPLITS, masks):
        if m.shape != (n,):
            raise DatasetError(f"{s} mask has shape {m.shape}, expected ({n},)")
        if (ds.labels[m] < 0).any():
            raise DatasetError(f"{s} split contains unlabelled vertices")
    for a in range(3):
        for b in range(a + 1, 3):
            both = np.flatnonzero(masks[a] & masks[b])
            if both.size:
                raise DatasetError(f"{SPLITS[a]} and {SPLITS[b]} splits overlap (e.g. vertex {both[0]})")
    if ds.labels.size and ds.labels.max() >= ds.class_count:
        raise DatasetError(f"label {ds.labels.max()} out of range for {ds.class_count} classes")


def row_normalize(x: np.ndarray) -> np.ndarray:
    """Scale rows to unit l1 norm; all-zero rows stay zero."""
    s = np.abs(x).sum(axis=1, keepdims=True)
    return np.divide(x, s, out=np.zeros_like(x, dtype=np.float64), where=s > 0)


def _read_ids(path: Path, n: int) -> np.ndarray:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                v = int(s)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected a vertex id, got {s!r}") from None
            if not 0 <= v < n:
                raise DatasetError(f"{path}:{lineno}: vertex id {v} out of range for n={n}")
            ids.append(v)
    return np.array(ids, dtype=np.int64)


def _read_labels(path: Path, n: int) -> np.ndarray:
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'vertex<TAB>class'")
            v, c = int(parts[0]), int(parts[1])
            if not 0 <= v < n:
                raise DatasetError(f"{path}:{lineno}: vertex id {v} out of range for n={n}")
            if c < -1:
                raise DatasetError(f"{path}:{lineno}: unknown class id {c}")
            labels[v] = c
    return labels


def load_citation_dataset(path: str | Path, feature_norm: bool = True) -> Dataset:
    """Load a dataset directory (see module docstring)."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"{root}: dataset directory not found")
    feat_path = root / "features.bin" if (root / "features.bin").exists() else root / "features.txt"
    for p in (root / "edges.tsv", feat_path, root / "labels.txt"):
        if not p.exists():
            raise DatasetError(f"{p}: missing")
    features = read_signal(feat_path)
    n = features.shape[0]
    graph = read_edge_list(root / "edges.tsv", n=n)
    labels = _read_labels(root / "labels.txt", n)
    class_count = int(labels.max()) + 1 if labels.size else 0
    masks = {}
    for s in SPLITS:
        m = np.zeros(n, dtype=bool)
        ids_path = root / "splits" / f"{s}.ids"
        if ids_path.exists():
            ids = _read_ids(ids_path, n)
            bad = ids[labels[ids] < 0]
            if bad.size:
                raise DatasetError(f"{ids_path}: vertex {bad[0]} has no label")
            m[ids] = True
        masks[s] = m
    if feature_norm:
        features = row_normalize(features)
    try:
        return Dataset(graph, features, labels, masks["train"], masks["val"], masks["test"], class_count, root.name)
    except DatasetError as exc:
        raise DatasetError(f"{root}: {exc}") from None


def write_dataset(ds: Dataset, path: str | Path, binary: bool = False) -> None:
    root = Path(path)
    (root / "splits").mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph, root / "edges.tsv")
    write_signal(ds.features, root / ("features.bin" if binary else "features.txt"), binary=binary)
    with open(root / "labels.txt", "w", encoding="utf-8") as fh:
        for v, c in enumerate(ds.labels):
            fh.write(f"{v}\t{c}\n")
    for s in SPLITS:
        ids = np.flatnonzero(ds.mask(s))
        (root / "splits" / f"{s}.ids").write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


# -- splits -----------------------------------------------------------------


def fractional_split(labels: np.ndarray, train_frac: float, val_frac: float = 0.0, seed: int = 0):
    """Stratified random split; every class gets at least one training vertex.

    The remainder after train and validation is the test split.
    """
    if not 0.0 < train_frac < 1.0 or val_frac < 0.0 or train_frac + val_frac >= 1.0:
        raise ValueError(f"bad split fractions train={train_frac}, val={val_frac}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    train, val, test = (np.zeros(n, dtype=bool) for _ in range(3))
    for c in np.unique(labels[labels >= 0]):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k_tr = max(1, int(round(train_frac * idx.size)))
        k_va = int(round(val_frac * idx.size))
        train[idx[:k_tr]] = True
        val[idx[k_tr : k_tr + k_va]] = True
        test[idx[k_tr + k_va :]] = True
    return train, val, test


def per_class_split(labels: np.ndarray, per_class: int, n_val: int, n_test: int, seed: int = 0):
    """``per_class`` training vertices per class, then ``n_val`` / ``n_test`` at random."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    train = np.zeros(n, dtype=bool)
    for c in np.unique(labels[labels >= 0]):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train[idx[:per_class]] = True
    rest = rng.permutation(np.flatnonzero(~train & (labels >= 0)))
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[:n_val]] = True
    test[rest[n_val : n_val + n_test]] = True
    return train, val, test


# -- synthetic graphs -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    family: str
    n: int
    seed: int = 0
    feature_mode: str = "onehot"
    p_edge: float = 0.5
    n_features: int = 16
    # sbm only
    n_blocks: int = 2
    p_in: float = 0.3
    p_out: float = 0.02
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n < 2:
            raise ValueError("synthetic graphs need n >= 2")
        if not 0.0 < self.p_edge <= 1.0:
            raise ValueError(f"p_edge must lie in (0, 1], got {self.p_edge}")
        if self.feature_mode not in ("onehot", "random_normal", "noisy_label"):
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")


def path_graph(n: int) -> Graph:
    return build_graph([(i, i + 1) for i in range(n - 1)], n=n)


def cycle_graph(n: int) -> Graph:
    if n < 3:
        return path_graph(n)
    return build_graph([(i, (i + 1) % n) for i in range(n)], n=n)


def grid_graph(rows: int, cols: int) -> Graph:
    idx = lambda r, c: r * cols + c  # noqa: E731
    edges = [(idx(r, c), idx(r, c + 1)) for r in range(rows) for c in range(cols - 1)]
    edges += [(idx(r, c), idx(r + 1, c)) for r in range(rows - 1) for c in range(cols)]
    return build_graph(edges, n=rows * cols)


def barbell_graph(n: int) -> Graph:
    """Two cliques of ``n // 2`` and ``n - n // 2`` vertices joined by one edge."""
    k = n // 2
    edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges += [(i, j) for i in range(k, n) for j in range(i + 1, n)]
    edges.append((k - 1, k))
    return build_graph(edges, n=n)


def erdos_renyi(n: int, p_edge: float, seed: int = 0) -> Graph:
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p_edge
    return _from_pairs(n, iu[keep], ju[keep])


def erdos_renyi_m(n: int, m: int, seed: int = 0) -> Graph:
    """Uniform random simple graph with exactly ``m`` edges, built in O(m)."""
    if m > n * (n - 1) // 2:
        raise ValueError(f"cannot place {m} edges on {n} vertices")
    rng = np.random.default_rng(seed)
    keys = np.zeros(0, dtype=np.int64)
    while keys.size < m:
        need = int((m - keys.size) * 1.1) + 16
        i = rng.integers(0, n, size=need)
        j = rng.integers(0, n, size=need)
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        fresh = lo[lo != hi] * n + hi[lo != hi]
        keys = np.unique(np.concatenate([keys, fresh]))
    keys = rng.permutation(keys)[:m]
    return _from_pairs(n, keys // n, keys % n)


def stochastic_block(sizes, p_in: float, p_out: float, seed: int = 0) -> tuple[Graph, np.ndarray]:
    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    n = blocks.size
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    return _from_pairs(n, iu[keep], ju[keep]), blocks


def _from_pairs(n: int, i: np.ndarray, j: np.ndarray) -> Graph:
    r = np.concatenate([i, j])
    c = np.concatenate([j, i])
    a = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    a.sort_indices()
    return Graph(n=n, m=int(i.size), adjacency=a)


def _community_labels(spec: SyntheticSpec) -> np.ndarray:
    n = spec.n
    if spec.family == "grid":
        rows, cols = _grid_shape(n)
        r, c = np.divmod(np.arange(n), cols)
        return (2 * (r >= rows / 2) + (c >= cols / 2)).astype(np.int64)
    return (np.arange(n) >= n // 2).astype(np.int64)


def _grid_shape(n: int) -> tuple[int, int]:
    rows = int(np.floor(np.sqrt(n)))
    while n % rows:
        rows -= 1
    return rows, n // rows


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic toy dataset; labels follow graph communities."""
    fam = spec.family
    labels = None
    if fam == "path":
        g = path_graph(spec.n)
    elif fam == "cycle":
        g = cycle_graph(spec.n)
    elif fam == "grid":
        g = grid_graph(*_grid_shape(spec.n))
    elif fam == "erdos_renyi":
        g = erdos_renyi(spec.n, spec.p_edge, spec.seed)
    elif fam == "barbell":
        g = barbell_graph(spec.n)
    else:
        sizes = np.full(spec.n_blocks, spec.n // spec.n_blocks)
        sizes[: spec.n % spec.n_blocks] += 1
        g, labels = stochastic_block(sizes, spec.p_in, spec.p_out, spec.seed)
    if labels is None:
        labels = _community_labels(spec)
    classes = int(labels.max()) + 1
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    if spec.feature_mode == "onehot":
        x = np.eye(spec.n)
    elif spec.feature_mode == "random_normal":
        x = rng.standard_normal((spec.n, spec.n_features))
    else:
        # weak class signal buried in noise, so the graph has to help
        centers = rng.standard_normal((classes, spec.n_features))
        x = 0.5 * centers[labels] + rng.standard_normal((spec.n, spec.n_features))
    train, val, test = fractional_split(labels, 0.2, 0.2, seed=spec.seed) if spec.n >= 10 else _tiny_split(labels)
    return Dataset(g, x, labels, train, val, test, classes, f"{fam}{spec.n}")


def _tiny_split(labels: np.ndarray):
    n = labels.shape[0]
    train = np.zeros(n, dtype=bool)
    for c in np.unique(labels):
        train[np.flatnonzero(labels == c)[0]] = True
    return train, np.zeros(n, dtype=bool), ~train


def parse_graph_spec(text: str, seed: int = 0) -> Graph:
    """``family:n[:param]`` (e.g. ``cycle:8``, ``erdos_renyi:50:0.1``) or an edge-list path."""
    parts = text.split(":")
    if parts[0] in FAMILIES and len(parts) >= 2:
        n = int(parts[1])
        kw = {"p_edge": float(parts[2])} if parts[0] == "erdos_renyi" and len(parts) > 2 else {}
        return generate_synthetic(SyntheticSpec(parts[0], n, seed=seed, **kw)).graph
    if parts[0] == "er_m" and len(parts) == 3:
        return erdos_renyi_m(int(parts[1]), int(parts[2]), seed)
    if Path(text).exists():
        return read_edge_list(text)
    raise DatasetError(f"cannot interpret graph {text!r}; use family:n[:param] or an edge-list path")
