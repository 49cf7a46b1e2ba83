"""Sparse undirected graphs and their Laplacian operators.

Three Laplacians are exposed, all symmetric and stored in CSR form:

* ``normalized``: ``L = I - D^{-1/2} A D^{-1/2}``
* ``augmented``: ``L_hat = I - D_hat^{-1/2} (A + I) D_hat^{-1/2}``
* ``scaled``: ``L_tilde = L_hat - (lambda_hat_max / 2) I``

Every matrix-vector product goes through :func:`spmv`, which bumps a
per-operator counter so that filter costs can be audited.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

KINDS = ("normalized", "augmented", "scaled", "chebyshev")

POWER_ITER_CAP = 1000
POWER_ITER_TOL = 1e-9
LAMBDA_INFLATE = 1.0 + 1e-9


class GraphError(ValueError):
    """Raised for malformed graph input."""


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph with a symmetric CSR adjacency matrix."""

    n: int
    m: int
    adjacency: sp.csr_matrix = field(repr=False)

    @property
    def indptr(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.adjacency.indices

    @property
    def weights(self) -> np.ndarray:
        return self.adjacency.data

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def edges(self) -> list[tuple[int, int, float]]:
        """Undirected edges as ``(i, j, w)`` with ``i < j``."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[k]), int(coo.col[k]), float(coo.data[k])) for k in order]

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel vertices so that new vertex ``k`` is old vertex ``perm[k]``."""
        perm = np.asarray(perm)
        a = self.adjacency[perm][:, perm]
        return Graph(self.n, self.m, _canonical(a))


@dataclass
class MatvecCounter:
    count: int = 0

    def reset(self) -> None:
        self.count = 0


@dataclass(frozen=True)
class LaplacianOperator:
    """A symmetric sparse operator derived from a graph.

    ``lambda_max_hint`` is the spectral upper bound used for shifting
    (``scaled``) or rescaling (``chebyshev``). ``flagged`` marks operators
    whose bound came from the fallback constant rather than power iteration.
    """

    kind: str
    matrix: sp.csr_matrix = field(repr=False)
    lambda_max_hint: float = 2.0
    flagged: bool = False
    counter: MatvecCounter = field(default_factory=MatvecCounter, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _canonical(a: sp.spmatrix) -> sp.csr_matrix:
    a = sp.csr_matrix(a, dtype=np.float64)
    a.eliminate_zeros()
    a.sort_indices()
    return a


def build_graph(edges: Iterable[Sequence], n: int | None = None) -> Graph:
    """Build a graph from ``(i, j[, weight])`` tuples.

    Weights default to 1.0. Self-loops, duplicate undirected edges,
    non-positive weights and out-of-range ids are rejected.
    """
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    seen: set[tuple[int, int]] = set()
    max_id = -1
    for k, e in enumerate(edges):
        if len(e) not in (2, 3):
            raise GraphError(f"edge {k}: expected (i, j[, w]), got {e!r}")
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) == 3 else 1.0
        if i < 0 or j < 0:
            raise GraphError(f"edge {k}: negative vertex id in {e!r}")
        if i == j:
            raise GraphError(f"edge {k}: self-loop on vertex {i}")
        if not (w > 0.0 and np.isfinite(w)):
            raise GraphError(f"edge {k}: weight must be positive and finite, got {w}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphError(f"edge {k}: duplicate undirected edge {key}")
        seen.add(key)
        rows.append(i)
        cols.append(j)
        vals.append(w)
        max_id = max(max_id, i, j)
    if n is None:
        n = max_id + 1
    elif max_id >= n:
        raise GraphError(f"vertex id {max_id} out of range for n={n}")
    if n < 0:
        raise GraphError("vertex count must be non-negative")
    r = np.array(rows + cols, dtype=np.int64)
    c = np.array(cols + rows, dtype=np.int64)
    v = np.array(vals + vals, dtype=np.float64)
    a = sp.coo_matrix((v, (r, c)), shape=(n, n))
    return Graph(n=n, m=len(seen), adjacency=_canonical(a))


def graph_from_adjacency(a) -> Graph:
    """Wrap a symmetric non-negative matrix (dense or sparse) as a Graph."""
    a = _canonical(sp.csr_matrix(a))
    if a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got {a.shape}")
    if a.diagonal().any():
        raise GraphError("adjacency has non-zero diagonal")
    if (a.data < 0).any():
        raise GraphError("adjacency has negative weights")
    if a.nnz and abs(a - a.T).max() > 0.0:
        raise GraphError("adjacency is not symmetric")
    return Graph(n=a.shape[0], m=a.nnz // 2, adjacency=a)


def read_edge_list(path: str | Path, n: int | None = None) -> Graph:
    """Read ``i<TAB>j[<TAB>w]`` lines; ``#`` lines are comments."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split("\t") if "\t" in s else s.split()
            try:
                if len(parts) == 2:
                    edges.append((int(parts[0]), int(parts[1])))
                elif len(parts) == 3:
                    edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
                else:
                    raise ValueError(f"expected 2 or 3 fields, got {len(parts)}")
            except ValueError as exc:
                raise GraphError(f"{path}:{lineno}: {exc}") from None
    try:
        return build_graph(edges, n=n)
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from None


def write_edge_list(g: Graph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} m={g.m}\n")
        for i, j, w in g.edges():
            if w == 1.0:
                fh.write(f"{i}\t{j}\n")
            else:
                fh.write(f"{i}\t{j}\t{w!r}\n")


def _sym_normalize(a: sp.csr_matrix, deg: np.ndarray) -> sp.csr_matrix:
    """``D^{-1/2} A D^{-1/2}`` with entries bitwise symmetric."""
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    a = sp.csr_matrix(a)
    rows = np.repeat(np.arange(a.shape[0]), np.diff(a.indptr))
    # one rounding per entry: s_i * s_j is commutative, the scaled product is not
    out = a.copy()
    out.data = a.data * (inv_sqrt[rows] * inv_sqrt[a.indices])
    return out


def normalized_laplacian(g: Graph) -> LaplacianOperator:
    """``L = I - D^{-1/2} A D^{-1/2}``; isolated vertices get ``L_ii = 1``."""
    s = _sym_normalize(g.adjacency, g.degrees())
    lap = _canonical(sp.identity(g.n, format="csr") - s)
    return LaplacianOperator("normalized", lap, lambda_max_hint=2.0)


def augmented_laplacian(g: Graph) -> LaplacianOperator:
    """Laplacian of the self-loop augmented adjacency ``A + I``."""
    a_hat = (g.adjacency + sp.identity(g.n, format="csr")).tocsr()
    s = _sym_normalize(a_hat, np.asarray(a_hat.sum(axis=1)).ravel())
    lap = sp.csr_matrix(sp.identity(g.n, format="csr") - s)
    lap.sort_indices()
    return LaplacianOperator("augmented", lap, lambda_max_hint=2.0)


def power_iteration_lambda_max(
    matrix: sp.spmatrix,
    max_iter: int = POWER_ITER_CAP,
    tol: float = POWER_ITER_TOL,
    seed: int = 0,
) -> tuple[float, bool]:
    """Largest eigenvalue of a PSD matrix by power iteration.

    Returns ``(estimate, converged)``. The iteration runs independently on
    every connected component (one vectorised sweep, per-component norms),
    since a global start vector can carry almost no weight on the component
    holding the top eigenvalue and stall near a smaller one.

    A component has converged when successive Rayleigh quotients differ by
    less than ``tol``. The quotient approaches the top eigenvalue from below,
    geometrically; when the spectral gap is small it stops well short of it,
    so each estimate adds twice the extrapolated remaining tail
    ``d r / (1 - r)`` (``d`` the last change, ``r`` the ratio of the last two
    changes).
    """
    n = matrix.shape[0]
    if n == 0:
        return 0.0, True
    matrix = sp.csr_matrix(matrix)
    k, comp = connected_components(matrix, directed=False)
    x = np.random.default_rng(seed).standard_normal(n)

    def per_comp(v):
        return np.bincount(comp, weights=v, minlength=k)

    x /= np.sqrt(per_comp(x * x))[comp]
    prev = np.full(k, np.nan)
    last_step = np.zeros(k)
    est = np.zeros(k)
    active = np.ones(k, dtype=bool)
    for _ in range(max_iter):
        y = matrix @ x
        rq = per_comp(x * y)
        ny = np.sqrt(per_comp(y * y))
        step = np.abs(rq - prev)
        done = active & ((ny == 0.0) | (step < tol))
        if done.any():
            ratio = np.where(last_step > 0, np.minimum(step / np.where(last_step > 0, last_step, 1.0), 1.0 - 1e-6), 0.0)
            tail = np.where(ny == 0.0, 0.0, 2.0 * step * ratio / (1.0 - ratio))
            est[done] = np.where(ny[done] == 0.0, 0.0, rq[done] + tail[done])
            active &= ~done
            if not active.any():
                return float(est.max()), True
        last_step = np.where(np.isnan(step), 0.0, step)
        prev = rq
        x = y / np.where(ny > 0, ny, 1.0)[comp]
    est[active] = prev[active]
    return float(est.max()), False


def scaled_normalized_laplacian(g: Graph, lambda_max_mode: str = "exact") -> LaplacianOperator:
    """``L_tilde = L_hat - (lambda_hat_max / 2) I``.

    ``lambda_max_mode="exact"`` estimates the top eigenvalue of ``L_hat`` by
    power iteration (inflated by ``1 + 1e-9``); ``"bound2"`` uses the
    constant 2. If power iteration hits its cap the bound falls back to 2 and
    the returned operator is flagged.
    """
    aug = augmented_laplacian(g)
    flagged = False
    if lambda_max_mode == "exact":
        lam, ok = power_iteration_lambda_max(aug.matrix)
        if ok:
            lam = min(lam * LAMBDA_INFLATE, 2.0)
        else:
            logger.warning("power iteration did not converge; using lambda_max = 2")
            lam, flagged = 2.0, True
    elif lambda_max_mode == "bound2":
        lam = 2.0
    else:
        raise ValueError(f"unknown lambda_max_mode {lambda_max_mode!r}")
    lap = sp.csr_matrix(aug.matrix - (lam / 2.0) * sp.identity(g.n, format="csr"))
    lap.sort_indices()
    return LaplacianOperator("scaled", lap, lambda_max_hint=lam, flagged=flagged)


def chebyshev_operator(g: Graph, lambda_max: float | None = None) -> LaplacianOperator:
    """``2 L / lambda_max - I`` with spectrum inside ``[-1, 1]``."""
    lap = normalized_laplacian(g).matrix
    if lambda_max is None:
        lam, ok = power_iteration_lambda_max(lap)
        lambda_max = min(lam * LAMBDA_INFLATE, 2.0) if ok and lam > 0 else 2.0
    m = sp.csr_matrix((2.0 / lambda_max) * lap - sp.identity(g.n, format="csr"))
    m.sort_indices()
    return LaplacianOperator("chebyshev", m, lambda_max_hint=lambda_max)


def laplacian(g: Graph, kind: str, lambda_max_mode: str = "exact") -> LaplacianOperator:
    if kind == "normalized":
        return normalized_laplacian(g)
    if kind == "augmented":
        return augmented_laplacian(g)
    if kind == "scaled":
        return scaled_normalized_laplacian(g, lambda_max_mode)
    if kind == "chebyshev":
        return chebyshev_operator(g)
    raise ValueError(f"unknown Laplacian kind {kind!r}; expected one of {KINDS}")


def spmv(op: LaplacianOperator, x: np.ndarray) -> np.ndarray:
    """Sparse product ``op.matrix @ x`` for a vector or an ``n x f`` block.

    A block counts as a single product on the operator's counter.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != op.n:
        raise ValueError(f"dimension mismatch: operator is {op.n}x{op.n}, signal has shape {x.shape}")
    op.counter.count += 1
    return op.matrix @ x
