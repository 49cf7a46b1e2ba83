"""Exact spectral filtering on small graphs.

The eigensolver here is a plain dense symmetric one: Householder reduction
to tridiagonal form followed by implicit-shift QL. It exists to provide
ground truth for the approximate filters, so it favours clarity over speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import LaplacianOperator

ORACLE_CAP = 2000
QL_TOL = 1e-12


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _scaled_norm(x: np.ndarray) -> float:
    s = float(np.abs(x).max()) if x.size else 0.0
    return s * float(np.sqrt(np.sum((x / s) ** 2))) if s > 0.0 else 0.0


def tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Householder reduction ``a = Q T Q^T``.

    Returns ``(diag, offdiag, Q)`` where ``offdiag[k] = T[k+1, k]``.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    q = np.eye(n)
    # columns below this are already reduced up to round-off; reflecting
    # them would only lose orthogonality to underflow
    negligible = np.finfo(np.float64).eps * max(np.abs(a).max(), np.finfo(np.float64).tiny) if n else 0.0
    for k in range(n - 2):
        x = a[k + 1 :, k]
        norm_x = _scaled_norm(x)
        if norm_x <= negligible:
            a[k + 2 :, k] = 0.0
            a[k, k + 2 :] = 0.0
            continue
        alpha = -norm_x if x[0] >= 0 else norm_x
        v = x.copy()
        v[0] -= alpha
        nv = _scaled_norm(v)
        if nv == 0.0:
            continue
        v /= nv
        # symmetric rank-2 update of the trailing block, H = I - 2 v v^T
        blk = a[k + 1 :, k + 1 :]
        p = blk @ v
        w = 2.0 * (p - (v @ p) * v)
        blk -= np.outer(v, w) + np.outer(w, v)
        a[k + 1 :, k] = 0.0
        a[k, k + 1 :] = 0.0
        a[k + 1, k] = a[k, k + 1] = alpha
        q[:, k + 1 :] -= 2.0 * np.outer(q[:, k + 1 :] @ v, v)
    return np.diag(a).copy(), np.diag(a, -1).copy(), q


def tridiagonal_ql(
    d: np.ndarray,
    e: np.ndarray,
    z: np.ndarray,
    tol: float = QL_TOL,
    max_iter: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    ``d`` is the diagonal, ``e`` the sub-diagonal (length ``n - 1``) and ``z``
    the accumulated orthogonal transform; rotations are applied to its
    columns. Eigenpairs are returned sorted ascending.
    """
    n = d.shape[0]
    d = d.astype(np.float64).copy()
    z = z.astype(np.float64).copy()
    ee = np.zeros(n)
    ee[: n - 1] = e
    if max_iter is None:
        max_iter = 50 * max(n, 1)
    total = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(ee[m]) <= tol * dd:
                    break
                m += 1
            if m == l:
                break
            total += 1
            if total > max_iter:
                raise OracleError(f"QL iteration did not converge within {max_iter} sweeps")
            g = (d[l + 1] - d[l]) / (2.0 * ee[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + ee[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * ee[i]
                b = c * ee[i]
                r = math.hypot(f, g)
                ee[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    ee[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                z[:, i] = c * zi - s * z[:, i + 1]
                z[:, i + 1] = s * zi + c * z[:, i + 1]
                i -= 1
            if deflated:
                continue
            d[l] -= p
            ee[l] = g
            ee[m] = 0.0
    order = np.argsort(d, kind="stable")
    return d[order], z[:, order]


def eigendecompose(
    op: LaplacianOperator | np.ndarray,
    cap: int = ORACLE_CAP,
    method: str = "ql",
) -> SpectralDecomposition:
    """Dense eigendecomposition of a symmetric operator.

    ``method="ql"`` uses the in-repo solver; ``"lapack"`` defers to
    ``numpy.linalg.eigh`` and is only meant for cross-checking.
    """
    a = op.dense() if isinstance(op, LaplacianOperator) else np.asarray(op, dtype=np.float64)
    n = a.shape[0]
    if n > cap:
        raise OracleError(f"operator has n={n} vertices, above the oracle cap of {cap}")
    if a.shape != (n, n):
        raise OracleError(f"operator must be square, got {a.shape}")
    a = 0.5 * (a + a.T)
    if method == "lapack":
        w, u = np.linalg.eigh(a)
        return SpectralDecomposition(w, u)
    if method != "ql":
        raise ValueError(f"unknown method {method!r}")
    if n == 0:
        return SpectralDecomposition(np.zeros(0), np.zeros((0, 0)))
    d, e, q = tridiagonalize(a)
    w, u = tridiagonal_ql(d, e, q)
    return SpectralDecomposition(w, u)


def _check_dim(dec: SpectralDecomposition, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != dec.n:
        raise ValueError(f"dimension mismatch: decomposition has n={dec.n}, signal has {x.shape[0]}")
    return x


def graph_fourier(dec: SpectralDecomposition, x: np.ndarray) -> np.ndarray:
    return dec.eigenvectors.T @ _check_dim(dec, x)


def inverse_graph_fourier(dec: SpectralDecomposition, xhat: np.ndarray) -> np.ndarray:
    return dec.eigenvectors @ _check_dim(dec, xhat)


def exact_filter(
    dec: SpectralDecomposition,
    h: Callable[[float], float],
    x: np.ndarray,
) -> np.ndarray:
    """``U h(Lambda) U^T x`` for a scalar frequency response ``h``."""
    x = _check_dim(dec, x)
    resp = np.empty(dec.n)
    for i, lam in enumerate(dec.eigenvalues):
        v = float(h(float(lam)))
        if not math.isfinite(v):
            raise OracleError(f"frequency response is not finite at eigenvalue {lam!r}")
        resp[i] = v
    xhat = dec.eigenvectors.T @ x
    if xhat.ndim == 1:
        return dec.eigenvectors @ (resp * xhat)
    return dec.eigenvectors @ (resp[:, None] * xhat)
