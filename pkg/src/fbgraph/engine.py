"""Applying designed filters to graph signals.

``apply_feedback_looped`` runs the recursion

    x_bar(0) = x,   x_bar(t) = -sum_j psi_j L^j x_bar(t-1) + sum_j phi_j L^j x

using only sparse products: the feedforward term is computed once (``q``
products) and each iteration costs ``p`` products, so ``t`` iterations cost
exactly ``t * p + q``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .design import FilterCoefficients
from .graph import LaplacianOperator, spmv

DEFAULT_TOL = 1e-6
DEFAULT_T_MAX = 50


class FilterError(RuntimeError):
    pass


class FilterRun(NamedTuple):
    signal: np.ndarray
    iterations: int
    final_delta: float


@dataclass
class FilterState:
    x_bar: np.ndarray
    q_term: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class ChebyshevCoefficients:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).reshape(-1))
        if self.theta.size < 1:
            raise ValueError("Chebyshev filter needs at least one coefficient")

    @property
    def k(self) -> int:
        return self.theta.size


def polynomial_apply(op: LaplacianOperator, coef: np.ndarray, x: np.ndarray, start: int = 0) -> np.ndarray:
    """``sum_j coef[j] L^(j + start) x`` with ``len(coef) + start - 1`` products."""
    x = np.asarray(x, dtype=np.float64)
    y = x
    for _ in range(start):
        y = spmv(op, y)
    out = coef[0] * y if len(coef) else np.zeros_like(x)
    for c in coef[1:]:
        y = spmv(op, y)
        out = out + c * y
    return out


def feedback_operator(op: LaplacianOperator, c: FilterCoefficients) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-free ``P = -sum_{j>=1} psi_j L^j`` (``p`` products per call)."""
    neg_psi = -c.psi

    def apply(y: np.ndarray) -> np.ndarray:
        return polynomial_apply(op, neg_psi, y, start=1)

    return apply


def feedforward_operator(op: LaplacianOperator, c: FilterCoefficients) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-free ``Q = sum_{j>=0} phi_j L^j`` (``q`` products per call)."""
    phi = c.phi

    def apply(y: np.ndarray) -> np.ndarray:
        return polynomial_apply(op, phi, y)

    return apply


def apply_operator_form(op: LaplacianOperator, c: FilterCoefficients, x: np.ndarray):
    """Return ``(P, Q x)``: ``P`` as a callable and ``Q x`` materialised."""
    return feedback_operator(op, c), feedforward_operator(op, c)(x)


def spectral_radius(apply: Callable[[np.ndarray], np.ndarray], n: int, iters: int = 500, tol: float = 1e-10, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral radius of a symmetric map."""
    if n == 0:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = apply(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        if abs(nw - est) <= tol * max(nw, 1.0):
            return float(nw)
        est = nw
        v = w / nw
    return float(est)


def apply_feedback_looped(
    op: LaplacianOperator,
    c: FilterCoefficients,
    x: np.ndarray,
    t_max: int = DEFAULT_T_MAX,
    tol: float = DEFAULT_TOL,
    strict_stability: bool = False,
    history: list[float] | None = None,
) -> FilterRun:
    """Feedback-looped filtering of ``x`` (a vector or an ``n x f`` block).

    Stops once the successive difference ``max|x_bar(t) - x_bar(t-1)|`` is
    at most ``tol`` or after ``t_max`` iterations. With ``strict_stability``
    the spectral radius of the feedback polynomial on this operator is
    checked first and must be below one. When ``history`` is given, the
    l2 norm of every successive difference is appended to it.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    if strict_stability:
        rho = spectral_radius(feedback_operator(op, c), op.n)
        if rho >= 1.0:
            raise FilterError(f"feedback polynomial has spectral radius {rho:.6g} >= 1 on this operator")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != op.n:
        raise ValueError(f"dimension mismatch: operator is {op.n}x{op.n}, signal has shape {x.shape}")
    state = FilterState(x_bar=x, q_term=polynomial_apply(op, c.phi, x))
    neg_psi = -c.psi
    delta = math.inf
    while state.t < t_max:
        nxt = polynomial_apply(op, neg_psi, state.x_bar, start=1) + state.q_term
        state.t += 1
        if not np.all(np.isfinite(nxt)):
            raise FilterError(f"non-finite values at iteration {state.t}; the recursion is unstable on this operator")
        diff = nxt - state.x_bar
        delta = float(np.abs(diff).max()) if diff.size else 0.0
        if history is not None:
            history.append(float(np.linalg.norm(diff)))
        state.x_bar = nxt
        if delta <= tol:
            break
    return FilterRun(state.x_bar, state.t, delta)


def arma_solve_dense(op: LaplacianOperator, c: FilterCoefficients, x: np.ndarray) -> np.ndarray:
    """Direct solve of ``(I + sum psi_j L^j) y = (sum phi_j L^j) x`` (small graphs)."""
    a = op.dense()
    n = a.shape[0]
    den = np.eye(n)
    num = c.phi[0] * np.eye(n)
    power = np.eye(n)
    for j in range(1, max(c.p, c.q) + 1):
        power = power @ a
        if j <= c.p:
            den += c.psi[j - 1] * power
        if j <= c.q:
            num += c.phi[j] * power
    return np.linalg.solve(den, num @ np.asarray(x, dtype=np.float64))


def apply_chebyshev(op: LaplacianOperator, c: ChebyshevCoefficients, x: np.ndarray) -> np.ndarray:
    """``sum_j theta_j T_j(L) x`` by the three-term recurrence (``k - 1`` products).

    ``op`` should already be rescaled into ``[-1, 1]``
    (see :func:`fbgraph.graph.chebyshev_operator`).
    """
    x = np.asarray(x, dtype=np.float64)
    t_prev = x
    out = c.theta[0] * t_prev
    if c.k == 1:
        return out
    t_cur = spmv(op, x)
    out = out + c.theta[1] * t_cur
    for j in range(2, c.k):
        t_prev, t_cur = t_cur, 2.0 * spmv(op, t_cur) - t_prev
        out = out + c.theta[j] * t_cur
    return out


def chebyshev_basis(op: LaplacianOperator, x: np.ndarray, k: int) -> list[np.ndarray]:
    """``[T_0(L) x, ..., T_{k-1}(L) x]``."""
    out = [np.asarray(x, dtype=np.float64)]
    if k > 1:
        out.append(spmv(op, out[0]))
    for _ in range(2, k):
        out.append(2.0 * spmv(op, out[-1]) - out[-2])
    return out


def required_iterations(c: FilterCoefficients, tol: float, c0: float = 1.0) -> int:
    """Smallest ``T >= 1`` with ``gamma**T * c0 <= tol``.

    With ``c0 = initial_error_bound(...)`` this bounds the iteration at which
    :func:`apply_feedback_looped` stops, given contraction at rate ``gamma``.
    """
    g = c.gamma
    if not g < 1.0:
        raise ValueError(f"gamma must be below 1 for convergence, got {g}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    t, bound = 1, g * c0
    while bound > tol:
        t += 1
        bound *= g
    return t


def initial_error_bound(op: LaplacianOperator, c: FilterCoefficients, x: np.ndarray) -> float:
    """``||x_bar(1) - x_bar(0)||_2 / gamma``, so that ``gamma**t`` times it bounds step ``t``."""
    x = np.asarray(x, dtype=np.float64)
    first = polynomial_apply(op, -c.psi, x, start=1) + polynomial_apply(op, c.phi, x)
    return float(np.linalg.norm(first - x)) / c.gamma


# -- signal files ------------------------------------------------------------

MAGIC = b"DFSG"


def write_signal(x: np.ndarray, path: str | Path, binary: bool | None = None) -> None:
    """Write an ``n x f`` matrix (a vector is stored as ``n x 1``).

    Binary layout: ``DFSG``, u32 n, u32 f, u32 reserved, then little-endian
    float64 values in row-major order. Binary is chosen by a ``.bin`` suffix
    unless ``binary`` is given.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    n, f = x.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<III", n, f, 0))
            fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{n} {f}\n")
            for row in x:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_signal(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        raw = path.read_bytes()
        n, f, _ = struct.unpack("<III", raw[4:16])
        body = raw[16:]
        if len(body) != 8 * n * f:
            raise ValueError(f"{path}: expected {n}x{f} float64 values, found {len(body)} bytes")
        return np.frombuffer(body, dtype="<f8").reshape(n, f).astype(np.float64)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected header 'n f'")
        n, f = int(header[0]), int(header[1])
        out = np.empty((n, f))
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != f:
                raise ValueError(f"{path}:{i + 2}: expected {f} values, found {len(parts)}")
            out[i] = [float(v) for v in parts]
    return out
