"""Oracle verification and scaling measurements shared by the CLI and tests."""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .dataio import erdos_renyi_m
from .design import FilterCoefficients, frequency_response
from .engine import apply_feedback_looped, initial_error_bound, required_iterations
from .graph import Graph, LaplacianOperator, scaled_normalized_laplacian
from .spectral import SpectralDecomposition, eigendecompose, exact_filter

MAX_VERIFY_ITERS = 5000


@dataclass
class OracleCheck:
    rel_error: float
    iterations: int
    t_max: int
    # max |sum_j psi_j lam^j| over the operator's eigenvalues
    contraction: float
    excluded: bool
    matvecs: int
    expected_matvecs: int


def contraction_on_spectrum(c: FilterCoefficients, eigenvalues: np.ndarray) -> float:
    if c.p == 0:
        return 0.0
    lam = np.asarray(eigenvalues)
    return float(np.abs(np.polynomial.polynomial.polyval(lam, np.concatenate([[0.0], c.psi]))).max())


def oracle_check(
    op: LaplacianOperator,
    c: FilterCoefficients,
    x: np.ndarray,
    tol: float = 1e-10,
    t_max: int | None = None,
    dec: SpectralDecomposition | None = None,
) -> OracleCheck:
    """Compare the recursion with exact spectral filtering on one signal.

    ``tol`` is relative to ``max|x|``. Unless given, ``t_max`` is the
    iteration count predicted by :func:`required_iterations`. Runs whose
    feedback polynomial does not contract on the true spectrum are
    reported as excluded and not executed.
    """
    if dec is None:
        dec = eigendecompose(op)
    rho = contraction_on_spectrum(c, dec.eigenvalues)
    scale = float(np.abs(x).max()) or 1.0
    if t_max is None:
        t_max = min(required_iterations(c, tol * scale, max(initial_error_bound(op, c, x), tol * scale)), MAX_VERIFY_ITERS)
    if rho >= 1.0:
        return OracleCheck(float("nan"), 0, t_max, rho, True, 0, 0)
    before = op.counter.count
    run = apply_feedback_looped(op, c, x, t_max=t_max, tol=tol * scale)
    used = op.counter.count - before
    want = exact_filter(dec, lambda lam: frequency_response(c, lam), x)
    denom = np.linalg.norm(want)
    err = np.linalg.norm(run.signal - want) / (denom if denom > 0 else 1.0)
    return OracleCheck(float(err), run.iterations, t_max, rho, False, used, run.iterations * c.p + c.q)


@dataclass
class BenchRecord:
    m: int
    n: int
    seconds: float
    peak_bytes: int
    matvecs: int
    iterations: int


def bench_filter(
    c: FilterCoefficients,
    sizes,
    avg_degree: float = 10.0,
    iterations: int = 10,
    repeats: int = 3,
    seed: int = 0,
) -> list[BenchRecord]:
    """Time a fixed number of recursion steps on random graphs of ``m`` edges.

    ``n = 2 m / avg_degree``; timings are best-of-``repeats``. Peak memory
    covers building the operator and filtering one signal.
    """
    out = []
    for m in sizes:
        m = int(m)
        n = max(2, int(round(2 * m / avg_degree)))
        g = erdos_renyi_m(n, m, seed=seed)
        x = np.random.default_rng(seed).standard_normal(n)
        tracemalloc.start()
        op = scaled_normalized_laplacian(g)
        run = apply_feedback_looped(op, c, x, t_max=iterations, tol=0.0)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        best = float("inf")
        for _ in range(repeats):
            op.counter.reset()
            t0 = time.perf_counter()
            apply_feedback_looped(op, c, x, t_max=iterations, tol=0.0)
            best = min(best, time.perf_counter() - t0)
        out.append(BenchRecord(m, n, best, int(peak), op.counter.count, run.iterations))
    return out


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def linear_fit_ratio(x, y) -> float:
    """Worst ratio between a measurement and the least-squares line ``a x + b``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    a, b = np.polyfit(x, y, 1)
    fit = a * x + b
    if np.any(fit <= 0):
        return float("inf")
    r = y / fit
    return float(max(r.max(), 1.0 / r.min()))


def graph_summary(g: Graph) -> dict:
    deg = g.degrees()
    return {"n": g.n, "m": g.m, "max_degree": float(deg.max()) if g.n else 0.0, "isolated": int((deg == 0).sum())}
