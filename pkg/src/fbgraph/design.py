"""Coefficient design for feedback-looped (rational) graph filters.

The desired response is an ideal high-pass step sampled on a uniform
frequency grid. Coefficients ``psi`` (feedback) and ``phi`` (feedforward)
minimise the linearised error

    || h + diag(h) alpha psi - beta phi ||_2   s.t.   || alpha psi ||_inf <= gamma

where ``alpha`` and ``beta`` are Vandermonde matrices on the grid. ``phi`` is
eliminated in closed form and the remaining inequality-constrained least
squares problem in ``psi`` is solved with a primal active-set method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_N_GRID = 128
DEFAULT_GRID_MAX = 2.0
MAX_QP_ITER = 20000


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class DesiredResponse:
    grid: np.ndarray
    binary: np.ndarray
    target: np.ndarray
    lambda_cut: float
    eta: float

    @property
    def n_grid(self) -> int:
        return self.grid.shape[0]

    @property
    def grid_min(self) -> float:
        return float(self.grid[0])

    @property
    def grid_max(self) -> float:
        return float(self.grid[-1])


@dataclass(frozen=True)
class DesignMatrices:
    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class FilterCoefficients:
    psi: np.ndarray
    phi: np.ndarray
    gamma: float
    residual: float = 0.0
    stability_margin: float = 0.0
    eta: float = float("nan")
    converged: bool = True
    # sup of |sum_j psi_j lam^j| over ``stability_interval``
    certified_bound: float = float("nan")
    stability_interval: tuple[float, float] = (-1.0, 2.0)
    n_grid: int = DEFAULT_N_GRID
    grid_min: float = 0.0
    grid_max: float = DEFAULT_GRID_MAX
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def p(self) -> int:
        return self.psi.shape[0]

    @property
    def q(self) -> int:
        return self.phi.shape[0] - 1

    def design_alpha(self) -> np.ndarray:
        grid = np.linspace(self.grid_min, self.grid_max, self.n_grid)
        return _vandermonde(grid, 1, self.p)


def manual_coefficients(psi: Sequence[float], phi: Sequence[float], gamma: float | None = None) -> FilterCoefficients:
    """Wrap hand-picked coefficients, recording their stability figures."""
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    phi = np.asarray(phi, dtype=np.float64).reshape(-1)
    if phi.size == 0:
        raise DesignError("phi needs at least the constant term")
    bound = feedback_sup(psi, (-1.0, 2.0))
    if gamma is None:
        gamma = bound
    c = FilterCoefficients(psi=psi, phi=phi, gamma=float(gamma), certified_bound=bound)
    if psi.size:
        c = replace(c, stability_margin=float(gamma - np.abs(c.design_alpha() @ psi).max()))
    else:
        c = replace(c, stability_margin=float(gamma))
    return c


def _vandermonde(x: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Columns ``x**lo, ..., x**hi``."""
    return np.stack([x**j for j in range(lo, hi + 1)], axis=1) if hi >= lo else np.zeros((x.shape[0], 0))


def build_desired_response(
    eta: float,
    n_grid: int = DEFAULT_N_GRID,
    grid_max: float = DEFAULT_GRID_MAX,
    grid_min: float = 0.0,
    p: int | None = None,
    q: int | None = None,
) -> DesiredResponse:
    """Sample the ideal high-pass response on a uniform grid.

    The cut-off is ``grid_max / 2 - eta``; grid points at or above it are in
    the pass band (target 1), the rest in the stop band (target 0).
    """
    if not 0.0 <= eta <= 1.0:
        raise DesignError(f"eta must lie in [0, 1], got {eta}")
    if grid_max <= grid_min:
        raise DesignError(f"grid_max must exceed grid_min, got [{grid_min}, {grid_max}]")
    if n_grid < 2:
        raise DesignError("n_grid must be at least 2")
    if p is not None and q is not None and n_grid < p + q + 2:
        raise DesignError(f"n_grid={n_grid} is too small for p={p}, q={q}; need at least {p + q + 2}")
    grid = np.linspace(grid_min, grid_max, n_grid)
    lambda_cut = grid_max / 2.0 - eta
    binary = (grid >= lambda_cut).astype(np.int8)
    return DesiredResponse(grid=grid, binary=binary, target=binary.astype(np.float64), lambda_cut=lambda_cut, eta=eta)


def build_design_matrices(resp: DesiredResponse, p: int, q: int) -> DesignMatrices:
    if p < 1 or q < 0:
        raise DesignError(f"need p >= 1 and q >= 0, got p={p}, q={q}")
    return DesignMatrices(alpha=_vandermonde(resp.grid, 1, p), beta=_vandermonde(resp.grid, 0, q))


def linearized_error(resp: DesiredResponse, mats: DesignMatrices, psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    h = resp.target
    return h + h * (mats.alpha @ psi) - mats.beta @ phi


def _feedback(psi: np.ndarray, lam):
    return np.polynomial.polynomial.polyval(lam, np.concatenate([[0.0], psi]))


def _extrema(psi: np.ndarray, interval: tuple[float, float]) -> list[float]:
    """Endpoints plus real critical points of the feedback polynomial."""
    lo, hi = interval
    pts = [lo, hi]
    deriv = psi * np.arange(1, psi.size + 1)
    # negligible leading terms would send the companion matrix astray
    deriv = np.polynomial.polynomial.polytrim(deriv, tol=1e-14 * np.abs(deriv).max()) if deriv.any() else deriv[:1]
    if deriv.size > 1:
        crit = np.polynomial.polynomial.polyroots(deriv)
        # real parts of all roots: a superset of the true critical points
        pts.extend(float(r.real) for r in np.atleast_1d(crit) if lo <= r.real <= hi)
    return pts


def feedback_sup(psi: np.ndarray, interval: tuple[float, float]) -> float:
    """Exact ``max |sum_j psi_j lam^j|`` for ``lam`` in ``interval``."""
    psi = np.asarray(psi, dtype=np.float64)
    if psi.size == 0 or not psi.any():
        return 0.0
    return float(np.max(np.abs(_feedback(psi, np.asarray(_extrema(psi, interval))))))


class _ActiveSetLSQ:
    """min 0.5 ||b + M x||^2  s.t.  |C x| <= gamma, started from x = 0."""

    def __init__(self, m: np.ndarray, b: np.ndarray, c: np.ndarray, gamma: float, max_iter: int):
        self.m, self.b, self.gamma = m, b, gamma
        self.a = np.vstack([c, -c])
        self.max_iter = max_iter
        self.feas_tol = 1e-12 * max(1.0, gamma)

    def _eqp(self, work: list[int]) -> np.ndarray:
        """Minimiser of the objective on ``A_W x = gamma``."""
        p = self.m.shape[1]
        if not work:
            sol, *_ = np.linalg.lstsq(self.m, -self.b, rcond=None)
            return sol
        aw = self.a[work]
        x0, *_ = np.linalg.lstsq(aw, np.full(len(work), self.gamma), rcond=None)
        _, s, vt = np.linalg.svd(aw)
        rank = int((s > 1e-12 * s[0]).sum())
        null = vt[rank:].T
        if null.shape[1] == 0:
            return x0
        y, *_ = np.linalg.lstsq(self.m @ null, -(self.b + self.m @ x0), rcond=None)
        return x0 + null @ y

    def solve(self, x0: np.ndarray | None = None) -> tuple[np.ndarray, bool, int]:
        p = self.m.shape[1]
        x = np.zeros(p)
        if x0 is not None and x0.any():
            # shrink a warm start into the interior of the feasible set
            worst = float(np.abs(self.a @ x0).max())
            x = x0 * min(1.0, self.gamma / worst) * (1.0 - 1e-9)
        work: list[int] = []
        for it in range(1, self.max_iter + 1):
            target = self._eqp(work)
            d = target - x
            if np.linalg.norm(d) <= 1e-13 * max(1.0, np.linalg.norm(x)):
                if not work:
                    return x, True, it
                grad = self.m.T @ (self.b + self.m @ x)
                mu, *_ = np.linalg.lstsq(self.a[work].T, -grad, rcond=None)
                k = int(np.argmin(mu))
                if mu[k] >= -1e-12 * max(1.0, np.abs(grad).max()):
                    return x, True, it
                work.pop(k)
                continue
            ad = self.a @ d
            slack = self.gamma - self.a @ x
            step, block = 1.0, None
            for i in np.flatnonzero(ad > 1e-15):
                if i in work:
                    continue
                t = max(slack[i], 0.0) / ad[i]
                if t < step:
                    step, block = t, int(i)
            x = x + step * d
            if block is not None:
                work.append(block)
        return x, False, self.max_iter


def design_coefficients(
    resp: DesiredResponse,
    p: int,
    q: int,
    gamma: float,
    stability_interval: tuple[float, float] | str | None = None,
    max_iter: int = MAX_QP_ITER,
    max_cut_rounds: int = 100,
) -> FilterCoefficients:
    """Solve the constrained least-squares design problem.

    ``stability_interval`` widens the stability constraint beyond the design
    grid: by default it covers ``[-grid_max/2, grid_max]`` so that both the
    shifted and the unshifted augmented Laplacian have their spectra inside
    it, and the returned ``psi`` is certified there by rescaling if needed.
    Pass ``"grid"`` to constrain only on the design grid.
    """
    if not 0.0 < gamma < 1.0:
        raise DesignError(f"gamma must lie in (0, 1), got {gamma}")
    if p < 1 or q < 0:
        raise DesignError(f"need p >= 1 and q >= 0, got p={p}, q={q}")
    if resp.n_grid < p + q + 2:
        raise DesignError(f"n_grid={resp.n_grid} is too small for p={p}, q={q}; need at least {p + q + 2}")
    mats = build_design_matrices(resp, p, q)
    h = resp.target
    grid = resp.grid

    if stability_interval is None:
        interval = (min(resp.grid_min, -resp.grid_max / 2.0), resp.grid_max)
    elif stability_interval == "grid":
        interval = (resp.grid_min, resp.grid_max)
    else:
        interval = (float(stability_interval[0]), float(stability_interval[1]))
    certify = stability_interval != "grid"

    # column scaling keeps the Vandermonde blocks well conditioned
    reach = max(abs(interval[0]), abs(interval[1]), abs(resp.grid_min), abs(resp.grid_max))
    scale = reach ** np.arange(1, p + 1)
    qb, _ = np.linalg.qr(mats.beta)
    da = h[:, None] * mats.alpha
    m = da - qb @ (qb.T @ da)
    b = h - qb @ (qb.T @ h)

    # cutting planes: the stability constraint is imposed on the design grid
    # plus the local extrema of the feedback polynomial that violate it
    cuts = grid.copy()
    psi = np.zeros(p)
    converged, iters = True, 0
    if np.any(m):
        for _ in range(max_cut_rounds):
            c_rows = _vandermonde(cuts, 1, p) / scale
            solver = _ActiveSetLSQ(m / scale, b, c_rows, gamma, max_iter)
            y, ok, it = solver.solve(psi * scale)
            iters += it
            converged = converged and ok
            psi = y / scale
            if not certify:
                break
            extra = [x for x in _extrema(psi, interval) if abs(_feedback(psi, x)) > gamma * (1.0 + 1e-9)]
            if not extra:
                break
            cuts = np.union1d(cuts, extra)
        else:
            converged = False
        if not converged:
            logger.warning("coefficient design did not converge (p=%d, q=%d, gamma=%g)", p, q, gamma)

    alpha_cuts = _vandermonde(cuts, 1, p)

    def excess(v: np.ndarray) -> float:
        s = float(np.abs(alpha_cuts @ v).max()) if v.any() else 0.0
        return max(s, feedback_sup(v, interval)) if certify else s

    # snap onto the feasible set exactly; round-off may leave a tiny excess
    for k in range(64):
        sup = excess(psi)
        if sup <= gamma:
            break
        psi = psi * (gamma / sup) * (1.0 - 2.0 ** (k - 52))
    phi, *_ = np.linalg.lstsq(mats.beta, h + h * (mats.alpha @ psi), rcond=None)
    e = h + h * (mats.alpha @ psi) - mats.beta @ phi
    margin = gamma - float(np.abs(mats.alpha @ psi).max())
    logger.debug("design p=%d q=%d gamma=%g: %d iterations, residual %.3e", p, q, gamma, iters, np.linalg.norm(e))
    return FilterCoefficients(
        psi=psi,
        phi=phi,
        gamma=float(gamma),
        residual=float(np.linalg.norm(e)),
        stability_margin=margin,
        eta=float(resp.eta),
        converged=converged,
        certified_bound=feedback_sup(psi, interval),
        stability_interval=interval,
        n_grid=resp.n_grid,
        grid_min=resp.grid_min,
        grid_max=resp.grid_max,
        extra={"iterations": iters},
    )


def design_filter(
    p: int = 5,
    q: int = 3,
    gamma: float = 0.9,
    eta: float = 0.5,
    n_grid: int = DEFAULT_N_GRID,
    grid_max: float = DEFAULT_GRID_MAX,
    **kwargs,
) -> FilterCoefficients:
    resp = build_desired_response(eta, n_grid=n_grid, grid_max=grid_max, p=p, q=q)
    return design_coefficients(resp, p, q, gamma, **kwargs)


def _horner(coef: np.ndarray, lam):
    acc = np.zeros_like(lam, dtype=np.float64)
    for c in coef[::-1]:
        acc = acc * lam + c
    return acc


def frequency_response(c: FilterCoefficients, lam):
    """Rational response ``sum phi_j lam^j / (1 + sum psi_j lam^j)``.

    Accepts a scalar or an array of frequencies.
    """
    scalar = np.isscalar(lam)
    lam = np.asarray(lam, dtype=np.float64)
    num = _horner(c.phi, lam)
    den = 1.0 + lam * _horner(c.psi, lam) if c.p else np.ones_like(lam)
    if np.any(np.abs(den) < 1e-12):
        bad = lam[np.abs(den) < 1e-12] if lam.ndim else lam
        raise DesignError(f"denominator vanishes near frequency {np.ravel(bad)[0]!r}")
    out = num / den
    return float(out) if scalar else out


# -- coefficient files ------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_coefficients(c: FilterCoefficients, path: str | Path) -> None:
    lines = [
        f"p={c.p}",
        f"q={c.q}",
        f"gamma={_fmt(c.gamma)}",
        f"eta={_fmt(c.eta)}",
        f"residual={_fmt(c.residual)}",
        "psi=" + ",".join(_fmt(v) for v in c.psi),
        "phi=" + ",".join(_fmt(v) for v in c.phi),
        f"stability_margin={_fmt(c.stability_margin)}",
        f"certified_bound={_fmt(c.certified_bound)}",
        f"stability_interval={_fmt(c.stability_interval[0])},{_fmt(c.stability_interval[1])}",
        f"n_grid={c.n_grid}",
        f"grid_min={_fmt(c.grid_min)}",
        f"grid_max={_fmt(c.grid_max)}",
        f"converged={int(c.converged)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _floats(s: str) -> np.ndarray:
    s = s.strip()
    return np.array([float(v) for v in s.split(",")]) if s else np.zeros(0)


def read_coefficients(path: str | Path) -> FilterCoefficients:
    kv: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DesignError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    for key in ("p", "q", "gamma", "psi", "phi"):
        if key not in kv:
            raise DesignError(f"{path}: missing '{key}'")
    psi, phi = _floats(kv["psi"]), _floats(kv["phi"])
    if psi.size != int(kv["p"]) or phi.size != int(kv["q"]) + 1:
        raise DesignError(f"{path}: coefficient lengths do not match p={kv['p']}, q={kv['q']}")
    interval = tuple(_floats(kv["stability_interval"])) if "stability_interval" in kv else (-1.0, 2.0)
    return FilterCoefficients(
        psi=psi,
        phi=phi,
        gamma=float(kv["gamma"]),
        residual=float(kv.get("residual", "nan")),
        stability_margin=float(kv.get("stability_margin", "nan")),
        eta=float(kv.get("eta", "nan")),
        converged=bool(int(kv.get("converged", "1"))),
        certified_bound=float(kv.get("certified_bound", "nan")),
        stability_interval=interval,
        n_grid=int(kv.get("n_grid", DEFAULT_N_GRID)),
        grid_min=float(kv.get("grid_min", 0.0)),
        grid_max=float(kv.get("grid_max", DEFAULT_GRID_MAX)),
    )
