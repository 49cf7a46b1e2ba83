"""Report figures, rendered off-screen to image files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .design import DesiredResponse, FilterCoefficients, frequency_response  # noqa: E402


def _save(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_response(c: FilterCoefficients, resp: DesiredResponse, path: str | Path) -> None:
    lam = np.linspace(resp.grid_min, resp.grid_max, 512)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.step(resp.grid, resp.target, where="post", color="0.6", label="target")
    ax.plot(lam, frequency_response(c, lam), label=f"designed p={c.p} q={c.q}")
    ax.axvline(resp.lambda_cut, ls=":", color="k", lw=0.8)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("response")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_convergence(history: list[float], gamma: float, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    t = np.arange(1, len(history) + 1)
    ax.semilogy(t, np.maximum(history, 1e-300), label="successive difference")
    if history:
        ax.semilogy(t, history[0] * gamma ** (t - 1.0), ls="--", color="0.5", label=rf"$\gamma^t$ envelope")
    ax.set_xlabel("iteration")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_sweep(ps, qs, means: np.ndarray, path: str | Path) -> None:
    """Heat map of mean accuracy over the (p, q) grid, p along rows."""
    fig, ax = plt.subplots(figsize=(4.5, 3.8))
    im = ax.imshow(means, origin="lower", cmap="viridis")
    ax.set_xticks(range(len(qs)), [str(q) for q in qs])
    ax.set_yticks(range(len(ps)), [str(p) for p in ps])
    ax.set_xlabel("q")
    ax.set_ylabel("p")
    for i in range(len(ps)):
        for j in range(len(qs)):
            if np.isfinite(means[i, j]):
                ax.text(j, i, f"{means[i, j]:.3f}", ha="center", va="center", fontsize=7, color="w")
    fig.colorbar(im, ax=ax, label="mean accuracy")
    _save(fig, path)


def plot_bars(labels, means, stds, path: str | Path, ylabel: str = "mean accuracy") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    x = np.arange(len(labels))
    ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue")
    ax.set_xticks(x, labels, rotation=20)
    ax.set_ylabel(ylabel)
    lo = min((m - s for m, s in zip(means, stds) if np.isfinite(m)), default=0.0)
    ax.set_ylim(max(0.0, lo - 0.05), None)
    _save(fig, path)


def plot_bench(m: np.ndarray, seconds: np.ndarray, peak_bytes: np.ndarray, path: str | Path) -> None:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    a1.loglog(m, seconds, "o-")
    a1.set_xlabel("edges m")
    a1.set_ylabel("filter time (s)")
    a2.loglog(m, peak_bytes / 2**20, "o-", color="tab:orange")
    a2.set_xlabel("edges m")
    a2.set_ylabel("peak memory (MiB)")
    _save(fig, path)
