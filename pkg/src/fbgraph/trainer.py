"""Full-graph semi-supervised training and multi-run experiment suites."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .dataio import Dataset, fractional_split
from .engine import write_signal
from .model import (
    GraphOperators,
    ModelConfig,
    ModelError,
    Params,
    apply_unit_norm_constraint,
    backward,
    build_operators,
    cross_entropy,
    design_for_config,
    forward,
    init_params,
    l2_penalty,
)

logger = logging.getLogger(__name__)


def derive_seed(root: int, name: str) -> int:
    """64-bit seed for subsystem ``name``: the first 8 bytes of sha256("root/name")."""
    digest = hashlib.sha256(f"{int(root)}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Adam:
    """Adam with bias correction over a dict of arrays."""

    def __init__(self, lr: float = 0.002, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: Params, grads: Params) -> Params:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out: Params = {}
        for k, w in params.items():
            g = grads[k]
            m = self.m[k] = b1 * self.m.get(k, 0.0) + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v.get(k, 0.0) + (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            out[k] = w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    runs: int = 10
    # "standard" uses the dataset's own masks; "fractional" draws a
    # stratified split with ``train_fraction`` labelled vertices per run
    split: str = "standard"
    train_fraction: float = 0.052
    val_fraction: float = 0.1
    unit_norm: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate >= 0.0:
            raise ValueError("learning_rate must be non-negative")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.split not in ("standard", "fractional"):
            raise ValueError(f"unknown split {self.split!r}")


@dataclass
class RunMetrics:
    seed: int
    epochs: list[dict] = field(default_factory=list)
    test_accuracy: float = float("nan")
    test_loss: float = float("nan")
    failed: bool = False
    failure: str = ""
    matvecs: int = 0
    wall_time: float = 0.0
    params: Params | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "kind": "summary",
            "seed": self.seed,
            "test_accuracy": self.test_accuracy,
            "test_loss": self.test_loss,
            "failed": self.failed,
            "failure": self.failure,
            "matvecs": self.matvecs,
            "wall_time": self.wall_time,
            "epochs_run": len(self.epochs),
        }

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.epochs:
                fh.write(json.dumps({"kind": "epoch", **rec}) + "\n")
            fh.write(json.dumps(self.summary()) + "\n")


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    return float((logits[mask].argmax(axis=1) == labels[mask]).mean())


def prepare_features(x: np.ndarray, density_threshold: float = 0.2):
    """CSR when the feature matrix is sparse enough to benefit from it."""
    if sp.issparse(x):
        return x.tocsr()
    if x.size and np.count_nonzero(x) / x.size < density_threshold:
        return sp.csr_matrix(x)
    return np.asarray(x, dtype=np.float64)


def _masks_for_run(ds: Dataset, tc: TrainConfig, seed: int):
    if tc.split == "standard":
        if not ds.train_mask.any():
            raise ValueError(f"dataset {ds.name!r} has an empty training split")
        return ds.train_mask, ds.val_mask, ds.test_mask
    return fractional_split(ds.labels, tc.train_fraction, tc.val_fraction, seed=derive_seed(seed, "split"))


def train(
    config: ModelConfig,
    tc: TrainConfig,
    ds: Dataset,
    seed: int | None = None,
    ops: GraphOperators | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> RunMetrics:
    """One training run; the returned metrics carry the final parameters."""
    seed = config.seed if seed is None else seed
    if ops is None:
        ops = build_operators(ds.graph, config)
    train_m, val_m, test_m = _masks_for_run(ds, tc, seed)
    if (train_m & val_m).any() or (train_m & test_m).any() or (val_m & test_m).any():
        raise ValueError("split masks overlap")
    x = prepare_features(ds.features)
    labels = ds.labels
    params = init_params(config, ds.n_features, ds.class_count, seed=derive_seed(seed, "init"), ops=ops)
    if tc.unit_norm:
        params = apply_unit_norm_constraint(params)
    rng = np.random.default_rng(derive_seed(seed, "dropout"))
    opt = Adam(tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
    run = RunMetrics(seed=seed)
    start_count = ops.laplacian.counter.count
    t_start = time.perf_counter()
    try:
        for epoch in range(tc.epochs):
            t0 = time.perf_counter()
            logits, trace = forward(config, params, ops, x, mode="train", rng=rng)
            tr_loss = cross_entropy(trace.probs, labels, train_m) + l2_penalty(params, config.l2_coeff)
            if not math.isfinite(tr_loss):
                raise ModelError(f"non-finite training loss at epoch {epoch}")
            grads = backward(config, params, ops, trace, labels, train_m)
            params = opt.step(params, grads)
            if tc.unit_norm:
                params = apply_unit_norm_constraint(params)
            ev_logits, ev = forward(config, params, ops, x, mode="eval")
            rec = {
                "epoch": epoch,
                "train_loss": tr_loss,
                "train_acc": accuracy(logits, labels, train_m),
                "val_loss": cross_entropy(ev.probs, labels, val_m) if val_m.any() else float("nan"),
                "val_acc": accuracy(ev_logits, labels, val_m),
                "time": time.perf_counter() - t0,
                "matvecs": ops.laplacian.counter.count - start_count,
            }
            run.epochs.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
    except (ModelError, FloatingPointError) as exc:
        run.failed, run.failure = True, str(exc)
        logger.warning("run with seed %d failed: %s", seed, exc)
    if not run.failed:
        logits, ev = forward(config, params, ops, x, mode="eval")
        run.test_accuracy = accuracy(logits, labels, test_m)
        run.test_loss = cross_entropy(ev.probs, labels, test_m) if test_m.any() else float("nan")
    run.matvecs = ops.laplacian.counter.count - start_count
    run.wall_time = time.perf_counter() - t_start
    run.params = params
    return run


@dataclass
class SuiteRow:
    label: str
    config: ModelConfig
    accuracies: list[float]
    failures: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0 if self.accuracies else float("nan")
        return float(np.std(self.accuracies, ddof=1))


def run_seeds(root_seed: int, runs: int) -> list[int]:
    return [derive_seed(root_seed, f"run{r}") for r in range(runs)]


def run_suite(
    configs: dict[str, ModelConfig] | Iterable[tuple[str, ModelConfig]],
    tc: TrainConfig,
    ds: Dataset,
    runs: int | None = None,
    root_seed: int = 0,
    run_dir: str | Path | None = None,
) -> list[SuiteRow]:
    """Train every configuration ``runs`` times with shared per-run seeds.

    Failed runs are counted and left out of the mean and sample std.
    """
    items = list(configs.items()) if isinstance(configs, dict) else list(configs)
    if not items:
        raise ValueError("configuration grid is empty")
    runs = tc.runs if runs is None else runs
    seeds = run_seeds(root_seed, runs)
    rows = []
    for label, cfg in items:
        coeffs = design_for_config(cfg) if cfg.filter == "feedback" else None
        ops = build_operators(ds.graph, cfg, coeffs)
        accs, failures = [], 0
        for r, s in enumerate(seeds):
            m = train(cfg, tc, ds, seed=s, ops=ops)
            if run_dir is not None:
                d = Path(run_dir) / "runs"
                d.mkdir(parents=True, exist_ok=True)
                m.write_jsonl(d / f"{_slug(label)}_run{r}.jsonl")
            if m.failed:
                failures += 1
            else:
                accs.append(m.test_accuracy)
            logger.info("%s run %d: test acc %.4f", label, r, m.test_accuracy)
        rows.append(SuiteRow(label, cfg, accs, failures))
    return rows


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


def write_suite_csv(rows: list[SuiteRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "p", "q", "filter", "dense", "scaled_normalization", "cutoff", "runs", "failures", "mean_acc", "std_acc"])
        for r in rows:
            c = r.config
            w.writerow([r.label, c.p, c.q, c.filter, int(c.dense), int(c.scaled_normalization), int(c.cutoff),
                        len(r.accuracies), r.failures, f"{r.mean:.6f}", f"{r.std:.6f}"])


def sweep_configs(base: ModelConfig, ps: Iterable[int], qs: Iterable[int]) -> dict[str, ModelConfig]:
    return {f"p{p}_q{q}": replace(base, p=p, q=q) for p in ps for q in qs}


def ablation_configs(base: ModelConfig) -> dict[str, ModelConfig]:
    return {
        "both": replace(base, scaled_normalization=True, cutoff=True),
        "cutoff_only": replace(base, scaled_normalization=False, cutoff=True),
        "scaled_only": replace(base, scaled_normalization=True, cutoff=False),
    }


def export_embeddings(
    config: ModelConfig,
    params: Params,
    ds: Dataset,
    layer_index: int,
    path: str | Path | None = None,
    ops: GraphOperators | None = None,
    binary: bool | None = None,
) -> np.ndarray:
    """Eval-mode activations of spectral layer ``layer_index`` (0-based)."""
    n_layers = len(config.layer_widths)
    if not 0 <= layer_index < n_layers:
        raise IndexError(f"layer index {layer_index} out of range for a {n_layers}-layer model")
    if ops is None:
        ops = build_operators(ds.graph, config)
    _, trace = forward(config, params, ops, prepare_features(ds.features), mode="eval")
    emb = trace.post[layer_index]
    if path is not None:
        write_signal(emb, path, binary=binary)
    return emb
