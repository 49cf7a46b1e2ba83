"""Command-line entry point.

Every command validates its flags, then writes its outputs (CSV, figures,
coefficient and signal files) plus a ``manifest.json`` under ``--out``.
Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import platform
import subprocess
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger("fbgraph")

DATA_ENV = "FBGRAPH_DATA"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=int, help="feedback degree (default 5)")
    p.add_argument("--q", type=int, help="feedforward degree (default 3)")
    p.add_argument("--gamma", type=float, help="stability budget in (0, 1) (default 0.9)")
    p.add_argument("--eta", type=float, help="cut-off offset in [0, 1] (default 0.5)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file with [model], [train], [filter] sections")
    p.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
    p.add_argument("--out", help="run directory (default runs/<command>-<timestamp>)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help=f"dataset directory, a name under ${DATA_ENV}, or synthetic:<family>:<n>")
    p.add_argument("--no-feature-norm", action="store_true", help="skip row l1 normalisation of features")
    p.add_argument("--runs", type=int, help="runs per configuration")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--split", choices=["standard", "fractional"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fbgraph", description="Feedback-looped graph filters and spectral graph CNNs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="design filter coefficients")
    _add_filter_flags(d)
    d.add_argument("--n-grid", type=int, default=128)
    d.add_argument("--grid-only", action="store_true", help="impose stability only on the design grid")
    _add_common(d)

    a = sub.add_parser("apply", help="filter a signal on a graph")
    a.add_argument("--graph", required=True, help="edge-list path or family:n[:param]")
    a.add_argument("--coefficients", help="coefficient file (otherwise designed from the filter flags)")
    a.add_argument("--signal", help="signal file (otherwise a seeded random vector)")
    _add_filter_flags(a)
    a.add_argument("--tol", type=float, default=1e-6)
    a.add_argument("--t-max", type=int, default=50)
    a.add_argument("--strict-stability", action="store_true")
    a.add_argument("--binary", action="store_true", help="write the output in binary signal format")
    _add_common(a)

    v = sub.add_parser("verify", help="compare the recursion with the exact spectral filter")
    v.add_argument("--graph", required=True)
    _add_filter_flags(v)
    v.add_argument("--tol", type=float, default=1e-10, help="recursion stopping tolerance, relative to max|x|")
    v.add_argument("--t-max", type=int, help="iteration cap (default: predicted from gamma)")
    v.add_argument("--signals", type=int, default=5)
    v.add_argument("--threshold", type=float, default=1e-6)
    _add_common(v)

    b = sub.add_parser("bench", help="time and memory scaling of the recursion")
    b.add_argument("--sizes", type=_ints, default=[10_000, 31_623, 100_000, 316_228, 1_000_000], help="edge counts")
    b.add_argument("--avg-degree", type=float, default=10.0)
    b.add_argument("--t-max", type=int, default=30, help="recursion steps per application")
    b.add_argument("--repeats", type=int, default=5)
    _add_filter_flags(b)
    _add_common(b)

    t = sub.add_parser("train", help="train the spectral CNN")
    _add_data_flags(t)
    _add_filter_flags(t)
    t.add_argument("--filter", choices=["feedback", "chebyshev"])
    t.add_argument("--no-dense", action="store_true")
    _add_common(t)

    s = sub.add_parser("sweep", help="accuracy over a grid of polynomial orders")
    _add_data_flags(s)
    _add_filter_flags(s)
    s.add_argument("--ps", type=_ints, default=[1, 3, 5, 7, 9])
    s.add_argument("--qs", type=_ints, default=[1, 3, 5, 7, 9])
    _add_common(s)

    ab = sub.add_parser("ablate", help="technique ablation or filter-family comparison")
    _add_data_flags(ab)
    _add_filter_flags(ab)
    ab.add_argument("--set", dest="variant_set", choices=["techniques", "filters"], default="techniques")
    _add_common(ab)

    e = sub.add_parser("export-embeddings", help="write hidden-layer activations of a trained model")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--layer", type=int, required=True)
    e.add_argument("--no-feature-norm", action="store_true")
    e.add_argument("--binary", action="store_true")
    _add_common(e)
    return ap


# -- configuration -----------------------------------------------------------


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        return tuple(int(v) for v in value.replace("[", "").replace("]", "").split(",") if v.strip())
    return value.strip()


def load_config(path: str | None):
    from .model import ModelConfig
    from .trainer import TrainConfig

    model_kw, train_kw = {}, {}
    if path:
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise UsageError(f"config file {path} not found")
        mdef, tdef = ModelConfig(), TrainConfig()
        for section, target, defaults in (("model", model_kw, mdef), ("filter", model_kw, mdef), ("train", train_kw, tdef)):
            if not cp.has_section(section):
                continue
            for key, val in cp.items(section):
                key = key.replace("-", "_")
                if not hasattr(defaults, key):
                    raise UsageError(f"{path}: unknown key '{key}' in [{section}]")
                try:
                    target[key] = _coerce(val, getattr(defaults, key))
                except ValueError:
                    raise UsageError(f"{path}: bad value for '{key}': {val!r}") from None
        unknown = set(cp.sections()) - {"model", "filter", "train"}
        if unknown:
            raise UsageError(f"{path}: unknown section(s) {sorted(unknown)}")
    return model_kw, train_kw


def resolve_configs(args):
    from .model import ModelConfig
    from .trainer import TrainConfig

    model_kw, train_kw = load_config(getattr(args, "config", None))
    for flag in ("p", "q", "gamma", "eta"):
        v = getattr(args, flag, None)
        if v is not None:
            model_kw[flag] = v
    if getattr(args, "filter", None):
        model_kw["filter"] = args.filter
    if getattr(args, "no_dense", False):
        model_kw["dense"] = False
    seed = args.seed if args.seed is not None else int(model_kw.get("seed", 0))
    model_kw["seed"] = seed
    for flag, key in (("runs", "runs"), ("epochs", "epochs"), ("lr", "learning_rate"), ("split", "split")):
        v = getattr(args, flag, None)
        if v is not None:
            train_kw[key] = v
    try:
        mc = ModelConfig(**model_kw)
        tc = TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    _check_filter(mc.p, mc.q, mc.gamma, mc.eta)
    return mc, tc, seed


def _check_filter(p, q, gamma, eta):
    if p < 1 or q < 0:
        raise UsageError(f"need p >= 1 and q >= 0, got p={p}, q={q}")
    if not 0.0 < gamma < 1.0:
        raise UsageError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0.0 <= eta <= 1.0:
        raise UsageError(f"eta must lie in [0, 1], got {eta}")


def resolve_dataset_path(text: str) -> str:
    if text.startswith("synthetic:") or Path(text).is_dir():
        return text
    root = os.environ.get(DATA_ENV)
    if root and (Path(root) / text).is_dir():
        return str(Path(root) / text)
    raise UsageError(f"dataset {text!r} not found (not a directory, not under ${DATA_ENV}, not synthetic:<family>:<n>)")


def load_dataset(text: str, feature_norm: bool, seed: int):
    from .dataio import SyntheticSpec, generate_synthetic, load_citation_dataset

    if text.startswith("synthetic:"):
        parts = text.split(":")
        if len(parts) < 3:
            raise UsageError("synthetic datasets are written synthetic:<family>:<n>")
        fam, n = parts[1], int(parts[2])
        kw = {"feature_mode": "noisy_label", "n_features": 32}
        if fam == "sbm":
            kw.update(n_blocks=4, p_in=min(1.0, 20.0 / n), p_out=min(1.0, 2.0 / n))
        return generate_synthetic(SyntheticSpec(fam, n, seed=seed, **kw))
    return load_citation_dataset(text, feature_norm=feature_norm)


# -- run directory -----------------------------------------------------------


def _git_hash() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "fbgraph": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def make_run_dir(args, extra: dict) -> Path:
    out = Path(args.out) if args.out else Path("runs") / f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}"
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if args.argv is None else list(args.argv),
        "seed": args.seed if args.seed is not None else 0,
        "versions": _versions(),
        "git": _git_hash(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return out


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


# -- commands ----------------------------------------------------------------


def _filter_coefficients(args, grid_only: bool = False, n_grid: int = 128):
    from .design import design_filter

    p = args.p if args.p is not None else 5
    q = args.q if args.q is not None else 3
    gamma = args.gamma if args.gamma is not None else 0.9
    eta = args.eta if args.eta is not None else 0.5
    _check_filter(p, q, gamma, eta)
    if n_grid < p + q + 2:
        raise UsageError(f"n_grid={n_grid} is too small for p={p}, q={q}; need at least {p + q + 2}")
    kw = {"stability_interval": "grid"} if grid_only else {}
    return design_filter(p, q, gamma, eta, n_grid=n_grid, **kw)


def cmd_design(args) -> int:
    from .design import build_desired_response, write_coefficients, frequency_response
    from .plotting import plot_response

    _check_filter(*(v if v is not None else d for v, d in zip((args.p, args.q, args.gamma, args.eta), (5, 3, 0.9, 0.5))))
    c = _filter_coefficients(args, args.grid_only, args.n_grid)
    out = make_run_dir(args, {"filter": {"p": c.p, "q": c.q, "gamma": c.gamma, "eta": c.eta, "n_grid": args.n_grid}})
    write_coefficients(c, out / "coefficients.txt")
    resp = build_desired_response(c.eta, n_grid=c.n_grid, p=c.p, q=c.q)
    h = frequency_response(c, resp.grid)
    with open(out / "response.csv", "w", encoding="utf-8") as fh:
        fh.write("lambda,target,response\n")
        for lam, tgt, val in zip(resp.grid, resp.target, h):
            fh.write(f"{lam:.17g},{tgt:g},{val:.17g}\n")
    plot_response(c, resp, out / "response.png")
    print(f"p={c.p} q={c.q} gamma={c.gamma:g} eta={c.eta:g}")
    print(f"residual={c.residual:.6g} stability_margin={c.stability_margin:.3g} "
          f"certified_bound={c.certified_bound:.6g} on [{c.stability_interval[0]:g}, {c.stability_interval[1]:g}] "
          f"converged={c.converged}")
    print(f"wrote {out / 'coefficients.txt'}")
    return 0 if c.converged else 2


def _graph(args, seed):
    from .dataio import DatasetError, parse_graph_spec
    from .graph import GraphError

    try:
        return parse_graph_spec(args.graph, seed=seed)
    except (DatasetError, GraphError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_apply(args) -> int:
    from .design import read_coefficients
    from .engine import apply_feedback_looped, read_signal, write_signal
    from .graph import scaled_normalized_laplacian
    from .plotting import plot_convergence
    from .trainer import derive_seed

    if args.t_max < 1 or args.tol < 0:
        raise UsageError("need --t-max >= 1 and --tol >= 0")
    seed = args.seed or 0
    g = _graph(args, seed)
    c = read_coefficients(args.coefficients) if args.coefficients else _filter_coefficients(args)
    if args.signal:
        x = read_signal(args.signal)
        if x.shape[0] != g.n:
            raise UsageError(f"signal has {x.shape[0]} rows but the graph has {g.n} vertices")
    else:
        x = np.random.default_rng(derive_seed(seed, "signal")).standard_normal((g.n, 1))
    out = make_run_dir(args, {"graph": {"n": g.n, "m": g.m}, "filter": {"p": c.p, "q": c.q, "gamma": c.gamma}})
    op = scaled_normalized_laplacian(g)
    hist: list[float] = []
    run = apply_feedback_looped(op, c, x, t_max=args.t_max, tol=args.tol, strict_stability=args.strict_stability, history=hist)
    write_signal(run.signal, out / ("filtered.bin" if args.binary else "filtered.txt"), binary=args.binary)
    with open(out / "convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("iteration,l2_delta\n")
        for i, dv in enumerate(hist, 1):
            fh.write(f"{i},{dv:.17g}\n")
    plot_convergence(hist, c.gamma, out / "convergence.png")
    print(f"iterations={run.iterations} final_delta={run.final_delta:.3e} matvecs={op.counter.count}")
    if op.flagged:
        print("warning: lambda_max fell back to 2 (power iteration did not converge)")
    return 0


def cmd_verify(args) -> int:
    from .experiments import oracle_check
    from .graph import scaled_normalized_laplacian
    from .spectral import ORACLE_CAP
    from .trainer import derive_seed

    if args.signals < 1 or args.tol <= 0 or (args.t_max is not None and args.t_max < 1):
        raise UsageError("need --signals >= 1, --tol > 0 and --t-max >= 1")
    seed = args.seed or 0
    g = _graph(args, seed)
    if g.n > ORACLE_CAP:
        raise UsageError(f"graph has {g.n} vertices, above the oracle cap of {ORACLE_CAP}")
    c = _filter_coefficients(args)
    out = make_run_dir(args, {"graph": {"n": g.n, "m": g.m}, "filter": {"p": c.p, "q": c.q, "gamma": c.gamma}})
    op = scaled_normalized_laplacian(g)
    rng = np.random.default_rng(derive_seed(seed, "verify"))
    rows, worst, excluded = [], 0.0, 0
    for k in range(args.signals):
        x = rng.standard_normal(g.n)
        chk = oracle_check(op, c, x, tol=args.tol, t_max=args.t_max)
        rows.append(chk)
        if chk.excluded:
            excluded += 1
        else:
            worst = max(worst, chk.rel_error)
    with open(out / "verify.csv", "w", encoding="utf-8") as fh:
        fh.write("signal,rel_error,iterations,t_max,contraction,excluded,matvecs,expected_matvecs\n")
        for k, r in enumerate(rows):
            fh.write(f"{k},{r.rel_error:.6e},{r.iterations},{r.t_max},{r.contraction:.6f},{int(r.excluded)},{r.matvecs},{r.expected_matvecs}\n")
    if excluded == len(rows):
        print(f"excluded: feedback polynomial does not contract on this graph (rate {rows[0].contraction:.4f})")
        return 2
    print(f"max relative error {worst:.3e} over {len(rows) - excluded} signals (threshold {args.threshold:g})")
    return 0 if worst <= args.threshold else 2


def cmd_bench(args) -> int:
    from .experiments import bench_filter, linear_fit_ratio, loglog_slope
    from .plotting import plot_bench

    if len(args.sizes) < 2 or min(args.sizes) < 1 or args.t_max < 1 or args.repeats < 1 or args.avg_degree <= 0:
        raise UsageError("need at least two positive --sizes, --t-max >= 1, --repeats >= 1, --avg-degree > 0")
    c = _filter_coefficients(args)
    out = make_run_dir(args, {"sizes": args.sizes, "avg_degree": args.avg_degree, "t_max": args.t_max})
    logging.getLogger("fbgraph.graph").setLevel(logging.ERROR)
    recs = bench_filter(c, args.sizes, args.avg_degree, args.t_max, args.repeats, seed=args.seed or 0)
    with open(out / "bench.csv", "w", encoding="utf-8") as fh:
        fh.write("m,n,seconds,peak_bytes,matvecs,iterations,expected_matvecs\n")
        for r in recs:
            fh.write(f"{r.m},{r.n},{r.seconds:.6e},{r.peak_bytes},{r.matvecs},{r.iterations},{r.iterations * c.p + c.q}\n")
    m = np.array([r.m for r in recs], float)
    secs = np.array([r.seconds for r in recs])
    peak = np.array([r.peak_bytes for r in recs], float)
    plot_bench(m, secs, peak, out / "bench.png")
    slope = loglog_slope(m, secs)
    ratio = linear_fit_ratio(m, peak)
    counts_ok = all(r.matvecs == r.iterations * c.p + c.q for r in recs)
    print(f"time slope {slope:.3f}; memory worst ratio to linear fit {ratio:.3f}; matvec counts exact: {counts_ok}")
    return 0


def _suite(args, label_configs, mc, tc, seed, ds, out):
    from .trainer import run_suite, write_suite_csv

    rows = run_suite(label_configs, tc, ds, root_seed=seed, run_dir=out)
    write_suite_csv(rows, out / "summary.csv")
    for r in rows:
        print(f"{r.label}: {100 * r.mean:.2f} ± {100 * r.std:.2f} ({len(r.accuracies)} runs, {r.failures} failed)")
    return rows


def _prepare_training(args):
    mc, tc, seed = resolve_configs(args)
    path = resolve_dataset_path(args.dataset)
    return mc, tc, seed, path


def _load_for_run(args, path, seed, mc, tc, out_extra: dict):
    from .dataio import DatasetError

    try:
        ds = load_dataset(path, not args.no_feature_norm, seed)
    except (DatasetError, OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = make_run_dir(args, {"dataset": path, "model": mc.to_dict(), "train": asdict(tc),
                              "data": {"n": ds.n, "m": ds.graph.m, "features": ds.n_features, "classes": ds.class_count},
                              **out_extra})
    return ds, out


def cmd_train(args) -> int:
    from .model import save_checkpoint
    from .trainer import run_seeds, train

    mc, tc, seed, path = _prepare_training(args)
    ds, out = _load_for_run(args, path, seed, mc, tc, {"run_seeds": run_seeds(seed, tc.runs)})
    accs, failures = [], 0
    for r, s in enumerate(run_seeds(seed, tc.runs)):
        m = train(mc, tc, ds, seed=s)
        m.write_jsonl(out / f"run{r}.jsonl")
        if r == 0 and not m.failed:
            save_checkpoint(out / "model.ckpt", replace(mc, seed=s), m.params)
        if m.failed:
            failures += 1
            print(f"run {r}: failed ({m.failure})")
        else:
            accs.append(m.test_accuracy)
            print(f"run {r}: test accuracy {m.test_accuracy:.4f} ({m.wall_time:.1f}s)")
    if not accs:
        return 2
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    with open(out / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("runs,failures,mean_acc,std_acc\n")
        fh.write(f"{len(accs)},{failures},{mean:.6f},{std:.6f}\n")
    print(f"test accuracy {100 * mean:.2f} ± {100 * std:.2f} over {len(accs)} runs ({failures} failed)")
    return 0


def cmd_sweep(args) -> int:
    from .plotting import plot_sweep
    from .trainer import sweep_configs

    if not args.ps or not args.qs or min(args.ps) < 1 or min(args.qs) < 0:
        raise UsageError("--ps needs values >= 1 and --qs values >= 0")
    mc, tc, seed, path = _prepare_training(args)
    ds, out = _load_for_run(args, path, seed, mc, tc, {"ps": args.ps, "qs": args.qs})
    rows = _suite(args, sweep_configs(mc, args.ps, args.qs), mc, tc, seed, ds, out)
    means = np.array([r.mean for r in rows]).reshape(len(args.ps), len(args.qs))
    plot_sweep(args.ps, args.qs, means, out / "sweep.png")
    return 0 if all(r.accuracies for r in rows) else 2


def cmd_ablate(args) -> int:
    from .plotting import plot_bars
    from .trainer import ablation_configs

    mc, tc, seed, path = _prepare_training(args)
    if args.variant_set == "techniques":
        configs = ablation_configs(mc)
    else:
        configs = {
            "feedback_nodense": replace(mc, filter="feedback", dense=False),
            "chebyshev_nodense": replace(mc, filter="chebyshev", dense=False),
        }
    ds, out = _load_for_run(args, path, seed, mc, tc, {"variants": list(configs)})
    rows = _suite(args, configs, mc, tc, seed, ds, out)
    plot_bars([r.label for r in rows], [r.mean for r in rows], [r.std for r in rows], out / "ablation.png")
    return 0 if all(r.accuracies for r in rows) else 2


def cmd_export(args) -> int:
    from .model import load_checkpoint
    from .trainer import export_embeddings

    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"checkpoint {ckpt} not found")
    try:
        mc, params = load_checkpoint(ckpt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= args.layer < len(mc.layer_widths):
        raise UsageError(f"layer index {args.layer} out of range for a {len(mc.layer_widths)}-layer model")
    path = resolve_dataset_path(args.dataset)
    from .dataio import DatasetError

    try:
        ds = load_dataset(path, not args.no_feature_norm, mc.seed)
    except (DatasetError, OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = make_run_dir(args, {"checkpoint": str(ckpt), "dataset": path, "layer": args.layer, "model": mc.to_dict()})
    name = "embeddings.bin" if args.binary else "embeddings.txt"
    emb = export_embeddings(mc, params, ds, args.layer, out / name, binary=args.binary)
    print(f"wrote {emb.shape[0]}x{emb.shape[1]} embeddings to {out / name}")
    return 0


COMMANDS = {
    "design": cmd_design,
    "apply": cmd_apply,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "export-embeddings": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fbgraph: error: {exc}", file=sys.stderr)
        return 1
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fbgraph: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"fbgraph: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
