"""Densely connected spectral CNN with feedback-looped filter layers.

Layer ``t`` computes

    H_t = relu( P (Xin_t theta1) + Q (X theta2) + b )

where ``Xin_t`` is the column-wise concatenation ``[X, H_0, ..., H_{t-1}]``
(or just the previous layer's output without dense connections) and ``P``,
``Q`` are the feedback and feedforward polynomials of the scaled Laplacian.
Products are associated as ``P (Xin theta1)`` so that the graph operator only
ever touches ``n x h`` blocks. A final affine layer plus softmax classifies.

Kernel regularisation is an L2 penalty in the loss. Gradients are exact;
``P`` and ``Q`` are symmetric so they are their own adjoints.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import __version__
from .design import FilterCoefficients, build_desired_response, design_coefficients
from .engine import feedback_operator, feedforward_operator
from .graph import Graph, LaplacianOperator, augmented_laplacian, chebyshev_operator, scaled_normalized_laplacian, spmv

Params = dict[str, np.ndarray]


class ModelError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    layer_widths: tuple[int, ...] = (8, 16, 32, 64, 128)
    p: int = 5
    q: int = 3
    gamma: float = 0.9
    eta: float = 0.5
    l2_coeff: float = 9e-2
    dropout_rate: float = 0.9
    activation: str = "relu"
    seed: int = 0
    dense: bool = True
    # "feedback" or "chebyshev"
    filter: str = "feedback"
    cheb_k: int = 3
    # ablation switches
    scaled_normalization: bool = True
    cutoff: bool = True

    def __post_init__(self):
        self.layer_widths = tuple(int(w) for w in self.layer_widths)
        if not self.layer_widths or min(self.layer_widths) < 1:
            raise ValueError("layer widths must be positive")
        if self.l2_coeff < 0:
            raise ValueError("l2_coeff must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.filter not in ("feedback", "chebyshev"):
            raise ValueError(f"unknown filter {self.filter!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_widths"] = list(self.layer_widths)
        return d


@dataclass
class Branch:
    """One filtered path inside a layer: ``op(input @ theta)``."""

    name: str
    apply: Callable[[np.ndarray], np.ndarray]
    # "concat": the layer's (concatenated) input; "raw": the input features X
    source: str


@dataclass
class GraphOperators:
    branches: list[Branch]
    laplacian: LaplacianOperator
    coefficients: FilterCoefficients | None = None


def design_for_config(config: ModelConfig) -> FilterCoefficients:
    resp = build_desired_response(config.eta, p=config.p, q=config.q)
    if not config.cutoff:
        # without the cut-off technique the target is the raw frequency ramp
        resp = type(resp)(resp.grid, resp.binary, resp.grid.copy(), resp.lambda_cut, resp.eta)
    return design_coefficients(resp, config.p, config.q, config.gamma)


def build_operators(graph: Graph, config: ModelConfig, coefficients: FilterCoefficients | None = None) -> GraphOperators:
    """Prebuild the per-graph filter branches used by every layer."""
    if config.filter == "chebyshev":
        lap = chebyshev_operator(graph)

        def cheb(j: int):
            def apply(y: np.ndarray) -> np.ndarray:
                t_prev, t_cur = y, None
                if j == 0:
                    return y
                t_cur = spmv(lap, y)
                for _ in range(2, j + 1):
                    t_prev, t_cur = t_cur, 2.0 * spmv(lap, t_cur) - t_prev
                return t_cur

            return apply

        branches = [Branch(f"theta{j + 1}", cheb(j), "concat") for j in range(config.cheb_k)]
        return GraphOperators(branches, lap)
    lap = scaled_normalized_laplacian(graph) if config.scaled_normalization else augmented_laplacian(graph)
    c = coefficients if coefficients is not None else design_for_config(config)
    branches = [
        Branch("theta1", feedback_operator(lap, c), "concat"),
        Branch("theta2", feedforward_operator(lap, c), "raw"),
    ]
    return GraphOperators(branches, lap, c)


def input_widths(config: ModelConfig, f: int) -> list[int]:
    """Width of each layer's concatenated input."""
    widths = []
    for t in range(len(config.layer_widths)):
        if config.dense:
            widths.append(f + sum(config.layer_widths[:t]))
        else:
            widths.append(f if t == 0 else config.layer_widths[t - 1])
    return widths


def head_width(config: ModelConfig, f: int) -> int:
    return f + sum(config.layer_widths) if config.dense else config.layer_widths[-1]


def param_shapes(config: ModelConfig, ops: GraphOperators | None, f: int, n_classes: int) -> dict[str, tuple[int, ...]]:
    names = [b.name for b in ops.branches] if ops is not None else _branch_names(config)
    sources = [b.source for b in ops.branches] if ops is not None else _branch_sources(config)
    shapes: dict[str, tuple[int, ...]] = {}
    for t, (c_in, h) in enumerate(zip(input_widths(config, f), config.layer_widths)):
        for name, src in zip(names, sources):
            shapes[f"layer{t}.{name}"] = (c_in if src == "concat" else f, h)
        shapes[f"layer{t}.bias"] = (h,)
    shapes["head.weight"] = (head_width(config, f), n_classes)
    shapes["head.bias"] = (n_classes,)
    return shapes


def _branch_names(config: ModelConfig) -> list[str]:
    if config.filter == "chebyshev":
        return [f"theta{j + 1}" for j in range(config.cheb_k)]
    return ["theta1", "theta2"]


def _branch_sources(config: ModelConfig) -> list[str]:
    if config.filter == "chebyshev":
        return ["concat"] * config.cheb_k
    return ["concat", "raw"]


def is_kernel(name: str) -> bool:
    return not name.endswith("bias")


def init_params(config: ModelConfig, f: int, n_classes: int, seed: int | None = None, ops: GraphOperators | None = None) -> Params:
    """Xavier-normal kernels, zero biases."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params: Params = {}
    for name, shape in param_shapes(config, ops, f, n_classes).items():
        if is_kernel(name):
            std = np.sqrt(2.0 / (shape[0] + shape[1]))
            params[name] = rng.normal(0.0, std, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def apply_unit_norm_constraint(params: Params) -> Params:
    """Rescale kernel columns (and whole bias vectors) with norm above 1."""
    out: Params = {}
    for name, w in params.items():
        if w.ndim == 2:
            norms = np.sqrt((w * w).sum(axis=0))
            out[name] = w / np.maximum(norms, 1.0)
        else:
            nb = np.linalg.norm(w)
            out[name] = w / nb if nb > 1.0 else w.copy()
    return out


@dataclass
class ForwardTrace:
    x: object
    blocks: list[object] = field(default_factory=list)
    masks: dict[str, np.ndarray] = field(default_factory=dict)
    layer_inputs: list[list[int]] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)
    head_input: list[int] = field(default_factory=list)
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None
    mode: str = "eval"


def _mask_block(block, mask):
    if mask is None:
        return block
    if sp.issparse(block):
        out = block.copy()
        out.data = out.data * mask
        return out
    return block * mask


def _draw_mask(rng: np.random.Generator, block, rate: float) -> np.ndarray:
    keep = 1.0 - rate
    shape = (block.nnz,) if sp.issparse(block) else block.shape
    return (rng.random(shape) < keep) / keep


def _matmul(block, w: np.ndarray) -> np.ndarray:
    return np.asarray(block @ w)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    config: ModelConfig,
    params: Params,
    ops: GraphOperators,
    x,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    masks: dict[str, np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network; returns ``(logits, trace)``.

    In ``"train"`` mode inverted dropout masks are drawn from ``rng`` unless
    ``masks`` (e.g. from an earlier trace) are supplied for replay.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    use_dropout = mode == "train" and config.dropout_rate > 0.0
    if use_dropout and masks is None and rng is None:
        raise ValueError("train mode with dropout needs an rng or replay masks")
    x = x if sp.issparse(x) else np.asarray(x, dtype=np.float64)
    tr = ForwardTrace(x=x, mode=mode)
    tr.blocks.append(x)
    new_masks: dict[str, np.ndarray] = {}

    def masked(key: str, block):
        if not use_dropout:
            return block
        m = masks[key] if masks is not None else _draw_mask(rng, block, config.dropout_rate)
        new_masks[key] = m
        return _mask_block(block, m)

    act = (lambda z: np.maximum(z, 0.0)) if config.activation == "relu" else (lambda z: z)
    for t, h in enumerate(config.layer_widths):
        idx = list(range(len(tr.blocks))) if config.dense else [len(tr.blocks) - 1]
        tr.layer_inputs.append(idx)
        inputs = {b: masked(f"layer{t}.in{b}", tr.blocks[b]) for b in idx}
        raw = inputs[0] if 0 in inputs else masked(f"layer{t}.raw", x)
        pre = params[f"layer{t}.bias"].copy()
        pre = np.broadcast_to(pre, (_rows(x), h)).copy()
        for br in ops.branches:
            w = params[f"layer{t}.{br.name}"]
            if br.source == "raw":
                z = _matmul(raw, w)
            else:
                z = _stacked_matmul(inputs, idx, tr.blocks, w)
            pre += br.apply(z)
        out = act(pre)
        if not np.all(np.isfinite(out)):
            raise ModelError(f"non-finite activations in layer {t}")
        tr.pre.append(pre)
        tr.post.append(out)
        tr.blocks.append(out)
    head_idx = list(range(len(tr.blocks))) if config.dense else [len(tr.blocks) - 1]
    tr.head_input = head_idx
    inputs = {b: masked(f"head.in{b}", tr.blocks[b]) for b in head_idx}
    logits = _stacked_matmul(inputs, head_idx, tr.blocks, params["head.weight"]) + params["head.bias"]
    if not np.all(np.isfinite(logits)):
        raise ModelError("non-finite logits in the classifier head")
    tr.logits = logits
    tr.probs = softmax(logits)
    tr.masks = new_masks
    return logits, tr


def _rows(x) -> int:
    return x.shape[0]


def _offsets(idx: list[int], blocks: list) -> list[tuple[int, int]]:
    out, start = [], 0
    for b in idx:
        w = blocks[b].shape[1]
        out.append((start, start + w))
        start += w
    return out


def _stacked_matmul(inputs: dict, idx: list[int], blocks: list, w: np.ndarray) -> np.ndarray:
    acc = None
    for b, (lo, hi) in zip(idx, _offsets(idx, blocks)):
        term = _matmul(inputs[b], w[lo:hi])
        acc = term if acc is None else acc + term
    return acc


def cross_entropy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("loss needs at least one labelled vertex in the mask")
    rows = np.flatnonzero(mask)
    p = probs[rows, labels[rows]]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def l2_penalty(params: Params, l2_coeff: float) -> float:
    return float(l2_coeff * sum(float((w * w).sum()) for k, w in params.items() if is_kernel(k)))


def loss(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray, params: Params, l2_coeff: float) -> float:
    """Mean masked cross-entropy plus ``l2_coeff * sum ||kernel||_F^2``."""
    return cross_entropy(softmax(logits), labels, mask) + l2_penalty(params, l2_coeff)


def backward(
    config: ModelConfig,
    params: Params,
    ops: GraphOperators,
    trace: ForwardTrace,
    labels: np.ndarray,
    mask: np.ndarray,
) -> Params:
    """Exact gradients of :func:`loss` for the forward pass recorded in ``trace``."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    n = trace.logits.shape[0]
    if labels.shape[0] != n or mask.shape[0] != n:
        raise ValueError(f"labels/mask length does not match the {n} vertices in the trace")
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValueError("backward needs at least one labelled vertex in the mask")
    grads: Params = {}
    dlogits = np.zeros_like(trace.logits)
    dlogits[rows] = trace.probs[rows]
    dlogits[rows, labels[rows]] -= 1.0
    dlogits /= rows.size

    # gradient w.r.t. every feature block (index 0 is the input, never needed)
    dblocks: dict[int, np.ndarray] = {}

    def scatter(prefix: str, idx: list[int], w: np.ndarray, g: np.ndarray, wname: str):
        dw = np.zeros_like(w)
        for b, (lo, hi) in zip(idx, _offsets(idx, trace.blocks)):
            key = f"{prefix}.in{b}"
            m = trace.masks.get(key)
            blk = _mask_block(trace.blocks[b], m)
            dw[lo:hi] = np.asarray(blk.T @ g)
            if b > 0:
                db = g @ w[lo:hi].T
                if m is not None:
                    db = db * m
                dblocks[b] = dblocks.get(b, 0.0) + db
        grads[wname] = dw

    scatter("head", trace.head_input, params["head.weight"], dlogits, "head.weight")
    grads["head.bias"] = dlogits.sum(axis=0)

    for t in reversed(range(len(config.layer_widths))):
        dpost = dblocks.pop(t + 1, None)
        if dpost is None:
            dpost = np.zeros_like(trace.post[t])
        dpre = dpost * (trace.pre[t] > 0.0) if config.activation == "relu" else dpost
        grads[f"layer{t}.bias"] = dpre.sum(axis=0)
        idx = trace.layer_inputs[t]
        for br in ops.branches:
            name = f"layer{t}.{br.name}"
            g = br.apply(dpre)
            if br.source == "raw":
                key = f"layer{t}.in0" if 0 in idx else f"layer{t}.raw"
                raw = _mask_block(trace.x, trace.masks.get(key))
                grads[name] = np.asarray(raw.T @ g)
            else:
                scatter(f"layer{t}", idx, params[name], g, name)

    if config.l2_coeff:
        for k, w in params.items():
            if is_kernel(k):
                grads[k] = grads[k] + 2.0 * config.l2_coeff * w
    return {k: grads[k] for k in params}


def predict(config: ModelConfig, params: Params, ops: GraphOperators, x) -> np.ndarray:
    logits, _ = forward(config, params, ops, x, mode="eval")
    return logits.argmax(axis=1)


# -- checkpoints ------------------------------------------------------------

CKPT_MAGIC = b"DFCK"
CKPT_VERSION = 1


def save_checkpoint(path: str | Path, config: ModelConfig, params: Params) -> None:
    """``DFCK``, u32 version, u32 config length + JSON config, then tensors.

    Each tensor is u32 name length + name, u32 ndim, u32 dims, and
    little-endian float64 data, in parameter declaration order.
    """
    import json

    cfg = json.dumps({"config": config.to_dict(), "version": __version__}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(cfg)) + cfg)
        fh.write(struct.pack("<I", len(params)))
        for name, w in params.items():
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)) + nb)
            fh.write(struct.pack("<I", w.ndim) + struct.pack(f"<{w.ndim}I", *w.shape))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, Params]:
    import json

    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    try:
        return _parse_checkpoint(raw)
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint ({exc})") from None


def _parse_checkpoint(raw: bytes) -> tuple[ModelConfig, Params]:
    import json

    pos = 8
    (clen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    meta = json.loads(raw[pos : pos + clen])
    pos += clen
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    params: Params = {}
    for _ in range(count):
        (nl,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + nl].decode()
        pos += nl
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        if pos + 8 * size > len(raw):
            raise ValueError(f"tensor {name!r} is truncated")
        params[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(raw):
        raise ValueError(f"{len(raw) - pos} trailing bytes")
    return ModelConfig(**meta["config"]), params


def config_digest(config: ModelConfig) -> str:
    return hashlib.sha256(repr(sorted(config.to_dict().items())).encode()).hexdigest()[:12]
