"""Dense numpy implementation of the encoder -> graph filter cascade -> action head network.

Arrays are batched as ``X: (B, N, F)`` node features and ``S: (B, N, N)`` graph
shift operators; unbatched ``(N, F)`` / ``(N, N)`` inputs are accepted and the
batch axis is dropped again on output.  Gradients are hand-derived reverse mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .features import FEATURE_DIM
from .world import N_PRIMITIVES

CHECKPOINT_FORMAT = "covnet-model"
CHECKPOINT_VERSION = 1


def _relu(z):
    return np.maximum(z, 0)


def _relu_grad(z):
    return (z > 0).astype(z.dtype)


def _identity(z):
    return z


def _identity_grad(z):
    return np.ones_like(z)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (_relu, _relu_grad),
    "identity": (_identity, _identity_grad),
}


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = FEATURE_DIM
    encoder_dims: tuple[int, ...] = (32, 16, 8)
    gnn_dims: tuple[int, ...] = (32, 128)
    n_actions: int = N_PRIMITIVES
    taps: int = 1
    activation: str = "relu"
    bias: bool = True
    input_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "encoder_dims", tuple(int(d) for d in self.encoder_dims))
        object.__setattr__(self, "gnn_dims", tuple(int(d) for d in self.gnn_dims))
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.taps < 0:
            raise ValueError("taps must be >= 0")

    @property
    def n_layers(self) -> int:
        return len(self.gnn_dims)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter names and shapes, in a fixed order."""
        out: dict[str, tuple[int, ...]] = {}
        width = self.in_dim
        for l, d in enumerate(self.encoder_dims):
            out[f"enc{l}.W"] = (width, d)
            if self.bias:
                out[f"enc{l}.b"] = (d,)
            width = d
        for l, d in enumerate(self.gnn_dims):
            for k in range(self.taps + 1):
                out[f"gnn{l}.H{k}"] = (width, d)
            if self.bias:
                out[f"gnn{l}.b"] = (d,)
            width = d
        out["head.W"] = (width, self.n_actions)
        if self.bias:
            out["head.b"] = (self.n_actions,)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_dims"] = list(self.encoder_dims)
        d["gnn_dims"] = list(self.gnn_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def astype(self, dtype) -> "ModelParams":
        return replace(self, arrays={k: v.astype(dtype) for k, v in self.arrays.items()}, meta=dict(self.meta))

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]


def init_params(config: ModelConfig | None = None, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every matrix and its bias."""
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    arrays = {}
    fan_in = None
    for name, shape in config.shapes().items():
        if len(shape) == 2:
            fan_in = shape[0]
        bound = math.sqrt(1.0 / fan_in)
        arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return ModelParams(config, arrays, seed)


def _as_batch(S, X, dtype):
    X = np.asarray(X, dtype=dtype)
    S = np.asarray(S, dtype=dtype)
    single = X.ndim == 2
    if single:
        X, S = X[None], S[None]
    if X.ndim != 3 or S.ndim != 3:
        raise ValueError(f"expected X (B,N,F) and S (B,N,N), got {X.shape} and {S.shape}")
    if S.shape != (X.shape[0], X.shape[1], X.shape[1]):
        raise ValueError(f"shift operator shape {S.shape} does not match features {X.shape}")
    return S, X, single


def graph_shift(S, X) -> np.ndarray:
    """One neighbour exchange: row i becomes sum_j S[i, j] * X[j]."""
    S = np.asarray(S)
    X = np.asarray(X)
    if S.shape[-1] != X.shape[-2] or S.shape[-2] != S.shape[-1]:
        raise ValueError(f"cannot shift features {X.shape} with operator {S.shape}")
    return S @ X


def _shifts(S, X, taps: int) -> list[np.ndarray]:
    out = [X]
    for _ in range(taps):
        out.append(graph_shift(S, out[-1]))
    return out


def graph_conv(S, X, taps: list[np.ndarray] | tuple[np.ndarray, ...], bias: np.ndarray | None = None) -> np.ndarray:
    """sum_k S^k X H_k (+ bias), with S^k X built by k successive shifts."""
    if not taps:
        raise ValueError("need at least one filter tap")
    for H in taps:
        if H.shape[0] != np.shape(X)[-1] or H.shape != taps[0].shape:
            raise ValueError(f"filter tap shape {H.shape} incompatible with features {np.shape(X)}")
    shifted = _shifts(S, X, len(taps) - 1)
    out = sum(Sx @ H for Sx, H in zip(shifted, taps))
    if bias is not None:
        out = out + bias
    return out


def _check_finite(name: str, a: np.ndarray):
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))
        raise FloatingPointError(
            f"non-finite values after {name}: {len(bad)} entries, first at index {tuple(bad[0])}, "
            f"max finite magnitude {np.nanmax(np.abs(np.where(np.isfinite(a), a, 0))):.3g}"
        )


def gnn_forward(params: ModelParams, S, X, return_cache: bool = False):
    """Logits of shape (..., N, n_actions) for every robot."""
    cfg = params.config
    act, _ = ACTIVATIONS[cfg.activation]
    S, X, single = _as_batch(S, X, params.dtype)
    if X.shape[-1] != cfg.in_dim:
        raise ValueError(f"feature width {X.shape[-1]} does not match model input {cfg.in_dim}")
    p = params.arrays
    cache = []
    h = X * np.asarray(cfg.input_scale, dtype=X.dtype) if cfg.input_scale != 1.0 else X
    for l in range(len(cfg.encoder_dims)):
        z = h @ p[f"enc{l}.W"]
        if cfg.bias:
            z = z + p[f"enc{l}.b"]
        cache.append(("dense", f"enc{l}", h, z))
        h = act(z)
        _check_finite(f"enc{l}", h)
    for l in range(cfg.n_layers):
        shifted = _shifts(S, h, cfg.taps)
        z = sum(Sx @ p[f"gnn{l}.H{k}"] for k, Sx in enumerate(shifted))
        if cfg.bias:
            z = z + p[f"gnn{l}.b"]
        cache.append(("graph", f"gnn{l}", shifted, z))
        h = act(z)
        _check_finite(f"gnn{l}", h)
    logits = h @ p["head.W"]
    if cfg.bias:
        logits = logits + p["head.b"]
    cache.append(("head", "head", h, None))
    _check_finite("head", logits)
    if single:
        logits = logits[0]
    if return_cache:
        return logits, (S, single, cache)
    return logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_loss(logits, labels, return_grad: bool = False):
    """Mean over all robots of -log softmax(logits)[label]."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != logits.shape[:-1]:
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[-1]):
        raise ValueError("labels out of range")
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    count = max(labels.size, 1)
    loss = float(-picked.sum() / count)
    if not return_grad:
        return loss
    grad = np.exp(logp)
    np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], axis=-1) - 1, axis=-1)
    return loss, grad / count


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def backward(params: ModelParams, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d loss / d logits."""
    cfg = params.config
    _, act_grad = ACTIVATIONS[cfg.activation]
    S, single, layers = cache
    p = params.arrays
    g = np.asarray(dlogits, dtype=params.dtype)
    if single:
        g = g[None]
    grads: dict[str, np.ndarray] = {}
    St = S.swapaxes(-1, -2)
    for kind, name, inp, z in reversed(layers):
        if kind == "head":
            grads["head.W"] = _flat(inp).T @ _flat(g)
            if cfg.bias:
                grads["head.b"] = _flat(g).sum(axis=0)
            g = g @ p["head.W"].T
            continue
        dz = g * act_grad(z)
        if cfg.bias:
            grads[f"{name}.b"] = _flat(dz).sum(axis=0)
        if kind == "dense":
            grads[f"{name}.W"] = _flat(inp).T @ _flat(dz)
            g = dz @ p[f"{name}.W"].T
        else:
            dshift = []
            for k, Sx in enumerate(inp):
                H = p[f"{name}.H{k}"]
                grads[f"{name}.H{k}"] = _flat(Sx).T @ _flat(dz)
                dshift.append(dz @ H.T)
            # adjoint of the shift chain: sum_k (S^T)^k dshift_k, Horner style
            acc = dshift[-1]
            for d in reversed(dshift[:-1]):
                acc = St @ acc + d
            g = acc
    return {name: grads[name] for name in p}


def loss_and_grad(params: ModelParams, S, X, labels) -> tuple[float, dict[str, np.ndarray]]:
    logits, cache = gnn_forward(params, S, X, return_cache=True)
    loss, dlogits = cross_entropy_loss(logits, labels, return_grad=True)
    return loss, backward(params, cache, dlogits)


def cosine_lr(t: int, total: int, lr_max: float = 5e-3, lr_min: float = 1e-6) -> float:
    if total <= 0:
        return lr_max
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total))


@dataclass
class TrainState:
    """Adam moments; ``step`` counts updates already applied."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, **kw) -> "TrainState":
        return cls(
            0,
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
            **kw,
        )


def optimizer_step(
    params: ModelParams, grads: dict[str, np.ndarray], state: TrainState, lr: float
) -> tuple[ModelParams, TrainState]:
    """One bias-corrected Adam update at learning rate ``lr``."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_arrays, new_m, new_v = {}, {}, {}
    for name, w in params.arrays.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_arrays[name] = (w - step).astype(w.dtype)
        new_m[name] = m.astype(w.dtype)
        new_v[name] = v.astype(w.dtype)
    new_state = replace(state, step=t, m=new_m, v=new_v, lr=lr)
    return replace(params, arrays=new_arrays), new_state


def grad_check(
    params: ModelParams,
    S,
    X,
    labels,
    h: float = 1e-5,
    samples_per_tensor: int = 20,
    seed: int = 0,
    grads: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in float64.  ``grads`` overrides the analytic gradients (used to check
    the harness itself catches a corrupted gradient).
    """
    p64 = params.astype(np.float64)
    if grads is None:
        _, grads = loss_and_grad(p64, S, X, labels)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, w in p64.arrays.items():
        flat = w.reshape(-1)
        idx = rng.choice(flat.size, size=min(samples_per_tensor, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = cross_entropy_loss(gnn_forward(p64, S, X), labels)
            flat[i] = orig - h
            down = cross_entropy_loss(gnn_forward(p64, S, X), labels)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            analytic = float(np.asarray(grads[name]).reshape(-1)[i])
            err = abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst


def save_checkpoint(params: ModelParams, path, **meta) -> Path:
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "dtype": np.dtype(params.dtype).name,
        "init_seed": params.seed,
        "meta": {**params.meta, **meta},
        "params": {name: {"shape": list(a.shape), "values": a.tolist()} for name, a in params.arrays.items()},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def load_checkpoint(path) -> ModelParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    config = ModelConfig.from_dict(doc["config"])
    dtype = np.dtype(doc["dtype"])
    arrays = {}
    for name, shape in config.shapes().items():
        entry = doc["params"].get(name)
        if entry is None:
            raise ValueError(f"{path}: missing parameter {name}")
        a = np.array(entry["values"], dtype=dtype).reshape(entry["shape"])
        if a.shape != shape:
            raise ValueError(f"{path}: parameter {name} has shape {a.shape}, expected {shape}")
        arrays[name] = a
    return ModelParams(config, arrays, doc.get("init_seed"), doc.get("meta", {}))
