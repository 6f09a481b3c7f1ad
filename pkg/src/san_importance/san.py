"""Self-attention network for tabular data, written against numpy with
hand-derived gradients.

Architecture, for an input row ``x`` of ``F`` features and ``k`` heads::

    a_k   = softmax(W_k x + b_k)                 attention, one per head
    omega = mean_k (x * a_k)                     Hadamard gate, length F
    h     = selu(W1 omega + b1)                  hidden layer (dropout on h)
    p     = softmax(W2 h + b2)                   class probabilities

Training minimises mean cross-entropy with Adam. Four feature-importance
extractors read the attention layer back out.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .importance import ImportanceVector
from .tabular import Dataset

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

PARAM_NAMES = ("attention_weights", "attention_biases", "w1", "b1", "w2", "b2")
# rows pushed through the network at once during inference
_CHUNK = 4096


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


@dataclass(frozen=True)
class SanConfig:
    hidden_dim: int = 128
    epochs: int = 32
    batch_size: int = 5
    learning_rate: float = 0.001
    dropout_rate: float = 0.20
    n_heads: int = 1
    selu_lambda: float = SELU_LAMBDA
    selu_alpha: float = SELU_ALPHA
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_dim", "batch_size", "n_heads"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        for name in ("learning_rate", "selu_lambda", "selu_alpha", "adam_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class SanModel:
    attention_weights: np.ndarray  # (k, F, F)
    attention_biases: np.ndarray  # (k, F)
    w1: np.ndarray  # (hidden, F)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (C, hidden)
    b2: np.ndarray  # (C,)
    config: SanConfig

    def __post_init__(self):
        k, f, f2 = self.attention_weights.shape
        h = self.w1.shape[0]
        c = self.w2.shape[0]
        expected = {
            "attention_weights": (k, f, f),
            "attention_biases": (k, f),
            "w1": (h, f),
            "b1": (h,),
            "w2": (c, h),
            "b2": (c,),
        }
        if f != f2:
            raise ValueError("attention matrices must be square")
        for name, shape in expected.items():
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_heads(self) -> int:
        return self.attention_weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.attention_weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params().values())

    def with_params(self, params: dict) -> "SanModel":
        return replace(self, **params)


# ---------------------------------------------------------------------------
# Elementwise pieces
# ---------------------------------------------------------------------------


def softmax(v, axis: int = -1) -> np.ndarray:
    """Shift-stable softmax along ``axis``."""
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def selu(x, lam: float = SELU_LAMBDA, alpha: float = SELU_ALPHA):
    x = np.asarray(x, dtype=np.float64)
    # expm1 on the clipped branch only, to keep overflow warnings away
    neg = lam * alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, lam * x, neg)
    return float(out) if out.ndim == 0 else out


def _selu_grad(x, lam, alpha):
    return np.where(x > 0, lam, lam * alpha * np.exp(np.minimum(x, 0.0)))


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def init_model(n_features: int, n_classes: int, config: SanConfig,
               rng: Optional[np.random.Generator] = None) -> SanModel:
    """Uniform(+-1/sqrt(fan_in)) weights; attention biases start at zero."""
    if rng is None:
        rng = np.random.default_rng([config.seed, 0])
    k, f, h, c = config.n_heads, n_features, config.hidden_dim, n_classes

    def unif(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return SanModel(
        attention_weights=unif(f, (k, f, f)),
        attention_biases=np.zeros((k, f)),
        w1=unif(f, (h, f)),
        b1=unif(f, (h,)),
        w2=unif(h, (c, h)),
        b2=unif(h, (c,)),
        config=config,
    )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _check_width(model: SanModel, X: np.ndarray) -> None:
    if X.shape[-1] != model.n_features:
        raise ValueError(
            f"model expects {model.n_features} features, got {X.shape[-1]}"
        )


def attention_vectors(model: SanModel, X) -> np.ndarray:
    """Head-averaged softmax attention for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_width(model, X)
    return _head_attention(model.attention_weights, model.attention_biases, X).mean(axis=0)


def _head_attention(W, b, X):
    # (k, B, F): row g of head k is softmax over g of sum_f W[k, g, f] x_f + b[k, g]
    Z = np.matmul(X[None, :, :], W.transpose(0, 2, 1)) + b[:, None, :]
    return softmax(Z, axis=-1)


def omega(model: SanModel, x) -> np.ndarray:
    """Input gated by its own attention, averaged over heads."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _check_width(model, X)
    A = _head_attention(model.attention_weights, model.attention_biases, X)
    out = (X[None] * A).mean(axis=0)
    return out[0] if single else out


def _forward(params: dict, cfg: SanConfig, X: np.ndarray, drop_mask):
    W, b = params["attention_weights"], params["attention_biases"]
    A = _head_attention(W, b, X)
    Om = (X[None] * A).mean(axis=0)
    Hpre = Om @ params["w1"].T + params["b1"]
    H = selu(Hpre, cfg.selu_lambda, cfg.selu_alpha)
    if H.ndim == 0:
        H = np.atleast_1d(H)
    Hd = H * drop_mask if drop_mask is not None else H
    P = softmax(Hd @ params["w2"].T + params["b2"], axis=-1)
    return A, Om, Hpre, Hd, P


def _dropout_mask(cfg: SanConfig, shape, rng) -> Optional[np.ndarray]:
    if cfg.dropout_rate == 0.0:
        return None
    if rng is None:
        raise ValueError("train_mode with dropout requires a random generator")
    keep = 1.0 - cfg.dropout_rate
    return (rng.random(shape) < keep) / keep


def forward(model: SanModel, x, train_mode: bool = False,
            rng: Optional[np.random.Generator] = None):
    """Class probabilities and head-averaged attention for one row (or a batch).

    Inference (``train_mode=False``) never touches ``rng``.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _check_width(model, X)
    cfg = model.config
    mask = _dropout_mask(cfg, (X.shape[0], model.hidden_dim), rng) if train_mode else None
    A, _, _, _, P = _forward(model.params(), cfg, X, mask)
    att = A.mean(axis=0)
    if single:
        return P[0], att[0]
    return P, att


def predict_proba(model: SanModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_width(model, X)
    params = model.params()
    out = [
        _forward(params, model.config, X[s:s + _CHUNK], None)[4]
        for s in range(0, X.shape[0], _CHUNK)
    ]
    return np.concatenate(out, axis=0) if out else np.empty((0, model.n_classes))


def predict(model: SanModel, X) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class id
    return np.argmax(predict_proba(model, X), axis=1)


def _loss_and_grads(params: dict, cfg: SanConfig, X, y, mask):
    n = X.shape[0]
    k = params["attention_weights"].shape[0]
    A, Om, Hpre, Hd, P = _forward(params, cfg, X, mask)
    picked = P[np.arange(n), y]
    loss = -np.mean(np.log(np.maximum(picked, np.finfo(float).tiny)))

    dlogits = P.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    g = {}
    g["w2"] = dlogits.T @ Hd
    g["b2"] = dlogits.sum(axis=0)
    dH = dlogits @ params["w2"]
    if mask is not None:
        dH = dH * mask
    dHpre = dH * _selu_grad(Hpre, cfg.selu_lambda, cfg.selu_alpha)
    g["w1"] = dHpre.T @ Om
    g["b1"] = dHpre.sum(axis=0)
    dOm = dHpre @ params["w1"]
    # through omega = mean_k x * a_k, then each head's softmax Jacobian
    dA = (dOm * X)[None] / k
    dZ = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
    g["attention_weights"] = np.matmul(dZ.transpose(0, 2, 1), X[None])
    g["attention_biases"] = dZ.sum(axis=1)
    return loss, g


def loss_and_gradients(model: SanModel, batch_x, batch_y,
                       rng: Optional[np.random.Generator] = None):
    """Mean cross-entropy on the batch and its gradient for every parameter.

    Dropout (if enabled in the config) is sampled from ``rng``. Gradients are
    returned as a dict keyed like :meth:`SanModel.params`.
    """
    X = np.atleast_2d(np.asarray(batch_x, dtype=np.float64))
    y = np.asarray(batch_y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    _check_width(model, X)
    if y.shape != (X.shape[0],):
        raise ValueError("batch_y must have one label per row")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError("label outside [0, n_classes)")
    mask = _dropout_mask(model.config, (X.shape[0], model.hidden_dim), rng)
    return _loss_and_grads(model.params(), model.config, X, y, mask)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class _Flat:
    """All parameters in one contiguous vector, exposed as named views."""

    def __init__(self, params: dict):
        self.shapes = {n: params[n].shape for n in PARAM_NAMES}
        sizes = [int(np.prod(s)) for s in self.shapes.values()]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.vec = np.concatenate([params[n].ravel() for n in PARAM_NAMES])

    def views(self, vec: np.ndarray) -> dict:
        return {
            n: vec[self.offsets[i]:self.offsets[i + 1]].reshape(self.shapes[n])
            for i, n in enumerate(PARAM_NAMES)
        }


def train(data: Dataset, config: SanConfig = SanConfig(),
          init: Optional[SanModel] = None) -> SanModel:
    """Fit a SAN with minibatch Adam.

    Every epoch draws a fresh shuffle and dropout stream from
    ``(config.seed, epoch)``, so the result is a pure function of the data
    and the config.
    """
    X = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.int64)
    n = X.shape[0]
    if n < config.batch_size:
        raise ValueError(
            f"{n} instances is fewer than batch_size={config.batch_size}"
        )
    model = init if init is not None else init_model(data.n_features, data.n_classes, config)
    if model.n_features != data.n_features or model.n_classes < data.n_classes:
        raise ValueError("initial model does not match the dataset")
    flat = _Flat(model.params())
    theta = flat.vec.copy()
    params = flat.views(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    grad = np.empty_like(theta)
    gviews = flat.views(grad)
    with np.errstate(over="ignore", invalid="ignore"):
        _adam_epochs(config, X, y, params, theta, grad, gviews, m, v)
    return model.with_params({k: a.copy() for k, a in flat.views(theta).items()})


def _adam_epochs(config, X, y, params, theta, grad, gviews, m, v):
    n = X.shape[0]
    b1, b2, lr, eps = (config.adam_beta1, config.adam_beta2,
                       config.learning_rate, config.adam_epsilon)
    step = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(n)
        drop_rng = np.random.default_rng([config.seed, 2, epoch])
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            mask = _dropout_mask(config, (idx.size, config.hidden_dim), drop_rng)
            loss, g = _loss_and_grads(params, config, X[idx], y[idx], mask)
            for name in PARAM_NAMES:
                gviews[name][...] = g[name]
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingError(
                    f"non-finite loss/gradient at epoch {epoch}, batch {bi}"
                )
            step += 1
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * grad * grad
            mhat = m / (1 - b1**step)
            vhat = v / (1 - b2**step)
            theta -= lr * mhat / (np.sqrt(vhat) + eps)
            if not np.all(np.isfinite(theta)):
                raise TrainingError(
                    f"non-finite parameters at epoch {epoch}, batch {bi}"
                )


# ---------------------------------------------------------------------------
# Importance extractors
# ---------------------------------------------------------------------------


def _instance_sums(model: SanModel, data: Dataset, correct_only: bool):
    X = np.asarray(data.features, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    _check_width(model, X)
    params = model.params()
    total = np.zeros(model.n_features)
    n_correct = 0
    for s in range(0, X.shape[0], _CHUNK):
        Xc = X[s:s + _CHUNK]
        if correct_only:
            A, _, _, _, P = _forward(params, model.config, Xc, None)
            att = A.mean(axis=0)
            hit = np.argmax(P, axis=1) == data.labels[s:s + _CHUNK]
            n_correct += int(hit.sum())
            total += att[hit].sum(axis=0)
        else:
            total += _head_attention(
                params["attention_weights"], params["attention_biases"], Xc
            ).mean(axis=0).sum(axis=0)
    return total, n_correct


def importance_instance(model: SanModel, data: Dataset) -> ImportanceVector:
    """Mean attention vector over all instances ("attention")."""
    total, _ = _instance_sums(model, data, correct_only=False)
    return ImportanceVector(total / data.n_instances, "attention", data.feature_names)


def importance_instance_clean(model: SanModel, data: Dataset) -> ImportanceVector:
    """Attention summed over correctly predicted instances, divided by all n
    ("attentionPositive"). Not renormalised: the scores sum to accuracy."""
    total, n_correct = _instance_sums(model, data, correct_only=True)
    n = data.n_instances
    return ImportanceVector(
        total / n, "attentionPositive", data.feature_names,
        {"accuracy": n_correct / n, "n_correct": n_correct},
    )


def _names(model, feature_names):
    if feature_names is None:
        return tuple(f"f{j}" for j in range(model.n_features))
    if len(feature_names) != model.n_features:
        raise ValueError("feature_names length does not match the model")
    return tuple(feature_names)


def importance_global(model: SanModel, feature_names=None) -> ImportanceVector:
    """Softmax of each head's attention-matrix diagonal, averaged over heads
    ("attentionGlobal"). Needs no data."""
    diag = np.diagonal(model.attention_weights, axis1=1, axis2=2)
    scores = softmax(diag, axis=-1).mean(axis=0)
    return ImportanceVector(scores, "attentionGlobal", _names(model, feature_names))


def importance_global_rws(model: SanModel, feature_names=None) -> ImportanceVector:
    """Row-wise softmax of each attention matrix, diagonal taken, averaged over
    heads ("attentionGlobalRWS"). Entries lie in (0, 1) but need not sum to 1."""
    rows = softmax(model.attention_weights, axis=-1)
    scores = np.diagonal(rows, axis1=1, axis2=2).mean(axis=0)
    return ImportanceVector(scores, "attentionGlobalRWS", _names(model, feature_names))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_model(model: SanModel, path: Union[str, Path]) -> None:
    """Single ``.npz`` holding the config (JSON) and every tensor."""
    with open(path, "wb") as fh:
        np.savez(fh, config=np.array(json.dumps(asdict(model.config), sort_keys=True)),
                 **model.params())


def load_model(path: Union[str, Path]) -> SanModel:
    with np.load(path, allow_pickle=False) as z:
        raw = json.loads(str(z["config"]))
        known = {f.name for f in fields(SanConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
        cfg = SanConfig(**raw)
        return SanModel(config=cfg, **{n: z[n] for n in PARAM_NAMES})
