"""Dense ReLU network with batchnorm and inverted dropout, trained with Adam.

Hidden layer order is affine -> ReLU -> batchnorm -> dropout. All math is in
float64 numpy with hand-written backward passes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .metrics import CLIP_HIGH, CLIP_LOW
from .predictions import PredictionSet, log_softmax, softmax

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LOGVAR_INIT = -5.0
FORMAT_NAME = "novelconf-mlp"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_widths: tuple
    class_count: int
    dropout_rate: float = 0.2
    use_batchnorm: bool = True
    aleatoric_head: bool = False
    # "all": dropout after every hidden layer; "last": only the last hidden layer,
    # i.e. the input of the output layer
    dropout_layers: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ValueError("need at least one hidden layer, all widths >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.class_count < 2 or self.input_dim < 1:
            raise ValueError("bad input_dim / class_count")
        if self.dropout_layers not in ("all", "last"):
            raise ValueError("dropout_layers must be 'all' or 'last'")

    @property
    def output_dim(self) -> int:
        return 2 * self.class_count if self.aleatoric_head else self.class_count

    def dropout_on(self, layer: int) -> bool:
        if self.dropout_rate == 0.0:
            return False
        return self.dropout_layers == "all" or layer == len(self.hidden_widths) - 1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 30
    plateau_patience: int = 5
    lr_drop_factor: float = 10.0
    extension_ratio: float = 1.0 / 3.0
    max_drops: int = 2
    min_improvement: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.max_epochs > 0
                and self.plateau_patience > 0 and self.extension_ratio > 0):
            raise ValueError("training hyperparameters must be positive")
        if not self.lr_drop_factor > 1:
            raise ValueError("lr_drop_factor must exceed 1")


class MlpModel:
    def __init__(self, config: MlpConfig, params: dict, running: dict, seed: int | None = None):
        self.config = config
        self.params = params
        self.running = running
        self.seed = seed
        self.mode = "train"

    @property
    def n_hidden(self) -> int:
        return len(self.config.hidden_widths)

    def copy(self) -> "MlpModel":
        m = MlpModel(self.config, {k: v.copy() for k, v in self.params.items()},
                     {k: v.copy() for k, v in self.running.items()}, self.seed)
        m.mode = self.mode
        return m

    def eval(self) -> "MlpModel":
        self.mode = "eval"
        return self

    # -- forward / backward ------------------------------------------------

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None,
                dropout: bool | None = None, update_stats: bool = True):
        """Return ``(outputs, cache)``.

        ``training`` selects batch statistics for batchnorm (and updates the
        running statistics unless ``update_stats`` is False). Dropout follows
        ``training`` unless ``dropout`` forces it on or off; Monte-Carlo
        inference uses ``training=False, dropout=True``.
        """
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != cfg.input_dim:
            raise ValueError(f"expected inputs of shape (N, {cfg.input_dim}), got {x.shape}")
        if dropout is None:
            dropout = training
        if training and cfg.use_batchnorm and len(x) < 2:
            raise ValueError("batchnorm in training mode needs a batch of at least 2")
        if dropout and rng is None and cfg.dropout_rate > 0:
            raise ValueError("dropout needs an rng")
        p = self.params
        cache = {"x": x, "training": training, "layers": []}
        h = x
        for l in range(self.n_hidden):
            a = h @ p[f"W{l}"] + p[f"b{l}"]
            r = np.maximum(a, 0.0)
            layer = {"in": h, "a": a}
            y = r
            if cfg.use_batchnorm:
                if training:
                    mu = r.mean(axis=0)
                    var = r.var(axis=0)
                    if update_stats:
                        self.running[f"mean{l}"] = BN_MOMENTUM * self.running[f"mean{l}"] + (1 - BN_MOMENTUM) * mu
                        self.running[f"var{l}"] = BN_MOMENTUM * self.running[f"var{l}"] + (1 - BN_MOMENTUM) * var
                else:
                    mu = self.running[f"mean{l}"]
                    var = self.running[f"var{l}"]
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (r - mu) * inv_std
                y = p[f"gamma{l}"] * xhat + p[f"beta{l}"]
                layer.update(xhat=xhat, inv_std=inv_std)
            if dropout and cfg.dropout_on(l):
                keep = 1.0 - cfg.dropout_rate
                mask = (rng.random(y.shape) < keep) / keep
                y = y * mask
                layer["mask"] = mask
            cache["layers"].append(layer)
            h = y
        L = self.n_hidden
        out = h @ p[f"W{L}"] + p[f"b{L}"]
        cache["last"] = h
        return out, cache

    def backward(self, dout, cache) -> dict:
        cfg = self.config
        p = self.params
        grads = {}
        L = self.n_hidden
        grads[f"W{L}"] = cache["last"].T @ dout
        grads[f"b{L}"] = dout.sum(axis=0)
        dh = dout @ p[f"W{L}"].T
        for l in reversed(range(L)):
            layer = cache["layers"][l]
            if "mask" in layer:
                dh = dh * layer["mask"]
            if cfg.use_batchnorm:
                xhat, inv_std = layer["xhat"], layer["inv_std"]
                grads[f"gamma{l}"] = (dh * xhat).sum(axis=0)
                grads[f"beta{l}"] = dh.sum(axis=0)
                dxhat = dh * p[f"gamma{l}"]
                if cache["training"]:
                    n = len(dxhat)
                    dh = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
                else:
                    dh = dxhat * inv_std
            da = dh * (layer["a"] > 0)
            grads[f"W{l}"] = layer["in"].T @ da
            grads[f"b{l}"] = da.sum(axis=0)
            dh = da @ p[f"W{l}"].T
        return grads

    def logits(self, x) -> np.ndarray:
        """Deterministic eval-mode outputs (mean logits only for an aleatoric head)."""
        out, _ = self.forward(x, training=False, dropout=False)
        return out[:, : self.config.class_count]

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        def pack(d):
            return {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in d.items()}
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "seed": self.seed,
            "mode": self.mode,
            "params": pack(self.params),
            "running": pack(self.running),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported model document")
        config = MlpConfig(**doc["config"])
        expected = _shapes(config)

        def unpack(d, want):
            if set(d) != set(want):
                raise ValueError(f"parameter names mismatch: {sorted(set(d) ^ set(want))}")
            out = {}
            for k, item in d.items():
                arr = np.asarray(item["data"], dtype=np.float64)
                if tuple(item["shape"]) != want[k] or arr.size != math.prod(want[k]):
                    raise ValueError(f"shape mismatch for {k}: {item['shape']} vs {want[k]}")
                out[k] = arr.reshape(want[k])
            return out

        params = unpack(doc["params"], expected["params"])
        running = unpack(doc["running"], expected["running"])
        if any(np.any(v <= 0) for k, v in running.items() if k.startswith("var")):
            raise ValueError("running variance must be positive")
        model = cls(config, params, running, doc.get("seed"))
        model.mode = doc.get("mode", "eval")
        return model


def _shapes(config: MlpConfig) -> dict:
    dims = [config.input_dim, *config.hidden_widths, config.output_dim]
    params, running = {}, {}
    for l in range(len(dims) - 1):
        params[f"W{l}"] = (dims[l], dims[l + 1])
        params[f"b{l}"] = (dims[l + 1],)
        if l < len(config.hidden_widths) and config.use_batchnorm:
            params[f"gamma{l}"] = (dims[l + 1],)
            params[f"beta{l}"] = (dims[l + 1],)
            running[f"mean{l}"] = (dims[l + 1],)
            running[f"var{l}"] = (dims[l + 1],)
    return {"params": params, "running": running}


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init(config: MlpConfig, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, identity batchnorm.

    With an aleatoric head the log-variance half of the output bias starts at
    ``LOGVAR_INIT`` so early training sees near-zero logit noise.
    """
    rng = np.random.default_rng(seed)
    shapes = _shapes(config)
    params, running = {}, {}
    for name, shape in shapes["params"].items():
        if name.startswith("W"):
            a = glorot_bound(*shape)
            params[name] = rng.uniform(-a, a, size=shape)
        elif name.startswith("gamma"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    if config.aleatoric_head:
        params[f"b{len(config.hidden_widths)}"][config.class_count:] = LOGVAR_INIT
    for name, shape in shapes["running"].items():
        running[name] = np.zeros(shape) if name.startswith("mean") else np.ones(shape)
    return MlpModel(config, params, running, seed)


def save_model(model: MlpModel, path, extra: dict | None = None) -> None:
    doc = model.to_dict()
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> MlpModel:
    return MlpModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = len(logits)
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(n), labels].mean())
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return loss, d / n


def clipped_nll(logits: np.ndarray, labels: np.ndarray) -> float:
    p = softmax(logits)[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.clip(p, CLIP_LOW, CLIP_HIGH))))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, config: TrainConfig) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_score: float
    learning_rate: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    lr_drops: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epochs": [asdict(e) for e in self.epochs], "lr_drops": list(self.lr_drops)}


LossFn = Callable[[np.ndarray, np.ndarray], tuple]


def _batches(rows: np.ndarray, size: int, min_size: int) -> list[np.ndarray]:
    out = [rows[i:i + size] for i in range(0, len(rows), size)]
    if len(out) > 1 and len(out[-1]) < min_size:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


def fit(model: MlpModel, inputs: np.ndarray, loss_fn: LossFn, val_fn: Callable[[MlpModel], float],
        config: TrainConfig, epoch_rows: Callable[[int], np.ndarray] | None = None) -> TrainLog:
    """Generic minibatch Adam loop with the plateau learning-rate schedule.

    ``loss_fn(outputs, rows)`` returns ``(loss, d_outputs)`` for the rows of
    ``inputs`` in the batch. ``val_fn(model)`` is evaluated in eval mode after
    every epoch; when it has not improved by ``min_improvement`` for
    ``plateau_patience`` epochs the learning rate drops by ``lr_drop_factor``
    and training ends ``ceil(completed * extension_ratio)`` epochs later.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if len(inputs) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    log = TrainLog()
    lr = config.learning_rate
    end = config.max_epochs
    best = math.inf
    stale = 0
    epoch = 0
    min_batch = 2 if model.config.use_batchnorm else 1
    model.mode = "train"
    while epoch < end:
        rows = np.arange(len(inputs)) if epoch_rows is None else np.asarray(epoch_rows(epoch))
        if len(rows) < min_batch:
            raise ValueError("not enough rows for a training batch")
        rows = rows[rng.permutation(len(rows))]
        total = 0.0
        for batch in _batches(rows, config.batch_size, min_batch):
            out, cache = model.forward(inputs[batch], training=True, rng=rng)
            loss, dout = loss_fn(out, batch)
            adam_step(model.params, model.backward(dout, cache), state, lr, config)
            total += loss * len(batch)
        epoch += 1
        model.mode = "eval"
        score = float(val_fn(model))
        model.mode = "train"
        log.epochs.append(EpochRecord(epoch, total / len(rows), score, lr))
        if score < best - config.min_improvement:
            best = score
            stale = 0
        else:
            stale += 1
        if stale >= config.plateau_patience and len(log.lr_drops) < config.max_drops:
            lr /= config.lr_drop_factor
            end = epoch + math.ceil(epoch * config.extension_ratio)
            log.lr_drops.append(epoch)
            stale = 0
    model.mode = "eval"
    return log


def train(model: MlpModel, x, y, x_val, y_val, config: TrainConfig) -> TrainLog:
    """Cross-entropy training with validation-NLL plateau detection."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(x_val) == 0 or np.any(y_val < 0):
        raise ValueError("validation set must be non-empty and labeled")
    C = model.config.class_count

    def loss_fn(out, rows):
        loss, d = cross_entropy(out[:, :C], y[rows])
        return loss, pad_output_grad(d, out)

    return fit(model, x, loss_fn, lambda m: clipped_nll(m.logits(x_val), y_val), config)


def pad_output_grad(d: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Zero-extend a gradient over the mean logits to the full output width."""
    if d.shape == out.shape:
        return d
    full = np.zeros_like(out)
    full[:, : d.shape[1]] = d
    return full


def predict(model: MlpModel, inputs, ids: Sequence[str] | None = None, groups=None,
            labels=None) -> PredictionSet:
    if model.mode != "eval":
        raise ValueError("predict needs a model in eval mode")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.size == 0:
        inputs = inputs.reshape(0, model.config.input_dim)
    n = len(inputs)
    logits = model.logits(inputs) if n else np.zeros((0, model.config.class_count))
    if ids is None:
        ids = [str(i) for i in range(n)]
    if groups is None:
        groups = ["familiar_test"] * n
    elif isinstance(groups, str):
        groups = [groups] * n
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    return PredictionSet(ids, logits, labels, groups, class_count=model.config.class_count)
