"""Feed-forward LOS classifier: ReLU hidden layers, sigmoid output."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FEATURE_NAMES, FeatureRow, feature_matrix
from .rng import Rng

MODEL_FORMAT = "uwbnlos-mlp"
MODEL_VERSION = 1

ABLATIONS = {
    "all": FEATURE_NAMES,
    "no_fp_rssi": tuple(n for n in FEATURE_NAMES if n != "fp_rssi"),
    "no_rx_rssi": tuple(n for n in FEATURE_NAMES if n != "rx_rssi"),
    "no_rssd": tuple(n for n in FEATURE_NAMES if n != "rssd"),
    "no_std": tuple(n for n in FEATURE_NAMES if n != "range_std"),
}


class ModelFormatError(ValueError):
    """Raised for unreadable, malformed or incompatible model files."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    hidden_layers: int = 10
    neurons_per_layer: int = 300

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("train.epochs: must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("train.learning_rate: must be >= 0")
        for name in ("batch_size", "hidden_layers", "neurons_per_layer"):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name}: must be positive")


@dataclass(frozen=True)
class ClassifierMetrics:
    accuracy: float   # percent
    precision: float  # fraction


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]          # (out, in) per layer
    biases: list[np.ndarray]
    input_selection: tuple[str, ...]
    norm_mean: np.ndarray = field(default=None)
    norm_std: np.ndarray = field(default=None)

    def __post_init__(self):
        n_in = self.layer_sizes[0]
        if self.norm_mean is None:
            self.norm_mean = np.zeros(n_in)
        if self.norm_std is None:
            self.norm_std = np.ones(n_in)
        self.validate()

    def validate(self):
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if sizes[-1] != 1:
            raise ValueError("output layer must have size 1")
        if len(self.input_selection) != sizes[0]:
            raise ValueError("input_selection does not match input layer size")
        unknown = set(self.input_selection) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown input features {sorted(unknown)}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count mismatch")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise ValueError(f"layer {k}: shape mismatch")
        if self.norm_mean.shape != (sizes[0],) or self.norm_std.shape != (sizes[0],):
            raise ValueError("normalization shape mismatch")
        if not np.all(self.norm_std > 0):
            raise ValueError("normalization stds must be positive")

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_sizes), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], tuple(self.input_selection),
                        self.norm_mean.copy(), self.norm_std.copy())


def init_model(config: TrainConfig, input_selection: Sequence[str] = FEATURE_NAMES) -> MlpModel:
    """He-normal weights (variance 2 / fan_in), zero biases, identity normalization."""
    sel = tuple(input_selection)
    if not sel:
        raise ValueError("input_selection is empty")
    sizes = [len(sel)] + [config.neurons_per_layer] * config.hidden_layers + [1]
    rng = Rng(config.seed).substream(0)
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        w = rng.substream(k).normal(fan_in * fan_out, 0.0, np.sqrt(2.0 / fan_in))
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, sel)


def sigmoid(z):
    """Overflow-free logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_inputs(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"model expects {model.layer_sizes[0]} inputs "
                         f"{model.input_selection}, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input features")
    return X


def _logits(model: MlpModel, Xn: np.ndarray) -> np.ndarray:
    a = Xn
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        a = z if k == last else np.maximum(z, 0.0)
    return a[:, 0]


def normalize(model: MlpModel, X: np.ndarray) -> np.ndarray:
    return (X - model.norm_mean) / model.norm_std


# saturated logits would round to exactly 0 or 1; keep probabilities inside the open interval
_P_MIN = np.finfo(float).tiny
_P_MAX = 1.0 - np.finfo(float).epsneg


def predict_proba(model: MlpModel, X) -> np.ndarray:
    """LOS probabilities for rows of raw features ordered as ``input_selection``."""
    X = _check_inputs(model, X)
    return np.clip(sigmoid(_logits(model, normalize(model, X))), _P_MIN, _P_MAX)


def forward(model: MlpModel, features) -> float:
    """LOS probability of a single measurement.

    ``features`` is either a FeatureVector (the model picks its inputs) or a
    sequence already ordered as ``model.input_selection``.
    """
    if hasattr(features, "select"):
        features = features.select(model.input_selection)
    return float(predict_proba(model, features)[0])


def predict_rows(model: MlpModel, rows: Sequence[FeatureRow]) -> np.ndarray:
    return predict_proba(model, feature_matrix(rows, model.input_selection))


def bce_loss(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy computed from logits."""
    return float(np.mean(np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))


def loss_and_grads(model: MlpModel, Xn: np.ndarray, y: np.ndarray):
    """Mean BCE and its gradients w.r.t. every weight and bias.

    ``Xn`` is already normalized.
    """
    acts = [Xn]
    pre = []
    a = Xn
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        acts.append(a)
    logits = a[:, 0]
    n = len(y)
    delta = ((sigmoid(logits) - y) / n)[:, None]
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for k in range(last, -1, -1):
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k]) * (pre[k - 1] > 0)
    return bce_loss(logits, y), gw, gb


def fit_normalization(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[~(std > 0)] = 1.0
    return mean, std


def train(model: MlpModel, X, y, config: TrainConfig):
    """Mini-batch gradient descent on mean binary cross-entropy.

    Normalization statistics are fitted on ``X`` and frozen into the returned
    copy. Returns ``(model, history)`` with the full-set loss after each epoch.
    """
    X = _check_inputs(model, X)
    y = np.asarray(y, dtype=float)
    if len(y) != len(X):
        raise ValueError("features and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("training set contains a single class")

    m = model.copy()
    m.norm_mean, m.norm_std = fit_normalization(X)
    Xn = normalize(m, X)
    lr = config.learning_rate
    rng = Rng(config.seed).substream(1)
    history = []
    for epoch in range(config.epochs):
        order = rng.substream(epoch).permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            _, gw, gb = loss_and_grads(m, Xn[idx], y[idx])
            for k in range(len(m.weights)):
                m.weights[k] -= lr * gw[k]
                m.biases[k] -= lr * gb[k]
        history.append(bce_loss(_logits(m, Xn), y))
    return m, history


def evaluate(model: MlpModel, X, y, threshold: float = 0.5) -> ClassifierMetrics:
    """Accuracy (percent) and precision of ``p >= threshold`` as the LOS call.

    Precision is 1.0 when nothing is predicted LOS.
    """
    y = np.asarray(y).astype(int)
    pred = (predict_proba(model, X) >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    accuracy = 100.0 * float(np.mean(pred == y))
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    return ClassifierMetrics(accuracy, precision)


def rows_xy(rows: Sequence[FeatureRow], names: Sequence[str]):
    if any(r.label is None for r in rows):
        raise ValueError("unlabeled rows")
    return feature_matrix(rows, names), np.array([r.label for r in rows], dtype=float)


def ablate_inputs(rows: Sequence[FeatureRow], config: TrainConfig) -> dict[str, MlpModel]:
    """Train one model on all inputs and one per dropped signal feature."""
    models = {}
    for name, sel in ABLATIONS.items():
        X, y = rows_xy(rows, sel)
        models[name], _ = train(init_model(config, sel), X, y, config)
    return models


def save_model(model: MlpModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "input_selection": list(model.input_selection),
        "normalization": [[float(m), float(s)] for m, s in zip(model.norm_mean, model.norm_std)],
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: cannot read model: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {doc.get('version')!r}")
    try:
        norm = np.array(doc["normalization"], dtype=float).reshape(-1, 2)
        return MlpModel(
            [int(s) for s in doc["layer_sizes"]],
            [np.array(w, dtype=float) for w in doc["weights"]],
            [np.array(b, dtype=float) for b in doc["biases"]],
            tuple(doc["input_selection"]),
            norm[:, 0].copy(), norm[:, 1].copy(),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model: {exc}") from exc
