"""Minimal trainable substrate: embeddings, a linear layer, logistic
training with Adam, and finite-difference gradient verification.

This is the deliberate desk-scale stand-in for the pre-trained encoders
a full system would use; everything is deterministic given the config
seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class NNCoreError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 3e-5
    weight_decay: float = 0.01
    batch_size: int = 4
    max_epochs: int = 10
    dropout_rate: float = 0.1
    seed: int = 0
    early_stop_patience: int = 3

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise NNCoreError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise NNCoreError("dropout_rate must lie in [0, 1]")


@dataclass
class LinearLayer:
    weights: np.ndarray  # (d_in, d_out)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise NNCoreError("weights must be 2-D and bias 1-D")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise NNCoreError(
                f"bias of size {self.bias.shape[0]} does not match "
                f"{self.weights.shape[1]} output columns"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NNCoreError("layer parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.weights.shape[0]

    @property
    def d_out(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.weights.copy(), self.bias.copy())

    @staticmethod
    def init(d_in: int, d_out: int, seed: int, scale: float = 0.05) -> "LinearLayer":
        rng = np.random.default_rng(seed)
        return LinearLayer(
            rng.uniform(-scale, scale, size=(d_in, d_out)),
            np.zeros(d_out),
        )


def apply_linear(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.d_in:
        raise NNCoreError(f"input of size {x.shape[-1]} does not match d_in={layer.d_in}")
    if not np.isfinite(x).all():
        raise NNCoreError("input must be finite")
    return x @ layer.weights + layer.bias


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise NNCoreError("softmax of empty input")
    if not np.isfinite(logits).all():
        raise NNCoreError("softmax input must be finite")
    # clamp keeps extreme tails strictly positive instead of underflowing
    shifted = np.maximum(logits - logits.max(), -700.0)
    exp = np.exp(shifted)
    return exp / exp.sum()


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


@dataclass
class EmbeddingTable:
    vocab: dict[str, int]
    matrix: np.ndarray  # (|V| + 1, d); last row is UNK
    dim: int = 64

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if not np.isfinite(self.matrix).all():
            raise NNCoreError("embedding matrix must be finite")
        if self.matrix.shape != (len(self.vocab) + 1, self.dim):
            raise NNCoreError("embedding matrix shape does not match vocab")

    @staticmethod
    def build(tokens: set[str], dim: int = 64, seed: int = 0) -> "EmbeddingTable":
        vocab = {tok: i for i, tok in enumerate(sorted(tokens))}
        rng = np.random.default_rng(seed)
        matrix = rng.uniform(-0.05, 0.05, size=(len(vocab) + 1, dim))
        return EmbeddingTable(vocab=vocab, matrix=matrix, dim=dim)

    def lookup(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.get(token, len(self.vocab))]

    def mean_of(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            raise NNCoreError("cannot embed an empty token sequence")
        rows = np.stack([self.lookup(t) for t in tokens])
        return rows.mean(axis=0)


# --------------------------------------------------------------------------
# Logistic training (BCE + Adam with decoupled weight decay)
# --------------------------------------------------------------------------

def bce_loss_and_grad(
    layer: LinearLayer, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean binary cross-entropy of sigmoid(layer(x)) against y, plus
    gradients w.r.t. weights and bias. x is (n, d_in), y is (n,)."""
    logits = apply_linear(layer, x)[:, 0]
    p = sigmoid(logits)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    delta = (p - y) / len(y)  # d loss / d logit
    grad_w = x.T @ delta[:, None]
    grad_b = np.array([delta.sum()])
    return loss, grad_w, grad_b


@dataclass
class FitResult:
    layer: LinearLayer
    loss_history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    stopped_early: bool = False


def fit(
    layer: LinearLayer,
    dataset: list[tuple[np.ndarray, float]],
    config: TrainConfig,
    validation: list[tuple[np.ndarray, float]] | None = None,
) -> FitResult:
    """Train the layer with Adam on binary cross-entropy.

    Deterministic for a fixed config seed: the epoch shuffle and the
    dropout masks are both drawn from one seeded generator. Dropout is
    inverted input dropout, applied only here.
    """
    if not dataset:
        raise NNCoreError("empty training set")
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    ys = np.array([float(y) for _, y in dataset])
    if not set(np.unique(ys)) <= {0.0, 1.0}:
        raise NNCoreError("labels must be 0 or 1")
    if layer.d_out != 1:
        raise NNCoreError("fit expects a single-logit layer")

    val_xs = val_ys = None
    if validation:
        val_xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in validation])
        val_ys = np.array([float(y) for _, y in validation])

    rng = np.random.default_rng(config.seed)
    trained = layer.copy()
    m_w = np.zeros_like(trained.weights)
    v_w = np.zeros_like(trained.weights)
    m_b = np.zeros_like(trained.bias)
    v_b = np.zeros_like(trained.bias)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    result = FitResult(layer=trained)
    best_val = np.inf
    stale = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(xs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            xb = xs[batch]
            if config.dropout_rate > 0.0:
                keep = 1.0 - config.dropout_rate
                mask = rng.random(xb.shape) < keep
                xb = xb * mask / keep
            loss, grad_w, grad_b = bce_loss_and_grad(trained, xb, ys[batch])
            if not np.isfinite(loss):
                raise NNCoreError(f"non-finite loss at epoch {epoch} step {n_batches}")
            step += 1
            m_w = beta1 * m_w + (1 - beta1) * grad_w
            v_w = beta2 * v_w + (1 - beta2) * grad_w**2
            m_b = beta1 * m_b + (1 - beta1) * grad_b
            v_b = beta2 * v_b + (1 - beta2) * grad_b**2
            mw_hat = m_w / (1 - beta1**step)
            vw_hat = v_w / (1 - beta2**step)
            mb_hat = m_b / (1 - beta1**step)
            vb_hat = v_b / (1 - beta2**step)
            trained.weights -= config.learning_rate * (
                mw_hat / (np.sqrt(vw_hat) + eps) + config.weight_decay * trained.weights
            )
            trained.bias -= config.learning_rate * mb_hat / (np.sqrt(vb_hat) + eps)
            epoch_loss += loss
            n_batches += 1
        result.loss_history.append(epoch_loss / max(n_batches, 1))

        if val_xs is not None:
            val_loss, _, _ = bce_loss_and_grad(trained, val_xs, val_ys)
            result.val_history.append(val_loss)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    result.stopped_early = True
                    break

    result.layer = trained
    return result


def grad_check(
    layer: LinearLayer,
    x: np.ndarray,
    y: np.ndarray,
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic BCE gradients and central
    differences. Dropout plays no part here by construction."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise NNCoreError("epsilon must lie in [1e-7, 1e-3]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    _, grad_w, grad_b = bce_loss_and_grad(layer, x, y)
    if not (np.isfinite(grad_w).all() and np.isfinite(grad_b).all()):
        raise NNCoreError("non-finite analytic gradient")

    worst = 0.0

    def probe(param: np.ndarray, grad: np.ndarray) -> None:
        nonlocal worst
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + epsilon
            up, _, _ = bce_loss_and_grad(layer, x, y)
            param[idx] = original - epsilon
            down, _, _ = bce_loss_and_grad(layer, x, y)
            param[idx] = original
            numeric = (up - down) / (2 * epsilon)
            err = abs(grad[idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
            it.iternext()

    probe(layer.weights, grad_w)
    probe(layer.bias, grad_b)
    return worst


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_FORMAT = 1


def save_params(params: dict[str, np.ndarray], path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "params": {
            name: {"shape": list(arr.shape), "values": np.asarray(arr).ravel().tolist()}
            for name, arr in params.items()
        },
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise NNCoreError(f"unsupported checkpoint format: {payload.get('format')}")
    params = {}
    for name, entry in payload["params"].items():
        shape = tuple(entry["shape"])
        values = np.array(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise NNCoreError(f"checkpoint entry {name}: values do not match shape {shape}")
        params[name] = values.reshape(shape)
    return params


def single_sgd_step_reference(
    layer: LinearLayer, x: np.ndarray, y: np.ndarray, lr: float
) -> LinearLayer:
    """One plain gradient-descent step, for cross-checking fit()."""
    _, grad_w, grad_b = bce_loss_and_grad(layer, np.atleast_2d(x), np.atleast_1d(y))
    return LinearLayer(layer.weights - lr * grad_w, layer.bias - lr * grad_b)
