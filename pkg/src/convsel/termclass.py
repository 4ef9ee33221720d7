"""Binary term classification over the re-ranked history: a linear
layer + sigmoid (+ dropout during training) scores every token, and
tokens at or above the threshold are highlighted as 1.

Features per token: its embedding, an indicator for membership in the
current question's effective entities, an indicator for passage
presence, the turn's recency, and the turn's attention weight (d+4
total). Highlighted history tokens become boosted reader query terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Passage
from .nncore import (
    EmbeddingTable,
    LinearLayer,
    TrainConfig,
    apply_linear,
    fit,
    sigmoid,
)

N_EXTRA_FEATURES = 4


class TermClassError(ValueError):
    pass


@dataclass
class TermClassifier:
    layer: LinearLayer
    dropout_rate: float = 0.1
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.layer.d_out != 1:
            raise TermClassError("term classifier must produce one logit")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise TermClassError("dropout_rate must lie in [0, 1]")

    @staticmethod
    def init(embedding_dim: int, seed: int = 0, dropout_rate: float = 0.1) -> "TermClassifier":
        return TermClassifier(
            layer=LinearLayer.init(embedding_dim + N_EXTRA_FEATURES, 1, seed),
            dropout_rate=dropout_rate,
        )

    @property
    def feature_dim(self) -> int:
        return self.layer.d_in


def token_features(
    token: str,
    embeddings: EmbeddingTable,
    effective_tokens: set[str],
    passage_tokens: set[str],
    recency: float,
    attention_weight: float,
) -> np.ndarray:
    """Fixed-order feature vector for one token in the current context."""
    return np.concatenate(
        [
            embeddings.lookup(token),
            [
                1.0 if token in effective_tokens else 0.0,
                1.0 if token in passage_tokens else 0.0,
                recency,
                attention_weight,
            ],
        ]
    )


@dataclass(frozen=True)
class ScoredToken:
    token: str
    score: float
    bit: int


@dataclass(frozen=True)
class TokenLabeling:
    tokens: tuple[ScoredToken, ...]

    def highlighted(self) -> list[str]:
        return [t.token for t in self.tokens if t.bit == 1]

    def to_trace(self) -> list[dict]:
        return [
            {"token": t.token, "score": round(t.score, 6), "bit": t.bit}
            for t in self.tokens
        ]


def classify_terms(
    tokens_with_features: list[tuple[str, np.ndarray]],
    model: TermClassifier,
    threshold: float | None = None,
) -> TokenLabeling:
    """Inference scoring: sigmoid of the linear logit per token, bit = 1
    exactly when the score reaches the threshold (inclusive). Dropout is
    a training-time device and never runs here."""
    cut = model.threshold if threshold is None else threshold
    scored = []
    for token, feats in tokens_with_features:
        if feats.shape[0] != model.feature_dim:
            raise TermClassError(
                f"feature vector of size {feats.shape[0]} does not match "
                f"model dimension {model.feature_dim}"
            )
        score = float(sigmoid(apply_linear(model.layer, feats)[0]))
        scored.append(ScoredToken(token=token, score=score, bit=1 if score >= cut else 0))
    return TokenLabeling(tokens=tuple(scored))


def train_termclass(
    dataset: list[tuple[np.ndarray, int]],
    feature_dim: int,
    config: TrainConfig,
    model: TermClassifier | None = None,
) -> TermClassifier:
    """Fit the classifier with BCE on distant-supervision token labels;
    the configured dropout applies to the input features while training."""
    if not dataset:
        raise TermClassError("no term classification training examples")
    if model is None:
        model = TermClassifier.init(
            feature_dim - N_EXTRA_FEATURES, config.seed, config.dropout_rate
        )
    if config.max_epochs == 0:
        return model
    result = fit(model.layer, [(x, float(y)) for x, y in dataset], config)
    return TermClassifier(
        layer=result.layer, dropout_rate=model.dropout_rate, threshold=model.threshold
    )
