"""History selection: rule-based pruning of entity-disjoint turns (hard
selection) followed by attention re-ranking of the survivors (soft
selection).

Attention weights come from a single-logit linear scorer over mean
token embeddings, normalized with a softmax over the retained turns;
ties keep conversation order so the ranking is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import HistoryItem
from .entities import EntitySet
from .nncore import (
    EmbeddingTable,
    LinearLayer,
    NNCoreError,
    TrainConfig,
    apply_linear,
    fit,
    softmax,
)
from .text import token_strings


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class PruneConfig:
    min_shared_entities: int = 1
    match_mode: str = "exact_token"  # or "normalized_overlap"
    overlap_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.min_shared_entities < 1:
            raise SelectionError("min_shared_entities must be >= 1")
        if self.match_mode not in ("exact_token", "normalized_overlap"):
            raise SelectionError(f"unknown match_mode {self.match_mode!r}")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise SelectionError("overlap_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class TurnRepresentation:
    turn_id: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        if not np.isfinite(self.vector).all():
            raise SelectionError(f"non-finite representation for turn {self.turn_id}")


@dataclass
class AttentionScorer:
    layer: LinearLayer

    def __post_init__(self) -> None:
        if self.layer.d_out != 1:
            raise SelectionError("attention scorer must produce one logit")

    @staticmethod
    def init(dim: int, seed: int = 0) -> "AttentionScorer":
        return AttentionScorer(LinearLayer.init(dim, 1, seed))

    def logit(self, vector: np.ndarray) -> float:
        return float(apply_linear(self.layer, vector)[0])


@dataclass(frozen=True)
class KeptTurn:
    turn_id: str
    weight: float
    rank: int
    shared_entities: tuple[str, ...] = ()


@dataclass(frozen=True)
class PrunedTurn:
    turn_id: str
    reason: str


@dataclass(frozen=True)
class SelectionResult:
    kept: tuple[KeptTurn, ...]
    pruned: tuple[PrunedTurn, ...]

    def kept_ids(self) -> list[str]:
        return [k.turn_id for k in self.kept]

    def to_trace(self) -> list[dict]:
        trace = []
        for k in self.kept:
            trace.append(
                {
                    "turn_id": k.turn_id,
                    "decision": "kept",
                    "weight": k.weight,
                    "rank": k.rank,
                    "shared_entities": list(k.shared_entities),
                }
            )
        for p in self.pruned:
            trace.append({"turn_id": p.turn_id, "decision": "pruned", "reason": p.reason})
        return trace


def _current_entity_tokens(current) -> set[str]:
    if hasattr(current, "all_entity_tokens"):
        return current.all_entity_tokens()
    return current.tokens()


def shared_terms(turn_entities: EntitySet, current) -> tuple[str, ...]:
    current_tokens = _current_entity_tokens(current)
    return tuple(t for t in sorted(turn_entities.tokens()) if t in current_tokens)


def prune(
    history: list[tuple[HistoryItem, EntitySet]],
    current,
    config: PruneConfig = PruneConfig(),
) -> tuple[list[tuple[HistoryItem, EntitySet, tuple[str, ...]]], list[PrunedTurn]]:
    """Partition history into retained and pruned turns by entity overlap
    with the current question's effective entities (question tier plus
    any pronoun-inherited answer terms)."""
    retained = []
    pruned = []
    for item, ents in history:
        shared = shared_terms(ents, current)
        if config.match_mode == "exact_token":
            keep = len(shared) >= config.min_shared_entities
        else:
            turn_tokens = ents.tokens()
            cur_tokens = _current_entity_tokens(current)
            denom = min(len(turn_tokens), len(cur_tokens))
            overlap = len(shared) / denom if denom else 0.0
            keep = overlap >= config.overlap_threshold
        if keep:
            retained.append((item, ents, shared))
        else:
            pruned.append(
                PrunedTurn(turn_id=item.turn_id, reason="no shared context/question entities")
            )
    return retained, pruned


def represent(item: HistoryItem, embeddings: EmbeddingTable) -> TurnRepresentation:
    """Mean embedding of the turn's question tokens followed by its
    answer tokens; unknown tokens share the UNK row."""
    tokens = token_strings(item.question) + token_strings(item.answer_text)
    if not tokens:
        raise SelectionError(f"turn {item.turn_id}: nothing to represent")
    return TurnRepresentation(turn_id=item.turn_id, vector=embeddings.mean_of(tokens))


def rerank(
    reps: list[TurnRepresentation],
    scorer: AttentionScorer,
    shared: list[tuple[str, ...]] | None = None,
) -> SelectionResult:
    """Softmax attention weights over the retained turns, sorted by
    weight descending with conversation-order tie-breaking."""
    if not reps:
        raise SelectionError("rerank needs at least one retained turn")
    logits = np.array([scorer.logit(r.vector) for r in reps])
    weights = softmax(logits)
    order = sorted(range(len(reps)), key=lambda i: (-weights[i], i))
    kept = tuple(
        KeptTurn(
            turn_id=reps[i].turn_id,
            weight=float(weights[i]),
            rank=rank,
            shared_entities=shared[i] if shared else (),
        )
        for rank, i in enumerate(order)
    )
    return SelectionResult(kept=kept, pruned=())


def uniform_selection(
    turn_ids: list[str], shared: list[tuple[str, ...]] | None = None
) -> SelectionResult:
    """Conversation-order selection with uniform weights (used when the
    re-ranking stage is disabled)."""
    n = len(turn_ids)
    kept = tuple(
        KeptTurn(
            turn_id=tid,
            weight=1.0 / n,
            rank=i,
            shared_entities=shared[i] if shared else (),
        )
        for i, tid in enumerate(turn_ids)
    )
    return SelectionResult(kept=kept, pruned=())


def train_attention(
    examples: list[tuple[np.ndarray, int]],
    dim: int,
    config: TrainConfig,
    scorer: AttentionScorer | None = None,
) -> AttentionScorer:
    """Fit the attention scorer with binary cross-entropy against turn
    relevance labels (1 when the turn contributed a required entity)."""
    if not examples:
        raise SelectionError("no attention training examples")
    if scorer is None:
        scorer = AttentionScorer.init(dim, config.seed)
    if config.max_epochs == 0:
        return scorer
    result = fit(scorer.layer, [(x, float(y)) for x, y in examples], config)
    return AttentionScorer(result.layer)
