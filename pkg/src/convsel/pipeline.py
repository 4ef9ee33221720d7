"""End-to-end pipeline wiring: entity propagation, pruning, re-ranking,
term highlighting, and span prediction, with per-stage ablation variants
and a rewrite-then-answer alternative path.

Also owns model training: distant labels supervise both the attention
scorer (turn relevance) and the term classifier (token relevance), per
the staged order prune -> rerank -> classify.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Conversation, HistoryItem, Passage, history_for
from .entities import (
    AugmentedQuestion,
    DistantLabels,
    EntitySet,
    answer_context_terms,
    distant_label,
    entity_chain,
    propagate,
)
from .nncore import EmbeddingTable, TrainConfig, save_params, load_params, LinearLayer
from .reader import (
    ReaderConfig,
    ReaderInput,
    SpanPrediction,
    compose_pipeline,
    predict_span,
    score_windows,
    template_rewrite,
)
from .selection import (
    AttentionScorer,
    PruneConfig,
    PrunedTurn,
    SelectionResult,
    prune,
    represent,
    rerank,
    train_attention,
    uniform_selection,
)
from .termclass import TermClassifier, classify_terms, token_features, train_termclass
from .text import is_stopword, token_strings

VARIANTS = ("full", "no_prune", "no_rerank", "no_termclass", "pipeline_qr")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    variant: str = "full"
    prune: PruneConfig = field(default_factory=PruneConfig)
    reader: ReaderConfig = field(default_factory=ReaderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}"
            )

    def with_variant(self, variant: str) -> "PipelineConfig":
        return replace(self, variant=variant)


@dataclass
class ModelBundle:
    embeddings: EmbeddingTable
    scorer: AttentionScorer
    termclass: TermClassifier
    idf: dict[str, float] = field(default_factory=dict)

    def save(self, path) -> None:
        vocab_items = sorted(self.embeddings.vocab.items(), key=lambda kv: kv[1])
        save_params(
            {
                "embedding_matrix": self.embeddings.matrix,
                "attention_weights": self.scorer.layer.weights,
                "attention_bias": self.scorer.layer.bias,
                "termclass_weights": self.termclass.layer.weights,
                "termclass_bias": self.termclass.layer.bias,
            },
            path,
        )
        import json
        from pathlib import Path

        side = Path(path).with_suffix(".meta.json")
        side.write_text(
            json.dumps(
                {
                    "vocab": [tok for tok, _ in vocab_items],
                    "dim": self.embeddings.dim,
                    "dropout_rate": self.termclass.dropout_rate,
                    "threshold": self.termclass.threshold,
                    "idf": self.idf,
                }
            ),
            encoding="utf-8",
        )

    @staticmethod
    def load(path) -> "ModelBundle":
        import json
        from pathlib import Path

        params = load_params(path)
        meta = json.loads(Path(path).with_suffix(".meta.json").read_text(encoding="utf-8"))
        vocab = {tok: i for i, tok in enumerate(meta["vocab"])}
        embeddings = EmbeddingTable(
            vocab=vocab, matrix=params["embedding_matrix"], dim=meta["dim"]
        )
        return ModelBundle(
            embeddings=embeddings,
            scorer=AttentionScorer(
                LinearLayer(params["attention_weights"], params["attention_bias"])
            ),
            termclass=TermClassifier(
                layer=LinearLayer(params["termclass_weights"], params["termclass_bias"]),
                dropout_rate=meta["dropout_rate"],
                threshold=meta["threshold"],
            ),
            idf={k: float(v) for k, v in meta.get("idf", {}).items()},
        )


def fresh_models(corpus: list[Conversation], dim: int = 64, seed: int = 0) -> ModelBundle:
    """Untrained bundle with a corpus-wide vocabulary."""
    tokens: set[str] = set()
    for conv in corpus:
        tokens.update(conv.passage.token_strings)
        for turn in conv.turns:
            tokens.update(token_strings(turn.question))
            for ans in turn.gold_answers:
                tokens.update(token_strings(ans.text))
    from .corpus import idf_table

    return ModelBundle(
        embeddings=EmbeddingTable.build(tokens, dim=dim, seed=seed),
        scorer=AttentionScorer.init(dim, seed=seed + 1),
        termclass=TermClassifier.init(dim, seed=seed + 2),
        idf=idf_table(corpus),
    )


# --------------------------------------------------------------------------
# Stage helpers
# --------------------------------------------------------------------------

def history_entity_sets_with_answers(history: list[HistoryItem]) -> list[EntitySet]:
    """Entity sets the prune stage compares: the question-derived chain
    plus each turn's answer content terms as extra context entities."""
    chain = entity_chain([h.question for h in history])
    out = []
    for aug, item in zip(chain, history):
        extra = answer_context_terms(item.answer_text)
        out.append(
            EntitySet(
                context_entities=tuple(
                    dict.fromkeys(list(aug.effective.context_entities) + list(extra))
                ),
                question_entities=aug.effective.question_entities,
            )
        )
    return out


def recency_of(position: int, n_history: int) -> float:
    return (position + 1) / n_history if n_history else 1.0


@dataclass
class PipelineOutcome:
    prediction: SpanPrediction
    selection: SelectionResult
    highlighted: tuple[str, ...]
    question: AugmentedQuestion
    token_labels: dict[str, list[dict]] = field(default_factory=dict)
    rewrite: str | None = None

    def trace_json(self) -> dict:
        return {
            "question": self.question.text,
            "effective_entities": list(self.question.effective_terms()),
            "inherited_entities": list(self.question.inherited_entities),
            "selection": self.selection.to_trace(),
            "token_labels": self.token_labels,
            "highlighted_terms": list(self.highlighted),
            "answer": self.prediction.to_json(),
            **({"rewrite": self.rewrite} if self.rewrite is not None else {}),
        }


def answer_question(
    passage: Passage,
    history: list[HistoryItem],
    question: str,
    models: ModelBundle,
    config: PipelineConfig,
    prune_override: dict[str, bool] | None = None,
) -> PipelineOutcome:
    """Run the staged pipeline for one question against its history."""
    chain_sets = history_entity_sets_with_answers(history)
    last_effective = None
    last_answer = None
    if history:
        chain = entity_chain(
            [h.question for h in history], [h.answer_text for h in history]
        )
        last_effective = chain[-1].effective
        last_answer = history[-1].answer_text
    aug = propagate(question, last_effective, last_answer)

    # hard selection
    try:
        if config.variant == "no_prune":
            retained = [
                (item, ents, tuple(sorted(ents.tokens() & aug.all_entity_tokens())))
                for item, ents in zip(history, chain_sets)
            ]
            pruned: list[PrunedTurn] = []
        else:
            retained, pruned = prune(
                list(zip(history, chain_sets)), aug, config.prune
            )
            if prune_override is not None:
                forced_keep = [
                    (item, ents, shared)
                    for item, ents, shared in retained
                    if prune_override.get(item.turn_id, True)
                ]
                forced_prune = [
                    PrunedTurn(turn_id=item.turn_id, reason="forced by degradation")
                    for item, _, _ in retained
                    if not prune_override.get(item.turn_id, True)
                ]
                revived = [
                    (history[i], chain_sets[i], ())
                    for i, item in enumerate(history)
                    if any(p.turn_id == item.turn_id for p in pruned)
                    and prune_override.get(item.turn_id, False)
                ]
                retained = sorted(
                    forced_keep + revived, key=lambda t: history.index(t[0])
                )
                pruned = forced_prune + [
                    p for p in pruned if not prune_override.get(p.turn_id, False)
                ]
    except Exception as exc:
        raise PipelineError("prune", str(exc)) from exc

    # soft selection
    try:
        if not retained:
            selection = SelectionResult(kept=(), pruned=tuple(pruned))
        elif config.variant in ("no_rerank", "no_prune"):
            selection = SelectionResult(
                kept=uniform_selection(
                    [item.turn_id for item, _, _ in retained],
                    [shared for _, _, shared in retained],
                ).kept,
                pruned=tuple(pruned),
            )
        else:
            reps = [represent(item, models.embeddings) for item, _, _ in retained]
            ranked = rerank(reps, models.scorer, [shared for _, _, shared in retained])
            selection = SelectionResult(kept=ranked.kept, pruned=tuple(pruned))
    except Exception as exc:
        raise PipelineError("rerank", str(exc)) from exc

    # term highlighting
    by_id = {item.turn_id: (i, item) for i, item in enumerate(history)}
    highlighted: list[str] = []
    token_labels: dict[str, list[dict]] = {}
    if config.variant != "no_termclass":
        try:
            passage_tokens = set(passage.token_strings)
            effective_tokens = aug.all_entity_tokens()
            weight_by_id = {k.turn_id: k.weight for k in selection.kept}
            for kept in selection.kept:
                position, item = by_id[kept.turn_id]
                tokens = token_strings(item.question) + token_strings(item.answer_text)
                feats = [
                    (
                        tok,
                        token_features(
                            tok,
                            models.embeddings,
                            effective_tokens,
                            passage_tokens,
                            recency_of(position, len(history)),
                            weight_by_id[kept.turn_id],
                        ),
                    )
                    for tok in tokens
                ]
                labeling = classify_terms(feats, models.termclass)
                token_labels[kept.turn_id] = labeling.to_trace()
                highlighted.extend(labeling.highlighted())
            # the current question's tokens are scored for the trace but
            # enter the query bag through the question route regardless
            q_feats = [
                (
                    tok,
                    token_features(
                        tok, models.embeddings, effective_tokens, passage_tokens, 1.0, 1.0
                    ),
                )
                for tok in token_strings(question)
            ]
            token_labels["current"] = classify_terms(q_feats, models.termclass).to_trace()
        except Exception as exc:
            raise PipelineError("termclass", str(exc)) from exc

    # answer prediction
    try:
        if config.variant == "pipeline_qr":
            history_sets = [aug_h.effective for aug_h in entity_chain([h.question for h in history])]
            rewrite = template_rewrite(question, history_sets)
            prediction = compose_pipeline(
                template_rewrite, question, history_sets, passage,
                config.reader, models.idf,
            )
            return PipelineOutcome(
                prediction=prediction,
                selection=selection,
                highlighted=(),
                question=aug,
                token_labels={},
                rewrite=rewrite.text,
            )
        ordered_kept = tuple(
            (by_id[k.turn_id][1], k.weight)
            for k in selection.kept
        ) if selection.kept else ()
        prediction = predict_span(
            ReaderInput(
                passage=passage,
                question=aug,
                selected_history=ordered_kept,
                highlighted_terms=tuple(dict.fromkeys(highlighted)),
                config=config.reader,
                idf=models.idf or None,
            )
        )
    except Exception as exc:
        raise PipelineError("reader", str(exc)) from exc

    return PipelineOutcome(
        prediction=prediction,
        selection=selection,
        highlighted=tuple(dict.fromkeys(highlighted)),
        question=aug,
        token_labels=token_labels,
    )


def run_pipeline(
    conversation: Conversation,
    turn_index: int,
    models: ModelBundle,
    config: PipelineConfig,
    history: list[HistoryItem] | None = None,
    prune_override: dict[str, bool] | None = None,
) -> PipelineOutcome:
    """Answer one turn of a conversation with gold-answer history (or an
    explicit override history, e.g. with injected negatives)."""
    if not 0 <= turn_index < len(conversation.turns):
        raise PipelineError("input", f"turn index {turn_index} out of range")
    items = history if history is not None else history_for(conversation, turn_index)
    return answer_question(
        conversation.passage,
        items,
        conversation.turns[turn_index].question,
        models,
        config,
        prune_override=prune_override,
    )


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

def labeler_reader_handle(config: ReaderConfig | None = None):
    cfg = config or ReaderConfig()
    def handle(passage: Passage, terms: list[str]):
        pred = score_windows(passage, {t: 1.0 for t in terms}, cfg.max_answer_length)
        return (pred.start, pred.end)
    return handle


@dataclass
class TrainingReport:
    n_label_conversations: int = 0
    n_attention_rows: int = 0
    n_termclass_rows: int = 0
    wall_clock: float = 0.0


def compute_labels(
    corpus: list[Conversation], reader_config: ReaderConfig | None = None
) -> list[DistantLabels]:
    handle = labeler_reader_handle(reader_config)
    return [distant_label(conv, handle) for conv in corpus]


def _required_terms_in(item: HistoryItem, required: tuple[str, ...]) -> bool:
    text_tokens = token_strings(item.question) + token_strings(item.answer_text)
    from .text import contains_phrase

    return any(contains_phrase(text_tokens, term) for term in required)


def train_models(
    corpus: list[Conversation],
    config: PipelineConfig,
    labels: list[DistantLabels] | None = None,
    attention_config: TrainConfig | None = None,
    termclass_config: TrainConfig | None = None,
    dim: int = 64,
    unk_rate: float = 0.1,
) -> tuple[ModelBundle, TrainingReport]:
    """Distant labels -> attention scorer -> term classifier, in stage
    order so classifier features see the trained attention weights.

    A fraction of classifier rows swap their token embedding for the UNK
    row (label and indicator features untouched), so the model keeps a
    usable decision surface for tokens it will never have seen, which is
    every planted name in a held-out conversation.
    """
    start = time.time()
    report = TrainingReport(n_label_conversations=len(corpus))
    bundle = fresh_models(corpus, dim=dim, seed=config.seed)
    unk_rng = random.Random(config.seed * 7919 + 13)
    unk_vector = bundle.embeddings.matrix[len(bundle.embeddings.vocab)]
    if labels is None:
        labels = compute_labels(corpus, config.reader)
    by_conv = {l.conversation_id: l for l in labels}

    def tc_features(tok, effective_tokens, passage_tokens, rec, attn):
        feats = token_features(
            tok, bundle.embeddings, effective_tokens, passage_tokens, rec, attn
        )
        if unk_rate > 0 and not is_stopword(tok) and unk_rng.random() < unk_rate:
            feats = feats.copy()
            feats[:dim] = unk_vector
        return feats

    # attention: one row per (context turn with required entities, history turn)
    attn_rows: list[tuple[np.ndarray, int]] = []
    for conv in corpus:
        conv_labels = by_conv[conv.id]
        for i, (turn, tl) in enumerate(zip(conv.turns, conv_labels.turns)):
            if i == 0 or not tl.required_entities:
                continue
            items = history_for(conv, i)
            for item in items:
                rep = represent(item, bundle.embeddings)
                label = 1 if _required_terms_in(item, tl.required_entities) else 0
                attn_rows.append((rep.vector, label))
    report.n_attention_rows = len(attn_rows)
    attn_cfg = attention_config or replace(
        config.train, learning_rate=0.2, max_epochs=20, batch_size=64, dropout_rate=0.0
    )
    if attn_rows:
        bundle.scorer = train_attention(attn_rows, dim, attn_cfg, bundle.scorer)

    # term classifier rows
    tc_rows: list[tuple[np.ndarray, int]] = []
    for conv in corpus:
        conv_labels = by_conv[conv.id]
        passage_tokens = set(conv.passage.token_strings)
        chain = entity_chain(
            [t.question for t in conv.turns],
            [t.gold_answers[0].text if t.gold_answers else "" for t in conv.turns],
        )
        for i, (turn, tl) in enumerate(zip(conv.turns, conv_labels.turns)):
            effective_tokens = chain[i].all_entity_tokens()
            bit_terms: set[str] = set()
            for term in tl.required_entities:
                bit_terms.update(term.split(" "))
            own_qents = set()
            for term in chain[i].effective.question_entities:
                own_qents.update(term.split(" "))
            bit_terms |= own_qents

            # the question's own tokens (recency/attention pinned at 1)
            q_tokens = token_strings(turn.question)
            for tok, bit in zip(q_tokens, tl.token_bits):
                tc_rows.append(
                    (tc_features(tok, effective_tokens, passage_tokens, 1.0, 1.0), bit)
                )

            if i == 0:
                continue
            items = history_for(conv, i)
            sets = history_entity_sets_with_answers(items)
            retained, pruned_list = prune(list(zip(items, sets)), chain[i])
            weights: dict[str, float] = {}
            if retained:
                reps = [represent(item, bundle.embeddings) for item, _, _ in retained]
                ranked = rerank(reps, bundle.scorer)
                weights = {k.turn_id: k.weight for k in ranked.kept}
            positions = {item.turn_id: p for p, item in enumerate(items)}
            for item, _, _ in retained:
                rec = recency_of(positions[item.turn_id], len(items))
                attn = weights.get(item.turn_id, 0.0)
                for tok in token_strings(item.question) + token_strings(item.answer_text):
                    feats = tc_features(tok, effective_tokens, passage_tokens, rec, attn)
                    tc_rows.append((feats, 1 if tok in bit_terms else 0))
            for pruned_turn in pruned_list:
                item = items[positions[pruned_turn.turn_id]]
                rec = recency_of(positions[item.turn_id], len(items))
                for tok in token_strings(item.question) + token_strings(item.answer_text):
                    feats = tc_features(tok, effective_tokens, passage_tokens, rec, 0.0)
                    tc_rows.append((feats, 1 if tok in bit_terms else 0))
    report.n_termclass_rows = len(tc_rows)
    tc_cfg = termclass_config or replace(
        config.train, learning_rate=0.05, max_epochs=6, batch_size=256
    )
    if tc_rows:
        from .termclass import N_EXTRA_FEATURES

        result_model = train_termclass(tc_rows, dim + N_EXTRA_FEATURES, tc_cfg)
        bundle.termclass = result_model

    report.wall_clock = time.time() - start
    return bundle, report
