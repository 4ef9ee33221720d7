"""Experiment harnesses: ablation over pipeline variants, negative-sample
injection sweeps, and pruning-degradation studies.

All runs are deterministic given (corpus, config, seed); records carry a
corpus fingerprint and a config snapshot so reports are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field

from .corpus import Conversation, HistoryItem, conversation_to_dict, history_for
from .entities import entity_chain
from .metrics import EvalReport, evaluate, token_f1
from .pipeline import (
    ModelBundle,
    PipelineConfig,
    PipelineError,
    PipelineOutcome,
    answer_question,
    history_entity_sets_with_answers,
)
from .selection import prune
from .text import token_strings


class ExperimentError(ValueError):
    pass


def corpus_fingerprint(corpus: list[Conversation]) -> str:
    payload = json.dumps([conversation_to_dict(c) for c in corpus], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def split_corpus(
    corpus: list[Conversation], seed: int, eval_fraction: float = 0.2
) -> tuple[list[Conversation], list[Conversation]]:
    """Deterministic train/eval split by conversation."""
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    n_eval = int(round(len(corpus) * eval_fraction))
    eval_ids = set(order[:n_eval])
    train = [c for i, c in enumerate(corpus) if i not in eval_ids]
    evals = [c for i, c in enumerate(corpus) if i in eval_ids]
    return train, evals


@dataclass(frozen=True)
class EvalItem:
    """One question to answer: a conversation turn plus the history the
    pipeline should see (gold history, possibly with injected turns)."""

    conversation: Conversation
    turn_index: int
    history: tuple[HistoryItem, ...]

    @property
    def turn_id(self) -> str:
        return self.conversation.turns[self.turn_index].id


def eval_items_for(corpus: list[Conversation]) -> list[EvalItem]:
    items = []
    for conv in corpus:
        for i in range(len(conv.turns)):
            items.append(
                EvalItem(
                    conversation=conv,
                    turn_index=i,
                    history=tuple(history_for(conv, i)),
                )
            )
    return items


def run_items(
    items: list[EvalItem],
    models: ModelBundle,
    config: PipelineConfig,
    prune_overrides: dict[str, dict[str, bool]] | None = None,
) -> tuple[dict[str, str], dict[str, PipelineOutcome]]:
    """Answer every item; a pipeline error on one turn scores an empty
    prediction rather than aborting the run."""
    predictions: dict[str, str] = {}
    outcomes: dict[str, PipelineOutcome] = {}
    for item in items:
        override = prune_overrides.get(item.turn_id) if prune_overrides else None
        try:
            outcome = answer_question(
                item.conversation.passage,
                list(item.history),
                item.conversation.turns[item.turn_index].question,
                models,
                config,
                prune_override=override,
            )
            predictions[item.turn_id] = outcome.prediction.text
            outcomes[item.turn_id] = outcome
        except PipelineError:
            predictions[item.turn_id] = ""
    return predictions, outcomes


@dataclass
class ExperimentRecord:
    name: str
    config: PipelineConfig
    report: EvalReport
    fingerprint: str
    wall_clock: float
    traces: dict[str, dict] = field(default_factory=dict)

    def to_json(self, include_traces: bool = False) -> dict:
        payload = {
            "name": self.name,
            "variant": self.config.variant,
            "seed": self.config.seed,
            "fingerprint": self.fingerprint,
            "report": self.report.to_json(),
        }
        if include_traces:
            payload["traces"] = self.traces
        return payload


def evaluate_variant(
    name: str,
    items: list[EvalItem],
    eval_corpus: list[Conversation],
    models: ModelBundle,
    config: PipelineConfig,
    keep_traces: bool = False,
) -> ExperimentRecord:
    start = time.time()
    predictions, outcomes = run_items(items, models, config)
    report = evaluate(predictions, eval_corpus)
    return ExperimentRecord(
        name=name,
        config=config,
        report=report,
        fingerprint=corpus_fingerprint(eval_corpus),
        wall_clock=time.time() - start,
        traces={tid: o.trace_json() for tid, o in outcomes.items()} if keep_traces else {},
    )


def run_ablation(
    eval_corpus: list[Conversation],
    models: ModelBundle,
    base_config: PipelineConfig,
    variants: list[str] | None = None,
    keep_traces: bool = False,
) -> list[ExperimentRecord]:
    """One record per variant over a shared eval corpus and model set."""
    names = variants or ["full", "no_prune", "no_rerank", "no_termclass", "pipeline_qr"]
    from .pipeline import VARIANTS

    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        raise ExperimentError(
            f"unknown variant(s) {', '.join(unknown)}; valid: {', '.join(VARIANTS)}"
        )
    items = eval_items_for(eval_corpus)
    return [
        evaluate_variant(
            variant, items, eval_corpus, models, base_config.with_variant(variant),
            keep_traces=keep_traces,
        )
        for variant in names
    ]


# --------------------------------------------------------------------------
# Negative-sample injection
# --------------------------------------------------------------------------

def _same_topic(a: Conversation, b: Conversation) -> bool:
    if a.topic is not None and b.topic is not None:
        return a.topic == b.topic
    a_title = set(token_strings(a.passage.title))
    b_title = set(token_strings(b.passage.title))
    return bool(a_title & b_title)


def inject_negatives(
    eval_corpus: list[Conversation],
    k: int,
    pool: list[Conversation],
    seed: int,
) -> list[EvalItem]:
    """Insert k same-topic/different-passage turns into each question's
    history at seeded random positions. k=0 is the identity."""
    if k < 0:
        raise ExperimentError("k must be >= 0")
    items = eval_items_for(eval_corpus)
    if k == 0:
        return items
    rng = random.Random(seed)
    perturbed = []
    for item in items:
        conv = item.conversation
        candidates = [p for p in pool if p.id != conv.id and _same_topic(conv, p)]
        if len(candidates) < 1:
            raise ExperimentError(
                f"pool has no same-topic conversations for {conv.id}"
            )
        history = list(item.history)
        for _ in range(k):
            source = rng.choice(candidates)
            src_turn = rng.choice(source.turns)
            negative = HistoryItem(
                turn_id=f"neg_{source.id}_{src_turn.id}",
                question=src_turn.question,
                answer_text=src_turn.gold_answers[0].text if src_turn.gold_answers else "",
            )
            position = rng.randint(0, len(history))
            history.insert(position, negative)
        perturbed.append(
            EvalItem(
                conversation=conv, turn_index=item.turn_index, history=tuple(history)
            )
        )
    return perturbed


def _mean_reports(reports: list[EvalReport]) -> EvalReport:
    n = len(reports)
    features = {f for r in reports for f in r.per_feature}
    return EvalReport(
        f1=sum(r.f1 for r in reports) / n,
        heq_q=sum(r.heq_q for r in reports) / n,
        heq_d=sum(r.heq_d for r in reports) / n,
        per_feature={
            f: sum(r.per_feature.get(f, 0.0) for r in reports) / n for f in features
        },
        n_questions=reports[0].n_questions,
        n_dialogs=reports[0].n_dialogs,
    )


def negative_sweep(
    eval_corpus: list[Conversation],
    pool: list[Conversation],
    models: ModelBundle,
    config: PipelineConfig,
    ks: list[int],
    seed: int,
    n_seeds: int = 3,
) -> list[tuple[int, ExperimentRecord]]:
    """F1 per injection level, averaged over seeded injection draws.

    Within one draw the histories are nested across k (same stream), so
    the trend reflects added noise rather than resampled noise.
    """
    records = []
    for k in ks:
        start = time.time()
        reports = []
        for replicate in range(n_seeds):
            items = inject_negatives(eval_corpus, k, pool, seed + 1000 * replicate)
            predictions, _ = run_items(items, models, config)
            reports.append(evaluate(predictions, eval_corpus))
        records.append(
            (
                k,
                ExperimentRecord(
                    name=f"plus_{k}_negatives",
                    config=config,
                    report=_mean_reports(reports),
                    fingerprint=corpus_fingerprint(eval_corpus),
                    wall_clock=time.time() - start,
                ),
            )
        )
    return records


# --------------------------------------------------------------------------
# Pruning degradation
# --------------------------------------------------------------------------

def oracle_prune_decisions(
    eval_corpus: list[Conversation], config: PipelineConfig
) -> dict[str, dict[str, bool]]:
    """Rule-based keep/prune decision for every (question, history turn)."""
    decisions: dict[str, dict[str, bool]] = {}
    for conv in eval_corpus:
        chain = entity_chain(
            [t.question for t in conv.turns],
            [t.gold_answers[0].text if t.gold_answers else "" for t in conv.turns],
        )
        for i, turn in enumerate(conv.turns):
            if i == 0:
                continue
            items = history_for(conv, i)
            sets = history_entity_sets_with_answers(items)
            retained, pruned = prune(list(zip(items, sets)), chain[i], config.prune)
            per_turn = {item.turn_id: True for item, _, _ in retained}
            per_turn.update({p.turn_id: False for p in pruned})
            decisions[turn.id] = per_turn
    return decisions


def degrade_pruning(
    decisions: dict[str, dict[str, bool]],
    target_accuracy: float,
    seed: int,
) -> dict[str, dict[str, bool]]:
    """Flip a seeded subset of decisions so agreement with the oracle
    lands on the target percentage; 100 is the identity."""
    if not 0 < target_accuracy <= 100:
        raise ExperimentError("target_accuracy must lie in (0, 100]")
    flat = [
        (turn_id, history_id)
        for turn_id, per_turn in sorted(decisions.items())
        for history_id in sorted(per_turn)
    ]
    n_flips = int(round(len(flat) * (1.0 - target_accuracy / 100.0)))
    rng = random.Random(seed)
    to_flip = set(rng.sample(range(len(flat)), n_flips)) if n_flips else set()
    degraded: dict[str, dict[str, bool]] = {}
    for idx, (turn_id, history_id) in enumerate(flat):
        value = decisions[turn_id][history_id]
        degraded.setdefault(turn_id, {})[history_id] = (
            (not value) if idx in to_flip else value
        )
    return degraded


def decision_agreement(
    oracle: dict[str, dict[str, bool]], other: dict[str, dict[str, bool]]
) -> float:
    total = agree = 0
    for turn_id, per_turn in oracle.items():
        for history_id, value in per_turn.items():
            total += 1
            agree += other[turn_id][history_id] == value
    return 100.0 * agree / total if total else 100.0


def _planted_bit_terms(conv: Conversation, turn_index: int) -> set[str]:
    turn = conv.turns[turn_index]
    chain = entity_chain([t.question for t in conv.turns])
    terms: set[str] = set()
    for term in turn.planted_required_entities or ():
        terms.update(term.split(" "))
    for term in chain[turn_index].effective.question_entities:
        terms.update(term.split(" "))
    return terms


def termclass_token_f1(
    items: list[EvalItem],
    outcomes: dict[str, PipelineOutcome],
) -> float:
    """Micro token F1 of emitted highlight bits against planted
    relevance over the classified history tokens."""
    tp = fp = fn = 0
    for item in items:
        outcome = outcomes.get(item.turn_id)
        gold_terms = _planted_bit_terms(item.conversation, item.turn_index)
        gold_positive: set[tuple[str, str]] = set()
        for hist in item.history:
            for tok in token_strings(hist.question) + token_strings(hist.answer_text):
                if tok in gold_terms:
                    gold_positive.add((hist.turn_id, tok))
        predicted_positive: set[tuple[str, str]] = set()
        if outcome is not None:
            for turn_id, labels in outcome.token_labels.items():
                if turn_id == "current":
                    continue
                for entry in labels:
                    if entry["bit"] == 1:
                        predicted_positive.add((turn_id, entry["token"]))
        tp += len(gold_positive & predicted_positive)
        fp += len(predicted_positive - gold_positive)
        fn += len(gold_positive - predicted_positive)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 100.0 * 2 * precision * recall / (precision + recall)


@dataclass
class DegradationPoint:
    target: float
    measured_agreement: float
    termclass_f1: float
    answer_f1: float


def degradation_sweep(
    eval_corpus: list[Conversation],
    models: ModelBundle,
    config: PipelineConfig,
    targets: list[float],
    seed: int,
) -> list[DegradationPoint]:
    oracle = oracle_prune_decisions(eval_corpus, config)
    items = eval_items_for(eval_corpus)
    points = []
    for target in targets:
        degraded = degrade_pruning(oracle, target, seed + int(target))
        predictions, outcomes = run_items(items, models, config, prune_overrides=degraded)
        report = evaluate(predictions, eval_corpus)
        points.append(
            DegradationPoint(
                target=target,
                measured_agreement=decision_agreement(oracle, degraded),
                termclass_f1=termclass_token_f1(items, outcomes),
                answer_f1=report.f1,
            )
        )
    return points
