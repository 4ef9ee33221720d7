"""QuAC-style evaluation: token-level F1, human-equivalence scores, and
per-dialog-feature breakdowns.

F1 uses the corpus tokenizer (lowercase, punctuation dropped, stopwords
kept) with multiset overlap and a max over references. The human
reference F1 is leave-one-out against the other references, defaulting
to 1.0 when only one reference (or synthetic data) is available.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Conversation, DialogFeature
from .entities import EntitySet, entity_chain
from .text import TRIGGER_PRONOUNS, content_tokens, token_strings


class MetricsError(ValueError):
    pass


def token_f1(prediction: str, golds: list[str]) -> float:
    """Max over references of the harmonic mean of token precision and
    recall (multiset overlap). Both-empty counts as a full match."""
    if not golds:
        raise MetricsError("token_f1 needs at least one reference answer")
    pred_tokens = token_strings(prediction)
    best = 0.0
    for gold in golds:
        gold_tokens = token_strings(gold)
        if not pred_tokens and not gold_tokens:
            best = max(best, 1.0)
            continue
        common = Counter(pred_tokens) & Counter(gold_tokens)
        overlap = sum(common.values())
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def human_reference_f1(golds: list[str]) -> float:
    """Leave-one-out reference agreement; 1.0 with a single reference."""
    if len(golds) <= 1:
        return 1.0
    scores = []
    for i, gold in enumerate(golds):
        others = golds[:i] + golds[i + 1 :]
        scores.append(token_f1(gold, others))
    return max(scores)


def heq_q(per_question: list[tuple[float, float]]) -> float:
    """Percent of questions where the model F1 meets the human F1."""
    if not per_question:
        raise MetricsError("heq_q needs at least one question")
    passing = sum(1 for model, human in per_question if model >= human)
    return 100.0 * passing / len(per_question)


def heq_d(per_dialog: list[list[tuple[float, float]]]) -> float:
    """Percent of dialogs where EVERY question meets the human F1."""
    if not per_dialog:
        raise MetricsError("heq_d needs at least one dialog")
    if any(not dialog for dialog in per_dialog):
        raise MetricsError("heq_d dialogs must be non-empty")
    passing = sum(
        1
        for dialog in per_dialog
        if all(model >= human for model, human in dialog)
    )
    return 100.0 * passing / len(per_dialog)


# --------------------------------------------------------------------------
# Dialog feature tagging
# --------------------------------------------------------------------------

def _is_clarification_request(question: str) -> bool:
    tokens = token_strings(question)
    if not tokens:
        return True
    stripped = " ".join(tokens)
    if stripped.startswith("what else") or stripped == "why":
        return True
    content = content_tokens(question)
    if not content:
        return True
    return all(t in TRIGGER_PRONOUNS for t in content)


def tag_features(conversation: Conversation) -> list[DialogFeature]:
    """Heuristic per-turn dialog features from entity overlap; an explicit
    corpus feature field always wins."""
    chain = entity_chain([t.question for t in conversation.turns])
    token_sets = [aug.effective_tokens() for aug in chain]
    tags: list[DialogFeature] = []
    for i, turn in enumerate(conversation.turns):
        if turn.feature is not None:
            tags.append(turn.feature)
            continue
        if i == 0:
            tags.append(DialogFeature.FIRST_QUESTION)
            continue
        if _is_clarification_request(turn.question):
            tags.append(DialogFeature.CLARIFICATION)
            continue
        own = token_sets[i]
        if own & token_sets[i - 1]:
            tags.append(DialogFeature.DRILL_DOWN)
        elif any(own & token_sets[j] for j in range(i - 1)):
            tags.append(DialogFeature.TOPIC_RETURN)
        else:
            tags.append(DialogFeature.TOPIC_SHIFT)
    return tags


# --------------------------------------------------------------------------
# Report aggregation
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    f1: float
    heq_q: float
    heq_d: float
    per_feature: dict[DialogFeature, float] = field(default_factory=dict)
    n_questions: int = 0
    n_dialogs: int = 0
    per_feature_metric: str = "mean_token_f1"

    def to_json(self) -> dict:
        return {
            "f1": self.f1,
            "heq_q": self.heq_q,
            "heq_d": self.heq_d,
            "per_feature": {f.value: v for f, v in sorted(self.per_feature.items(), key=lambda kv: kv[0].value)},
            "per_feature_metric": self.per_feature_metric,
            "n_questions": self.n_questions,
            "n_dialogs": self.n_dialogs,
        }

    def csv_row(self) -> dict:
        return {
            "f1": f"{self.f1:.2f}",
            "heq_q": f"{self.heq_q:.2f}",
            "heq_d": f"{self.heq_d:.2f}",
            "clarification": f"{self.per_feature.get(DialogFeature.CLARIFICATION, float('nan')):.2f}",
            "topic_shift": f"{self.per_feature.get(DialogFeature.TOPIC_SHIFT, float('nan')):.2f}",
            "topic_return": f"{self.per_feature.get(DialogFeature.TOPIC_RETURN, float('nan')):.2f}",
            "n_questions": str(self.n_questions),
            "n_dialogs": str(self.n_dialogs),
        }


CSV_COLUMNS = [
    "f1",
    "heq_q",
    "heq_d",
    "clarification",
    "topic_shift",
    "topic_return",
    "n_questions",
    "n_dialogs",
]


def report_csv(rows: list[tuple[str, EvalReport]]) -> str:
    """One CSV row per configuration, spec column order, config name first."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["config"] + CSV_COLUMNS)
    writer.writeheader()
    for name, report in rows:
        writer.writerow({"config": name, **report.csv_row()})
    return buf.getvalue()


def evaluate(
    predictions: dict[str, str],
    conversations: list[Conversation],
    human_f1: dict[str, float] | None = None,
) -> EvalReport:
    """Aggregate token F1, HEQ-Q/HEQ-D, and per-feature mean F1.

    `predictions` maps turn id to predicted answer text; every question
    must be covered. Missing human references default to leave-one-out
    (1.0 for single-reference and synthetic data).
    """
    per_question: list[tuple[float, float]] = []
    per_dialog: list[list[tuple[float, float]]] = []
    feature_scores: dict[DialogFeature, list[float]] = {}

    for conv in conversations:
        tags = tag_features(conv)
        dialog_pairs: list[tuple[float, float]] = []
        for turn, tag in zip(conv.turns, tags):
            if turn.id not in predictions:
                raise MetricsError(f"no prediction for turn {turn.id}")
            golds = [g.text for g in turn.gold_answers] or [""]
            model_f1 = token_f1(predictions[turn.id], golds)
            human = (
                human_f1[turn.id]
                if human_f1 is not None and turn.id in human_f1
                else human_reference_f1(golds)
            )
            dialog_pairs.append((model_f1, human))
            per_question.append((model_f1, human))
            feature_scores.setdefault(tag, []).append(model_f1)
        per_dialog.append(dialog_pairs)

    mean_f1 = 100.0 * sum(m for m, _ in per_question) / len(per_question)
    return EvalReport(
        f1=mean_f1,
        heq_q=heq_q(per_question),
        heq_d=heq_d(per_dialog),
        per_feature={
            tag: 100.0 * sum(scores) / len(scores)
            for tag, scores in feature_scores.items()
        },
        n_questions=len(per_question),
        n_dialogs=len(per_dialog),
    )


def save_report(report: EvalReport, path) -> None:
    from pathlib import Path

    Path(path).write_text(json.dumps(report.to_json(), indent=1), encoding="utf-8")
