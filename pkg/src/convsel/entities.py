"""Context/question entity generation, pronoun-driven propagation, and
distant-supervision labeling of which inherited entities a follow-up
question actually needs.

Entity extraction is deterministic stopword-filtered n-gram matching;
it deliberately stands in for a learned generator while keeping the
same interface. The labeler treats the reader as an oracle: an
inherited entity is required exactly when adding it turns a wrong
answer into the gold one (or dropping it from the accepted set breaks
gold retrieval).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from .corpus import Conversation, HistoryItem, Passage
from .text import (
    TRIGGER_PRONOUNS,
    content_ngrams,
    content_tokens,
    contains_phrase,
    token_strings,
    tokenize,
)

# Reader handle used by the labeler: (passage, query terms) -> predicted
# inclusive token span, or None when the query matches nothing.
ReaderHandle = Callable[[Passage, list[str]], "tuple[int, int] | None"]


def _dedup(terms: list[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(terms))


@dataclass(frozen=True)
class EntitySet:
    context_entities: tuple[str, ...] = ()
    question_entities: tuple[str, ...] = ()

    def all_terms(self) -> tuple[str, ...]:
        return _dedup(list(self.context_entities) + list(self.question_entities))

    def tokens(self) -> set[str]:
        out: set[str] = set()
        for term in self.all_terms():
            out.update(term.split(" "))
        return out

    def is_empty(self) -> bool:
        return not (self.context_entities or self.question_entities)


@dataclass(frozen=True)
class AugmentedQuestion:
    text: str
    original_tokens: tuple[str, ...]
    inherited_entities: tuple[str, ...]
    effective: EntitySet
    # Entities carried over from the previous turn's ANSWER when a
    # pronoun forces inheritance. They count as context for pruning and
    # for the term classifier's entity indicator, but they are not part
    # of the question itself, so the reader's base query excludes them;
    # only a highlight can put them into play.
    inherited_answer_entities: tuple[str, ...] = ()

    def effective_terms(self) -> tuple[str, ...]:
        return self.effective.all_terms()

    def effective_tokens(self) -> set[str]:
        return self.effective.tokens()

    def all_entity_tokens(self) -> set[str]:
        out = self.effective.tokens()
        for term in self.inherited_answer_entities:
            out.update(term.split(" "))
        return out


def extract_entities(
    question: str,
    passage: Passage | None = None,
    previous: EntitySet | None = None,
) -> EntitySet:
    """Question entities are the content n-grams of the question; context
    entities are the ones grounded in the passage (or carried over from
    `previous` when a pronoun needs an antecedent)."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    qents = content_ngrams(question)
    passage_tokens = passage.token_strings if passage is not None else []
    context: list[str] = []
    for term in qents:
        grounded = contains_phrase(passage_tokens, term) if passage_tokens else False
        if not grounded and previous is not None:
            grounded = term in previous.all_terms()
        if grounded:
            context.append(term)
    if previous is not None and _needs_antecedent(question, qents):
        context.extend(previous.context_entities)
        context.extend(previous.question_entities)
    return EntitySet(context_entities=_dedup(context), question_entities=tuple(qents))


def _needs_antecedent(question: str, own_extraction: list[str]) -> bool:
    if not own_extraction:
        return True
    return any(t in TRIGGER_PRONOUNS for t in token_strings(question))


def propagate(
    current: str,
    last_effective: EntitySet | None,
    last_answer: str | None = None,
) -> AugmentedQuestion:
    """Carry the previous turn's entities into the current question when
    it is incomplete (empty extraction or an unresolved trigger pronoun);
    self-contained questions inherit nothing. The previous answer's
    content terms ride along as answer-tier context."""
    own = extract_entities(current)
    inherited: tuple[str, ...] = ()
    answer_tier: tuple[str, ...] = ()
    if last_effective is not None and _needs_antecedent(
        current, list(own.question_entities)
    ):
        inherited = _dedup(
            list(last_effective.context_entities)
            + list(last_effective.question_entities)
        )
        if last_answer:
            answer_tier = answer_context_terms(last_answer)
    effective = EntitySet(
        context_entities=_dedup(list(inherited) + list(own.context_entities)),
        question_entities=own.question_entities,
    )
    return AugmentedQuestion(
        text=current,
        original_tokens=tuple(token_strings(current)),
        inherited_entities=inherited,
        effective=effective,
        inherited_answer_entities=answer_tier,
    )


def answer_context_terms(answer_text: str) -> tuple[str, ...]:
    """Content terms an answer contributes to the conversational context."""
    return _dedup(content_ngrams(answer_text))


def entity_chain(
    questions: list[str], answers: list[str] | None = None
) -> list[AugmentedQuestion]:
    """Effective entity sets for each question, propagated in order.
    When answers are supplied, each question may also inherit the
    previous turn's answer-tier terms."""
    chain: list[AugmentedQuestion] = []
    last: EntitySet | None = None
    last_answer: str | None = None
    for i, q in enumerate(questions):
        aug = propagate(q, last, last_answer)
        chain.append(aug)
        last = aug.effective
        last_answer = answers[i] if answers is not None and i < len(answers) else None
    return chain


def history_entity_sets(history: list[HistoryItem]) -> list[EntitySet]:
    """Per-history-turn entity sets as the selection stages consume them."""
    return [
        aug.effective
        for aug in entity_chain(
            [h.question for h in history], [h.answer_text for h in history]
        )
    ]


# --------------------------------------------------------------------------
# Distant supervision
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TurnLabels:
    turn_id: str
    required_entities: tuple[str, ...]
    token_bits: tuple[int, ...]
    unresolvable: bool = False


@dataclass(frozen=True)
class DistantLabels:
    conversation_id: str
    turns: tuple[TurnLabels, ...]

    def to_json(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "turns": [
                {
                    "turn_id": t.turn_id,
                    "required_entities": list(t.required_entities),
                    "token_bits": list(t.token_bits),
                    **({"unresolvable": True} if t.unresolvable else {}),
                }
                for t in self.turns
            ],
        }

    @staticmethod
    def from_json(payload: dict) -> "DistantLabels":
        return DistantLabels(
            conversation_id=payload["conversation_id"],
            turns=tuple(
                TurnLabels(
                    turn_id=t["turn_id"],
                    required_entities=tuple(t["required_entities"]),
                    token_bits=tuple(t["token_bits"]),
                    unresolvable=t.get("unresolvable", False),
                )
                for t in payload["turns"]
            ),
        )


class LabelingError(RuntimeError):
    pass


def _hits_gold(span: "tuple[int, int] | None", golds) -> bool:
    """The labeler counts a prediction as gold when it falls inside some
    gold span: window extents vary with the query, containment does not."""
    if span is None:
        return False
    start, end = span
    return any(g.start <= start and end <= g.end for g in golds)


def _base_query(aug: AugmentedQuestion) -> list[str]:
    """Content tokens of the question plus its own entity phrases."""
    return list(
        dict.fromkeys(
            content_tokens(aug.text) + list(extract_entities(aug.text).question_entities)
        )
    )


def candidate_entities(
    aug: AugmentedQuestion, parent_answer: str | None = None
) -> tuple[str, ...]:
    """Inherited question-derived entities plus the previous answer's
    content terms, in conversation order."""
    candidates = list(aug.inherited_entities) + list(aug.inherited_answer_entities)
    if not aug.inherited_answer_entities and aug.inherited_entities and parent_answer:
        candidates.extend(answer_context_terms(parent_answer))
    own = set(extract_entities(aug.text).question_entities)
    return _dedup([c for c in candidates if c not in own])


def distant_label(conversation: Conversation, reader: ReaderHandle) -> DistantLabels:
    """Label each turn with the inherited entities it needs.

    Turn 1 keeps its own extraction. For follow-ups the candidates are
    tested greedily in conversation order: accept an entity when adding
    it flips the reader from a non-gold to a gold span; afterwards keep
    any remaining candidate whose removal from the full candidate set
    breaks gold retrieval. When no combination reaches gold the turn is
    flagged unresolvable and all candidates are kept.
    """
    labels: list[TurnLabels] = []
    last_effective: EntitySet | None = None
    parent_answer: str | None = None
    passage = conversation.passage

    for index, turn in enumerate(conversation.turns):
        if not turn.gold_answers:
            raise LabelingError(f"turn {turn.id}: no gold answer to supervise against")
        aug = propagate(turn.question, last_effective, parent_answer)
        own_entities = extract_entities(turn.question).question_entities
        base = _base_query(aug)

        def call(terms: list[str]) -> "tuple[int, int] | None":
            try:
                return reader(passage, terms)
            except Exception as exc:  # surface which turn broke the oracle
                raise LabelingError(f"turn {turn.id}: reader failed: {exc}") from exc

        unresolvable = False
        if index == 0:
            required = tuple(own_entities)
        else:
            candidates = candidate_entities(aug, parent_answer)
            accepted: list[str] = []
            for cand in candidates:
                current = base + accepted
                if _hits_gold(call(current), turn.gold_answers):
                    break
                if _hits_gold(call(current + [cand]), turn.gold_answers):
                    accepted.append(cand)
            full = base + list(candidates)
            full_hits = _hits_gold(call(full), turn.gold_answers)
            required_list = list(accepted)
            if full_hits:
                for cand in candidates:
                    if cand in accepted:
                        continue
                    without = [t for t in full if t != cand]
                    if not _hits_gold(call(without), turn.gold_answers):
                        required_list.append(cand)
            if candidates and not required_list:
                resolved = _hits_gold(call(base), turn.gold_answers) or full_hits
                if not resolved:
                    unresolvable = True
                    required_list = list(candidates)
            required = _dedup(required_list)

        bit_vocab = set()
        for term in list(required) + list(own_entities):
            bit_vocab.update(term.split(" "))
        bits = tuple(
            1 if tok.text in bit_vocab else 0 for tok in tokenize(turn.question)
        )
        labels.append(
            TurnLabels(
                turn_id=turn.id,
                required_entities=required,
                token_bits=bits,
                unresolvable=unresolvable,
            )
        )
        last_effective = aug.effective
        parent_answer = turn.gold_answers[0].text if turn.gold_answers else None

    return DistantLabels(conversation_id=conversation.id, turns=tuple(labels))


def save_labels(labels: list[DistantLabels], path) -> None:
    payload = [l.to_json() for l in labels]
    from pathlib import Path

    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_labels(path) -> list[DistantLabels]:
    from pathlib import Path

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [DistantLabels.from_json(entry) for entry in payload]
