"""Conversation data model plus QuAC/CANARD-style ingestion.

A corpus is a list of immutable Conversations. Loaders validate answer
offsets against the passage text and fail with the offending
conversation/turn named, so bad data never reaches the pipeline.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .text import Token, tokenize


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


class DialogFeature(str, Enum):
    FIRST_QUESTION = "first_question"
    DRILL_DOWN = "drill_down"
    TOPIC_SHIFT = "topic_shift"
    TOPIC_RETURN = "topic_return"
    CLARIFICATION = "clarification"


@dataclass(frozen=True)
class Passage:
    id: str
    title: str
    text: str
    tokens: tuple[Token, ...] = field(default=(), compare=False)

    @staticmethod
    def build(id: str, title: str, text: str) -> "Passage":
        return Passage(id=id, title=title, text=text, tokens=tuple(tokenize(text)))

    @property
    def token_strings(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass(frozen=True)
class AnswerSpan:
    """Inclusive token span [start, end] into a passage, plus its text."""

    text: str
    start: int
    end: int

    def validate(self, passage: Passage, where: str) -> None:
        if not (0 <= self.start <= self.end < len(passage.tokens)):
            raise CorpusError(
                f"{where}: answer span [{self.start}, {self.end}] outside "
                f"passage of {len(passage.tokens)} tokens"
            )
        span_tokens = [t.text for t in passage.tokens[self.start : self.end + 1]]
        own_tokens = [t.text for t in tokenize(self.text)]
        if span_tokens != own_tokens:
            raise CorpusError(
                f"{where}: answer text {self.text!r} does not match passage "
                f"tokens {' '.join(span_tokens)!r}"
            )


@dataclass(frozen=True)
class Turn:
    id: str
    question: str
    gold_answers: tuple[AnswerSpan, ...]
    feature: DialogFeature | None = None
    planted_required_entities: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Conversation:
    id: str
    passage: Passage
    turns: tuple[Turn, ...]
    topic: str | None = None

    def validate(self) -> None:
        if not self.turns:
            raise CorpusError(f"conversation {self.id}: no turns")
        seen: set[str] = set()
        for turn in self.turns:
            if turn.id in seen:
                raise CorpusError(f"conversation {self.id}: duplicate turn id {turn.id}")
            seen.add(turn.id)
            for span in turn.gold_answers:
                span.validate(self.passage, f"conversation {self.id} turn {turn.id}")


@dataclass(frozen=True)
class HistoryItem:
    """One prior turn as the pipeline sees it: question plus the answer
    text that was given for it (gold when evaluating, predicted when
    serving live sessions)."""

    turn_id: str
    question: str
    answer_text: str


def history_for(conversation: Conversation, turn_index: int) -> list[HistoryItem]:
    """Gold-answer history items for the turns before `turn_index`."""
    items = []
    for turn in conversation.turns[:turn_index]:
        answer = turn.gold_answers[0].text if turn.gold_answers else ""
        items.append(HistoryItem(turn.id, turn.question, answer))
    return items


def char_range_to_token_span(passage: Passage, start_char: int, text: str) -> AnswerSpan:
    """Map a (character offset, answer text) pair onto token indices."""
    end_char = start_char + len(text)
    indices = [
        i
        for i, tok in enumerate(passage.tokens)
        if tok.start < end_char and tok.end > start_char
    ]
    if not indices:
        raise CorpusError(f"no passage tokens covered by offset {start_char}")
    return AnswerSpan(text=text, start=indices[0], end=indices[-1])


# --------------------------------------------------------------------------
# QuAC-style JSON
# --------------------------------------------------------------------------

def _parse_quac_conversation(entry: dict) -> Conversation:
    conv_id = entry.get("id", "<missing id>")
    try:
        passage = Passage.build(conv_id, entry.get("title", ""), entry["context"])
    except KeyError as exc:
        raise CorpusError(f"conversation {conv_id}: missing field {exc}") from exc

    turns = []
    for qa in entry.get("qas", []):
        turn_id = qa.get("id", "<missing id>")
        where = f"conversation {conv_id} turn {turn_id}"
        if "question" not in qa:
            raise CorpusError(f"{where}: missing question")
        answers = []
        for ans in qa.get("answers", []):
            text = ans.get("text")
            start = ans.get("answer_start")
            if text is None or start is None:
                raise CorpusError(f"{where}: answer missing text/answer_start")
            if not (0 <= start <= len(passage.text)):
                raise CorpusError(f"{where}: answer_start {start} out of range")
            if passage.text[start : start + len(text)] != text:
                raise CorpusError(
                    f"{where}: answer text does not match context at offset {start}"
                )
            span = char_range_to_token_span(passage, start, text)
            span.validate(passage, where)
            answers.append(span)
        feature = None
        if "feature" in qa:
            try:
                feature = DialogFeature(qa["feature"])
            except ValueError as exc:
                raise CorpusError(f"{where}: unknown feature {qa['feature']!r}") from exc
        planted = qa.get("planted_required_entities")
        turns.append(
            Turn(
                id=turn_id,
                question=qa["question"],
                gold_answers=tuple(answers),
                feature=feature,
                planted_required_entities=tuple(planted) if planted is not None else None,
            )
        )
    conversation = Conversation(
        id=conv_id,
        passage=passage,
        turns=tuple(turns),
        topic=entry.get("topic"),
    )
    conversation.validate()
    return conversation


def parse_quac(payload: dict) -> list[Conversation]:
    if not isinstance(payload, dict) or "data" not in payload:
        raise CorpusError("expected top-level object with a 'data' list")
    return [_parse_quac_conversation(entry) for entry in payload["data"]]


def load_quac(path: str | Path) -> list[Conversation]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    return parse_quac(payload)


def conversation_to_dict(conversation: Conversation) -> dict:
    qas = []
    for turn in conversation.turns:
        qa: dict = {
            "id": turn.id,
            "question": turn.question,
            "answers": [
                {
                    "text": span.text,
                    "answer_start": conversation.passage.tokens[span.start].start,
                }
                for span in turn.gold_answers
            ],
        }
        if turn.feature is not None:
            qa["feature"] = turn.feature.value
        if turn.planted_required_entities is not None:
            qa["planted_required_entities"] = list(turn.planted_required_entities)
        qas.append(qa)
    entry = {
        "id": conversation.id,
        "title": conversation.passage.title,
        "context": conversation.passage.text,
        "qas": qas,
    }
    if conversation.topic is not None:
        entry["topic"] = conversation.topic
    return entry


def save_quac(conversations: list[Conversation], path: str | Path) -> None:
    payload = {"data": [conversation_to_dict(c) for c in conversations]}
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


# --------------------------------------------------------------------------
# CANARD-style JSON
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RewriteRecord:
    question: str
    history: tuple[str, ...]
    rewrite: str


def load_canard(path: str | Path) -> list[RewriteRecord]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise CorpusError("expected a top-level list of records")
    records = []
    for i, entry in enumerate(payload):
        for key in ("History", "Question", "Rewrite"):
            if key not in entry:
                raise CorpusError(f"record {i}: missing field {key!r}")
        records.append(
            RewriteRecord(
                question=entry["Question"],
                history=tuple(entry["History"]),
                rewrite=entry["Rewrite"],
            )
        )
    return records


# --------------------------------------------------------------------------
# Corpus statistics
# --------------------------------------------------------------------------

def idf_table(conversations: list[Conversation]) -> dict[str, float]:
    """idf(t) = ln(1 + N / df(t)) over passage vocabulary."""
    n = len(conversations)
    df: Counter[str] = Counter()
    for conv in conversations:
        df.update(set(conv.passage.token_strings))
    return {term: math.log(1.0 + n / count) for term, count in df.items()}
