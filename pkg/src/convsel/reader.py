"""Answer-span prediction over (passage, augmented question, selected
history, highlights).

The reader is a deterministic lexical window scorer: the query is a
weighted term bag, candidate spans are windows anchored on matched term
occurrences, and the best window wins by (score, earliest start,
shortest). It replaces a neural reader behind an explicit interface;
the rewrite-then-answer composition uses the same scorer with empty
history, mirroring a two-stage rewrite pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import HistoryItem, Passage
from .entities import AugmentedQuestion, EntitySet
from .text import (
    TRIGGER_PRONOUNS,
    content_tokens,
    is_stopword,
    token_strings,
    tokenize,
)


class ReaderError(ValueError):
    pass


@dataclass(frozen=True)
class ReaderConfig:
    max_answer_length: int = 40
    max_question_length: int = 64
    highlight_boost: float = 2.0
    window_scoring: str = "sum"  # or "idf_weighted"

    def __post_init__(self) -> None:
        if self.max_answer_length <= 0 or self.max_question_length <= 0:
            raise ReaderError("length limits must be positive")
        if self.highlight_boost < 1.0:
            raise ReaderError("highlight_boost must be >= 1")
        if self.window_scoring not in ("sum", "idf_weighted"):
            raise ReaderError(f"unknown window_scoring {self.window_scoring!r}")


@dataclass(frozen=True)
class SpanPrediction:
    text: str
    start: int
    end: int
    score: float
    trace: tuple[tuple[str, float], ...] = ()

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "start_token": self.start,
            "end_token": self.end,
            "score": self.score,
            "trace": [{"term": t, "weight": w} for t, w in self.trace],
        }


@dataclass(frozen=True)
class ReaderInput:
    passage: Passage
    question: AugmentedQuestion
    selected_history: tuple[tuple[HistoryItem, float], ...] = ()
    highlighted_terms: tuple[str, ...] = ()
    config: ReaderConfig = ReaderConfig()
    idf: dict[str, float] | None = None


def _occurrences(passage: Passage, term: str) -> list[tuple[int, int]]:
    toks = passage.token_strings
    parts = term.split(" ")
    n = len(parts)
    return [
        (i, i + n - 1)
        for i in range(len(toks) - n + 1)
        if toks[i : i + n] == parts
    ]


def score_windows(
    passage: Passage,
    weighted_terms: dict[str, float],
    max_answer_length: int,
) -> SpanPrediction:
    """Best passage window under the weighted-overlap objective.

    A window scores the summed weight of the distinct query terms whose
    occurrence lies fully inside it; candidates are anchored on matched
    occurrences (leading/trailing unmatched tokens never help, so the
    maximizer always has this form). Ties break by earliest start, then
    shortest span. A query that matches nothing falls back to the first
    token with score 0.
    """
    if not passage.tokens:
        raise ReaderError("empty passage")
    if not weighted_terms:
        raise ReaderError("empty query bag: question is unanswerable as posed")

    occ_by_term: dict[str, list[tuple[int, int]]] = {}
    for term in weighted_terms:
        occs = _occurrences(passage, term)
        if occs:
            occ_by_term[term] = occs

    if not occ_by_term:
        tok = passage.tokens[0]
        return SpanPrediction(
            text=passage.text[tok.start : tok.end], start=0, end=0, score=0.0
        )

    starts = sorted({s for occs in occ_by_term.values() for s, _ in occs})
    ends = sorted({e for occs in occ_by_term.values() for _, e in occs})

    best: tuple[float, int, int] | None = None  # (-score, start, end)
    for s in starts:
        for e in ends:
            if e < s or e - s + 1 > max_answer_length:
                continue
            score = sum(
                weighted_terms[term]
                for term, occs in occ_by_term.items()
                if any(s <= a and b <= e for a, b in occs)
            )
            key = (-score, s, e)
            if best is None or key < best:
                best = key

    assert best is not None
    score, s, e = -best[0], best[1], best[2]
    matched: list[tuple[str, float]] = []
    seen: set[str] = set()
    for term, occs in sorted(
        occ_by_term.items(), key=lambda kv: min(a for a, _ in kv[1])
    ):
        if term not in seen and any(s <= a and b <= e for a, b in occs):
            matched.append((term, weighted_terms[term]))
            seen.add(term)
    text = passage.text[passage.tokens[s].start : passage.tokens[e].end]
    return SpanPrediction(text=text, start=s, end=e, score=score, trace=tuple(matched))


def build_query_bag(input: ReaderInput) -> dict[str, float]:
    """Weighted term bag: question content tokens and effective entities
    at 1.0, highlighted history terms at the boost weight (max wins when
    routes collide), all scaled by idf in idf_weighted mode."""
    cfg = input.config
    q_tokens = token_strings(input.question.text)[: cfg.max_question_length]
    bag: dict[str, float] = {}
    for tok in q_tokens:
        if tok not in bag and not is_stopword(tok):
            bag[tok] = 1.0
    for term in input.question.effective_terms():
        bag[term] = max(bag.get(term, 0.0), 1.0)
    for term in input.highlighted_terms:
        bag[term] = max(bag.get(term, 0.0), cfg.highlight_boost)
    if cfg.window_scoring == "idf_weighted" and input.idf:
        default = max(input.idf.values()) if input.idf else 1.0
        bag = {t: w * input.idf.get(t, default) for t, w in bag.items()}
    return bag


def predict_span(input: ReaderInput) -> SpanPrediction:
    bag = build_query_bag(input)
    return score_windows(input.passage, bag, input.config.max_answer_length)


# --------------------------------------------------------------------------
# Rewrite-then-answer composition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RewriteResult:
    text: str
    substituted: tuple[str, ...] = ()
    warning: str | None = None


def template_rewrite(question: str, history_entities: list[EntitySet]) -> RewriteResult:
    """Make an incomplete question self-contained: the first trigger
    pronoun becomes the most recent inherited entity phrase and the other
    inherited entities trail in an "about ..." clause. Self-contained
    questions come back unchanged."""
    inherited: list[str] = []
    if history_entities:
        last = history_entities[-1]
        inherited = list(last.context_entities) + list(last.question_entities)
        inherited = list(dict.fromkeys(inherited))

    tokens = tokenize(question)
    has_pronoun = any(t.text in TRIGGER_PRONOUNS for t in tokens)
    own_content = content_tokens(question)
    if not has_pronoun and own_content:
        return RewriteResult(text=question)
    if not inherited:
        if has_pronoun or not own_content:
            return RewriteResult(
                text=question, warning="nothing to substitute: no inherited entities"
            )
        return RewriteResult(text=question)

    substitute = inherited[-1]
    used = [substitute]
    if has_pronoun:
        first = next(t for t in tokens if t.text in TRIGGER_PRONOUNS)
        rewritten = question[: first.start] + "the " + substitute + question[first.end :]
    else:
        rewritten = question
    unused = [e for e in inherited if e not in used]
    if unused:
        rewritten = rewritten.rstrip()
        tail = rewritten[-1] if rewritten else ""
        core = rewritten[:-1] if tail in "?.!" else rewritten
        rewritten = core + " about " + " and ".join("the " + e for e in unused) + (
            tail if tail in "?.!" else ""
        )
    return RewriteResult(text=rewritten, substituted=tuple(used))


def compose_pipeline(
    rewriter,
    question: str,
    history_entities: list[EntitySet],
    passage: Passage,
    config: ReaderConfig = ReaderConfig(),
    idf: dict[str, float] | None = None,
) -> SpanPrediction:
    """Rewrite-then-answer contract: the rewriter output goes to the
    reader with EMPTY history and no highlights, exactly as a two-stage
    pipeline would hand a self-contained question to a plain QA model."""
    if rewriter is None:
        raise ReaderError("compose_pipeline requires a rewriter handle")
    result = rewriter(question, history_entities)
    if isinstance(result, str):
        result = RewriteResult(text=result)
    from .entities import extract_entities

    own = extract_entities(result.text)
    aug = AugmentedQuestion(
        text=result.text,
        original_tokens=tuple(token_strings(result.text)),
        inherited_entities=(),
        effective=EntitySet(question_entities=own.question_entities),
    )
    return predict_span(
        ReaderInput(passage=passage, question=aug, config=config, idf=idf)
    )
