"""Tokenization and lexical helpers shared across the engine.

Tokens are lowercase alphanumeric runs with character offsets into the
source text; punctuation never becomes a token but the offsets of the
surviving tokens are exact, so spans can always be mapped back to the
original string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Pronouns that mark a follow-up question as incomplete: seeing one of
# these (or an empty extraction) triggers entity inheritance from the
# previous turn.
TRIGGER_PRONOUNS = frozenset({"it", "he", "she", "they", "this", "that", "their"})

# Fixed function-word list so extraction and feature tagging are
# reproducible. Content words used by the synthetic templates must never
# appear here.
STOPWORDS = frozenset("""
a about above after again against all am an and any are aren as at be
because been before being below between both but by can cannot could
couldn did didn do does doesn doing don down during each else few for
from further had hadn has hasn have haven having he her here hers
herself him himself his how i if in into is isn it its itself just ll
me mightn more most mustn my myself needn no nor not now o of off on
once only or other our ours ourselves out over own re s same shan she
should shouldn so some such t than that the their theirs them
themselves then there these they this those through to too under until
up ve very was wasn we were weren what when where which while who whom
why will with won would wouldn you your yours yourself yourselves
""".split())


@dataclass(frozen=True)
class Token:
    """One lowercase token plus its [start, end) character span."""

    text: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Split text into lowercase word tokens with character offsets."""
    return [
        Token(m.group(0).lower(), m.start(), m.end())
        for m in _TOKEN_RE.finditer(text)
    ]


def token_strings(text: str) -> list[str]:
    return [t.text for t in tokenize(text)]


def is_stopword(token: str) -> bool:
    return token in STOPWORDS


def content_tokens(text: str) -> list[str]:
    """Token strings with stopwords removed (duplicates preserved)."""
    return [t.text for t in tokenize(text) if t.text not in STOPWORDS]


def content_ngrams(text: str, max_n: int = 3) -> list[str]:
    """Candidate entity phrases: n-grams (n <= max_n) over maximal runs
    of adjacent non-stopword tokens, in order of first appearance.

    Unigrams always precede the longer phrases built from them.
    """
    runs: list[list[str]] = []
    current: list[str] = []
    for tok in tokenize(text):
        if tok.text in STOPWORDS:
            if current:
                runs.append(current)
                current = []
        else:
            current.append(tok.text)
    if current:
        runs.append(current)

    seen: dict[str, None] = {}
    for n in range(1, max_n + 1):
        for run in runs:
            for i in range(len(run) - n + 1):
                seen.setdefault(" ".join(run[i : i + n]), None)
    return list(seen)


def has_trigger_pronoun(text: str) -> bool:
    return any(t.text in TRIGGER_PRONOUNS for t in tokenize(text))


def contains_phrase(haystack_tokens: list[str], phrase: str) -> bool:
    """True when the phrase's tokens occur consecutively in the token list."""
    needle = phrase.split(" ")
    n = len(needle)
    if n == 0:
        return False
    if n == 1:
        return needle[0] in haystack_tokens
    return any(
        haystack_tokens[i : i + n] == needle
        for i in range(len(haystack_tokens) - n + 1)
    )
