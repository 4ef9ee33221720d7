"""Deterministic synthetic-conversation generator with planted ground
truth.

Every conversation follows a band-biography schema: a root subject (the
band, with a unique pseudo-name), drill chains that introduce a named
work and then ask an incomplete pronoun follow-up about it, satellite
subjects for topic shifts/returns, and "what else" clarifications. The
passage carries the full sentence inventory for the schema, including a
competitive distractor per drill chain (same term profile as the
follow-up's gold sentence minus the answer name), so that:

- pronoun follow-ups are answerable only when the parent answer's name
  is added (that name is the planted required entity),
- topic shifts/returns sit one lexical step above their distractor
  sentences, which leaves them sensitive to injected history noise,
- clarifications are band-name-anchored and appear early in the
  passage, which keeps them comparatively robust.

Generation is pure: one seeded RNG per conversation, derived from the
corpus seed and the conversation index.
"""

from __future__ import annotations

import random

from .corpus import AnswerSpan, Conversation, DialogFeature, Passage, Turn
from .entities import extract_entities
from .text import STOPWORDS, tokenize

TOPIC = "band biography"

# Root facts revisited by topic_return turns (always in the passage).
ROOT_RETURNS = [
    ("formed", "When was the band {B} formed?", "The band {B} was formed in {V}."),
    ("tour", "When did the band {B} tour?", "The band {B} went on tour in {V}."),
    ("split", "When did the band {B} split?", "The band {B} would split in {V}."),
]

# Clarification facts, asked as "What else ..." questions.
CLAR_FACTS = [
    (
        "record",
        "What else did the band {B} record?",
        "The band {B} did record the single {N} in {V}.",
        True,
    ),
    (
        "earn",
        "What else did the band {B} earn?",
        "The band {B} did earn a gold award in {V}.",
        False,
    ),
]

# Drill chains: a name-introducing question plus a pronoun follow-up.
# The distractor sentence repeats the follow-up's full term profile
# except the introduced name and sits between the two gold sentences.
# Drill chains: a name-introducing question plus a pronoun follow-up.
# The distractor sentence repeats the follow-up's full term profile
# except the introduced name (diluted with filler words so a prediction
# landing there shares little text with the gold span) and sits between
# the two gold sentences. Vocabulary is sampled per conversation so
# same-topic turns from other conversations rarely share chain terms.
CHAIN_ADJS = ["first", "main", "debut", "early", "final"]
CHAIN_CATS = ["album", "single", "video", "anthem", "ballad"]
CHAIN_KWS = ["released", "recorded", "filmed", "mixed", "staged", "premiered"]
_WHERE_KWS = {"filmed", "staged"}


def _chain_templates(adj: str, cat: str, kw: str, kw2: str) -> dict:
    wh = "Where" if kw in _WHERE_KWS else "When"
    wh2 = "Where" if kw2 in _WHERE_KWS else "When"
    return {
        "adj": adj,
        "cat": cat,
        "kw": kw,
        "kw2": kw2,
        "intro_q": f"What was the {adj} {cat} by {{B}}?",
        "intro_s": f"The {adj} {cat} by {{B}} was the {cat} {{N}}.",
        "distractor": (
            f"Critics asked {wh.lower()}, if ever, any {adj} {cat} once linked by "
            f"name to {{B}} and held back over many seasons might at very long "
            f"last be {kw} out into the wider world."
        ),
        "follow_q": f"{wh} was it {kw}?",
        "follow_s": f"The {adj} {cat} {{N}} by {{B}} was {kw} in {{V}}.",
        "follow2_q": f"{wh2} was it {kw2}?",
        "follow2_s": (
            f"The {adj} {cat} {{N}} by {{B}}, once {kw} with some acclaim, "
            f"would also be {kw2} in {{V2}}."
        ),
    }


# Pronoun-phrased shift/return turns anchored on the record
# clarification's answer. Semantically they return to the band (or jump
# to the single mentioned in the previous answer), so they carry those
# feature tags even though a purely lexical tagger would read them as
# drill-downs; their reliance on inheritance is exactly what makes these
# buckets sensitive to injected history noise.
PRONOUN_CHILDREN = [
    {
        "feature": DialogFeature.TOPIC_RETURN,
        "question": "When did they reunite?",
        "kw": "reunite",
        "gold": "The band {B} did record the single {N} and would reunite in {V}.",
    },
    {
        "feature": DialogFeature.TOPIC_SHIFT,
        "question": "Where was it performed?",
        "kw": "performed",
        "gold": "The band {B} did record the single {N} to be performed within the hall of {P}.",
    },
]

# Satellite subjects for shifts and returns. Their sentences share the
# "within the town of" tail, which is what lets same-topic noise turns
# from other conversations survive pruning here.
SATELLITES = [
    ("singer", ("born", "raised"), "study", True),
    ("producer", ("hired", "trained"), "settle", True),
    ("drummer", ("met", "signed"), "practice", True),
    ("manager", ("chosen", "tested"), "rest", True),
    ("label", ("launched", "funded"), "move", False),
    ("venue", ("opened", "rebuilt"), "stand", False),
    ("studio", ("built", "wired"), "burn", False),
    ("engineer", ("booked", "promoted"), "travel", True),
]

FILLER = "The pages below retell a quiet story for the archive."

# Neutral spacer sentences keep every content sentence more than one
# reader window (40 tokens) away from the next, so candidate spans never
# straddle two facts. None of these words can ever enter a query.
_PAD_SENTENCES = [
    "Much of that era was simply set aside and left alone for many seasons.",
    "Little else from those days was ever written down or spoken of again.",
    "A long stretch of ordinary months passed with nothing of note at all.",
    "People nearby carried on as they always had, day after slow day.",
]
_PAD_GAP = 40

RESERVED_WORDS = frozenset(
    """band founded formed tour split record single earn gold award first
    album released main recorded debut video filmed anthem ballad early
    final mixed staged critics asked fans wondered reporters singer born
    raised producer hired trained drummer
    met signed manager chosen tested label launched funded venue opened
    rebuilt studio built wired study settle practice rest move stand burn
    town within pages retell story archive quiet reunite performed hall
    linked might long last wider world ever once name held back very seasons
    premiered acclaim engineer booked promoted travel""".split()
)

_SYLLABLES = [
    "bar", "bel", "cor", "dal", "dor", "fen", "gar", "hol", "jin", "kel",
    "lam", "mir", "nov", "ori", "pel", "quil", "ros", "sel", "tam", "ul",
    "ven", "wex", "yor", "zan", "eth", "ira", "oss", "una",
]


class SynthError(ValueError):
    pass


def _make_name(rng: random.Random, used: set[str]) -> str:
    for _ in range(100):
        name = "".join(rng.choice(_SYLLABLES) for _ in range(rng.choice([2, 3])))
        if name not in used and name not in RESERVED_WORDS and name not in STOPWORDS:
            used.add(name)
            return name
    raise SynthError("name pool exhausted")


def _validate_mix(feature_mix: dict[DialogFeature, float]) -> dict[DialogFeature, float]:
    allowed = {
        DialogFeature.DRILL_DOWN,
        DialogFeature.TOPIC_SHIFT,
        DialogFeature.TOPIC_RETURN,
        DialogFeature.CLARIFICATION,
    }
    if not feature_mix:
        raise SynthError("feature_mix must not be empty")
    for feature, p in feature_mix.items():
        if feature not in allowed:
            raise SynthError(f"feature_mix key {feature} is not a follow-up feature")
        if p < 0:
            raise SynthError(f"negative probability for {feature}")
    total = sum(feature_mix.values())
    if abs(total - 1.0) > 1e-9:
        raise SynthError(f"feature_mix probabilities sum to {total}, expected 1")
    return feature_mix


DEFAULT_FEATURE_MIX = {
    DialogFeature.DRILL_DOWN: 0.45,
    DialogFeature.TOPIC_SHIFT: 0.22,
    DialogFeature.TOPIC_RETURN: 0.15,
    DialogFeature.CLARIFICATION: 0.18,
}


class _ConversationBuilder:
    def __init__(self, conv_id: str, rng: random.Random):
        self.id = conv_id
        self.rng = rng
        used: set[str] = set()
        self.band = _make_name(rng, used)
        self.founder = f"{_make_name(rng, used)} {_make_name(rng, used)}"
        years = iter(rng.sample(range(1930, 2030), 24))
        adjs = rng.sample(CHAIN_ADJS, 3)
        cats = rng.sample(CHAIN_CATS, 3)
        kws_sample = rng.sample(CHAIN_KWS, 6)
        kw_assign = [
            (kws_sample[0], kws_sample[3]),
            (kws_sample[1], kws_sample[4]),
            (kws_sample[2], kws_sample[5]),
        ]
        self.chain_items = []
        for (adj, cat, (kw, kw2)) in zip(adjs, cats, kw_assign):
            value = _make_name(rng, used) if kw in _WHERE_KWS else str(next(years))
            value2 = _make_name(rng, used) if kw2 in _WHERE_KWS else str(next(years))
            self.chain_items.append(
                {
                    "name": _make_name(rng, used),
                    "value": value,
                    "value2": value2,
                    **_chain_templates(adj, cat, kw, kw2),
                }
            )
        self.root_values = {kw: str(next(years)) for kw, _, _ in ROOT_RETURNS}
        self.clar_values = {}
        for kw, _, _, needs_name in CLAR_FACTS:
            self.clar_values[kw] = {
                "name": _make_name(rng, used) if needs_name else None,
                "value": str(next(years)),
            }
        self.pronoun_child_values = {
            "reunite": str(next(years)),
            "performed": _make_name(rng, used),
        }
        self.satellites = []
        for cat, kws, ret_kw, is_person in SATELLITES:
            name = (
                f"{_make_name(rng, used)} {_make_name(rng, used)}"
                if is_person
                else _make_name(rng, used)
            )
            self.satellites.append(
                {
                    "cat": cat,
                    "kws": kws,
                    "ret_kw": ret_kw,
                    "name": name,
                    "town": _make_name(rng, used),
                    "ret_town": _make_name(rng, used),
                }
            )

        # sentence inventory, fixed order; keys address gold sentences
        self.sentences: list[tuple[str, str]] = []
        self._build_sentences()

        self.turns: list[dict] = []
        self.used_root = set()
        self.used_clar = set()
        self.used_chains = 0
        self.pending_follow: dict | None = None
        self.shifted: list[dict] = []
        self.returned_sats = set()
        self.sat_cursor = 0
        self.used_pronoun_children = set()
        self.pending_follow2: dict | None = None

    def _build_sentences(self) -> None:
        b = self.band
        add = self.sentences.append
        add(("filler", FILLER))
        add(("founded", f"The band {b} was founded by {self.founder}."))
        for kw, _, template, needs_name in CLAR_FACTS:
            vals = self.clar_values[kw]
            add(
                (
                    f"clar:{kw}",
                    template.format(B=b, N=vals["name"] or "", V=vals["value"]).replace("  ", " "),
                )
            )
        record_name = self.clar_values["record"]["name"]
        for child in PRONOUN_CHILDREN:
            add(
                (
                    f"child:{child['kw']}",
                    child["gold"].format(
                        B=b,
                        N=record_name,
                        V=self.pronoun_child_values["reunite"],
                        P=self.pronoun_child_values["performed"],
                    ),
                )
            )
        for kw, _, template in ROOT_RETURNS:
            add((f"root:{kw}", template.format(B=b, V=self.root_values[kw])))
        for item in self.chain_items:
            add((f"intro:{item['cat']}", item["intro_s"].format(B=b, N=item["name"])))
            add((f"distractor:{item['cat']}", item["distractor"].format(B=b)))
            add(
                (
                    f"follow:{item['cat']}",
                    item["follow_s"].format(B=b, N=item["name"], V=item["value"]),
                )
            )
            add(
                (
                    f"follow2:{item['cat']}",
                    item["follow2_s"].format(B=b, N=item["name"], V2=item["value2"]),
                )
            )
        for sat in self.satellites:
            add(
                (
                    f"sat:{sat['cat']}",
                    f"The {sat['cat']} {sat['name']} was {sat['kws'][0]} and "
                    f"{sat['kws'][1]} within the town of {sat['town']}.",
                )
            )
        for sat in self.satellites:
            add(
                (
                    f"satret:{sat['cat']}",
                    f"The {sat['cat']} {sat['name']} would {sat['ret_kw']} within "
                    f"the town of {sat['ret_town']}.",
                )
            )

    # ---- feasibility ----

    def _prev_is_satellite(self) -> bool:
        return bool(self.turns) and self.turns[-1]["kind"] == "satellite"

    def can_drill(self) -> bool:
        if self.pending_follow is not None:
            return True
        if self.pending_follow2 is not None:
            return True
        # chains start at turn 4 or later so a pronoun follow-up always
        # carries enough history for selection to matter
        return (
            self.used_chains < len(self.chain_items)
            and len(self.turns) >= 3
            and not self._prev_is_satellite()
        )

    def can_shift(self) -> bool:
        return self.sat_cursor < len(self.satellites)

    def can_return(self) -> bool:
        if self._prev_is_satellite():
            return len(self.used_root) < len(ROOT_RETURNS)
        return any(
            sat["cat"] not in self.returned_sats for sat in self.shifted
        )

    def can_clarify(self) -> bool:
        return len(self.used_clar) < len(CLAR_FACTS)

    def _prev_is_record_clar(self) -> bool:
        return bool(self.turns) and self.turns[-1]["gold_key"] == "clar:record"

    def can_pronoun_child(self) -> bool:
        return self._prev_is_record_clar() and len(self.used_pronoun_children) < len(
            PRONOUN_CHILDREN
        )

    def emit_pronoun_child(self) -> None:
        child = self.rng.choice(
            [c for c in PRONOUN_CHILDREN if c["kw"] not in self.used_pronoun_children]
        )
        self.used_pronoun_children.add(child["kw"])
        self.turns.append(
            {
                "kind": "pronoun_child",
                "feature": child["feature"],
                "question": child["question"],
                "gold_key": f"child:{child['kw']}",
                "planted": [],
            }
        )

    # ---- emission ----

    def emit_first(self) -> None:
        question = f"Who founded the band {self.band}?"
        self.turns.append(
            {
                "kind": "root",
                "feature": DialogFeature.FIRST_QUESTION,
                "question": question,
                "gold_key": "founded",
                "planted": list(
                    extract_entities(question).question_entities
                ),
            }
        )

    def emit_drill(self) -> None:
        if self.pending_follow is not None:
            item = self.pending_follow
            self.pending_follow = None
            self.pending_follow2 = item
            self.turns.append(
                {
                    "kind": "chain_follow",
                    "feature": DialogFeature.DRILL_DOWN,
                    "question": item["follow_q"],
                    "gold_key": f"follow:{item['cat']}",
                    "planted": [item["name"]],
                }
            )
            return
        if self.pending_follow2 is not None:
            item = self.pending_follow2
            self.pending_follow2 = None
            self.turns.append(
                {
                    "kind": "chain_follow",
                    "feature": DialogFeature.DRILL_DOWN,
                    "question": item["follow2_q"],
                    "gold_key": f"follow2:{item['cat']}",
                    "planted": [],
                }
            )
            return
        item = self.chain_items[self.used_chains]
        self.used_chains += 1
        self.pending_follow = item
        self.turns.append(
            {
                "kind": "chain_intro",
                "feature": DialogFeature.DRILL_DOWN,
                "question": item["intro_q"].format(B=self.band),
                "gold_key": f"intro:{item['cat']}",
                "planted": [],
            }
        )

    def emit_shift(self) -> None:
        sat = self.satellites[self.sat_cursor]
        self.sat_cursor += 1
        self.shifted.append(sat)
        self.turns.append(
            {
                "kind": "satellite",
                "feature": DialogFeature.TOPIC_SHIFT,
                "question": f"Where was the {sat['cat']} {sat['kws'][0]} and {sat['kws'][1]}?",
                "gold_key": f"sat:{sat['cat']}",
                "planted": [],
            }
        )

    def emit_return(self) -> None:
        if self._prev_is_satellite():
            kw, template, _ = next(
                f for f in ROOT_RETURNS if f[0] not in self.used_root
            )
            self.used_root.add(kw)
            self.turns.append(
                {
                    "kind": "root",
                    "feature": DialogFeature.TOPIC_RETURN,
                    "question": template.format(B=self.band),
                    "gold_key": f"root:{kw}",
                    "planted": [],
                }
            )
            return
        sat = next(s for s in self.shifted if s["cat"] not in self.returned_sats)
        self.returned_sats.add(sat["cat"])
        self.turns.append(
            {
                "kind": "satellite",
                "feature": DialogFeature.TOPIC_RETURN,
                "question": f"Where would the {sat['cat']} {sat['ret_kw']}?",
                "gold_key": f"satret:{sat['cat']}",
                "planted": [],
            }
        )

    def emit_clarification(self) -> None:
        kw, template, _, _ = next(f for f in CLAR_FACTS if f[0] not in self.used_clar)
        self.used_clar.add(kw)
        self.turns.append(
            {
                "kind": "root",
                "feature": DialogFeature.CLARIFICATION,
                "question": template.format(B=self.band),
                "gold_key": f"clar:{kw}",
                "planted": [],
            }
        )

    def build(self, mix: dict[DialogFeature, float], n_turns: int) -> Conversation:
        self.emit_first()
        features = list(mix.keys())
        weights = [mix[f] for f in features]
        while len(self.turns) < n_turns:
            if self.pending_follow is not None or self.pending_follow2 is not None:
                self.emit_drill()
                continue
            sampled = self.rng.choices(features, weights=weights, k=1)[0]
            emitted = False
            if (
                sampled in (DialogFeature.TOPIC_RETURN, DialogFeature.TOPIC_SHIFT)
                and self.can_pronoun_child()
                and self.rng.random() < 0.8
            ):
                self.emit_pronoun_child()
                continue
            for feature in [sampled] + [f for f in _FALLBACK_ORDER if f != sampled]:
                if feature == DialogFeature.DRILL_DOWN and self.can_drill():
                    self.emit_drill()
                    emitted = True
                elif feature == DialogFeature.TOPIC_SHIFT and self.can_shift():
                    self.emit_shift()
                    emitted = True
                elif feature == DialogFeature.TOPIC_RETURN and self.can_return():
                    self.emit_return()
                    emitted = True
                elif feature == DialogFeature.CLARIFICATION and self.can_clarify():
                    self.emit_clarification()
                    emitted = True
                if emitted:
                    break
            if not emitted:
                break

        text_parts: list[str] = []
        offsets: dict[str, tuple[int, int]] = {}
        cursor = 0
        pad_cycle = 0
        for i, (key, sentence) in enumerate(self.sentences):
            if i > 0:
                gap_tokens = 0
                while gap_tokens < _PAD_GAP:
                    pad = _PAD_SENTENCES[pad_cycle % len(_PAD_SENTENCES)]
                    pad_cycle += 1
                    cursor += 1
                    text_parts.append(pad)
                    cursor += len(pad)
                    gap_tokens += len(tokenize(pad))
                cursor += 1
            offsets[key] = (cursor, cursor + len(sentence))
            text_parts.append(sentence)
            cursor += len(sentence)
        passage_text = " ".join(text_parts)
        passage = Passage.build(self.id, f"{self.band} ({TOPIC})", passage_text)

        turns = []
        for i, spec in enumerate(self.turns):
            start_char, end_char = offsets[spec["gold_key"]]
            indices = [
                k
                for k, tok in enumerate(passage.tokens)
                if tok.start >= start_char and tok.end <= end_char
            ]
            span_text = passage_text[
                passage.tokens[indices[0]].start : passage.tokens[indices[-1]].end
            ]
            turns.append(
                Turn(
                    id=f"{self.id}_q{i}",
                    question=spec["question"],
                    gold_answers=(
                        AnswerSpan(text=span_text, start=indices[0], end=indices[-1]),
                    ),
                    feature=spec["feature"],
                    planted_required_entities=tuple(spec["planted"]),
                )
            )
        conversation = Conversation(
            id=self.id, passage=passage, turns=tuple(turns), topic=TOPIC
        )
        conversation.validate()
        return conversation


_FALLBACK_ORDER = [
    DialogFeature.CLARIFICATION,
    DialogFeature.TOPIC_RETURN,
    DialogFeature.TOPIC_SHIFT,
    DialogFeature.DRILL_DOWN,
]


def generate_synthetic(
    seed: int,
    n_conversations: int,
    feature_mix: dict[DialogFeature, float] | None = None,
) -> list[Conversation]:
    """Deterministic corpus of planted band-biography conversations."""
    if n_conversations < 0:
        raise SynthError("n_conversations must be >= 0")
    mix = _validate_mix(feature_mix or DEFAULT_FEATURE_MIX)
    conversations = []
    for index in range(n_conversations):
        rng = random.Random(f"{seed}:{index}")
        builder = _ConversationBuilder(f"synth-{seed}-{index}", rng)
        n_turns = 2 + rng.randint(5, 7)
        conversations.append(builder.build(mix, n_turns))
    return conversations
