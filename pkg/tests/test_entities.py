import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convsel.corpus import Passage
from convsel.entities import (
    DistantLabels,
    EntitySet,
    LabelingError,
    answer_context_terms,
    candidate_entities,
    distant_label,
    entity_chain,
    extract_entities,
    propagate,
)
from convsel.reader import score_windows
from convsel.synth import generate_synthetic

JAL_PASSAGE = Passage.build(
    "jal",
    "Jal (band)",
    "Jal the band was founded by Goher Mumtaz and Atif Aslam. "
    "Atif Aslam was born in Wazirabad. The band was founded in 2002. "
    "Their first album was Aadat, and the album was released soon after.",
)


def reader_handle(passage, terms):
    prediction = score_windows(passage, {t: 1.0 for t in terms}, 40)
    return (prediction.start, prediction.end)


class TestExtractEntities:
    def test_incomplete_question_with_history_gets_band_and_album(self):
        # Q4 of the running example: context entity band, question entity album
        q3 = extract_entities("When was the band founded?", JAL_PASSAGE)
        result = extract_entities(
            "What was their first album?", JAL_PASSAGE, previous=q3
        )
        assert "album" in result.question_entities
        assert "band" in result.context_entities

    def test_stopword_only_question_extracts_nothing(self):
        result = extract_entities("When was it?", JAL_PASSAGE)
        assert result.question_entities == ()
        assert result.context_entities == ()

    def test_synthetic_first_turn_matches_planted(self):
        conv = generate_synthetic(3, 1)[0]
        first = conv.turns[0]
        result = extract_entities(first.question, conv.passage)
        assert set(result.question_entities) == set(first.planted_required_entities)

    def test_empty_question_rejected(self):
        with pytest.raises(ValueError):
            extract_entities("   ")

    def test_output_subset_of_content_ngrams(self):
        result = extract_entities("Where was the singer born and raised?", JAL_PASSAGE)
        from convsel.text import content_ngrams

        allowed = set(content_ngrams("Where was the singer born and raised?"))
        assert set(result.question_entities) <= allowed
        assert set(result.context_entities) <= allowed


class TestPropagate:
    def test_pronoun_question_inherits_last_entities(self):
        last = EntitySet(context_entities=("band",), question_entities=("album",))
        aug = propagate("When was it released?", last)
        assert set(aug.inherited_entities) == {"band", "album"}
        effective = set(aug.effective_terms())
        assert {"band", "album", "released"} <= effective

    def test_self_contained_question_inherits_nothing(self):
        last = EntitySet(context_entities=("band",), question_entities=("album",))
        aug = propagate("Where was Atif Aslam born?", last)
        assert aug.inherited_entities == ()

    def test_first_question_has_no_inheritance(self):
        aug = propagate("Who founded Jal?", None)
        assert aug.inherited_entities == ()

    def test_answer_terms_ride_with_pronoun_trigger(self):
        last = EntitySet(question_entities=("album",))
        aug = propagate("When was it released?", last, "the album Aadat")
        assert "aadat" in aug.inherited_answer_entities
        assert "aadat" in aug.all_entity_tokens()
        # answer-tier terms are context, not question-tier entities
        assert "aadat" not in aug.effective_terms()

    def test_propagation_idempotent(self):
        last = EntitySet(context_entities=("band",), question_entities=("album",))
        once = propagate("When was it released?", last)
        twice = propagate("When was it released?", once.effective)
        assert set(once.effective_terms()) == set(twice.effective_terms())

    @settings(max_examples=50, deadline=None)
    @given(st.text(alphabet="abcdefg ", min_size=1, max_size=30))
    def test_effective_covers_own_extraction(self, text):
        question = f"When was {text} released?"
        aug = propagate(question, None)
        own = extract_entities(question)
        assert set(own.question_entities) <= set(aug.effective_terms())


class TestDistantLabel:
    def test_first_turn_required_is_own_extraction(self):
        conv = generate_synthetic(5, 1)[0]
        labels = distant_label(conv, reader_handle)
        own = extract_entities(conv.turns[0].question).question_entities
        assert set(labels.turns[0].required_entities) == set(own)

    def test_required_matches_planted_on_synthetic(self):
        for conv in generate_synthetic(17, 15):
            labels = distant_label(conv, reader_handle)
            for turn, tl in zip(conv.turns, labels.turns):
                assert set(tl.required_entities) == set(
                    turn.planted_required_entities or ()
                ), turn.question

    def test_each_required_entity_is_individually_necessary(self):
        # removal of any accepted inherited entity must break gold retrieval
        from convsel.entities import _base_query, _hits_gold

        corpus = generate_synthetic(23, 10)
        checked = 0
        for conv in corpus:
            labels = distant_label(conv, reader_handle)
            chain = entity_chain(
                [t.question for t in conv.turns],
                [t.gold_answers[0].text for t in conv.turns],
            )
            for i, (turn, tl) in enumerate(zip(conv.turns, labels.turns)):
                if i == 0 or not tl.required_entities:
                    continue
                base = _base_query(chain[i])
                full = base + list(tl.required_entities)
                assert _hits_gold(
                    reader_handle(conv.passage, full), turn.gold_answers
                )
                for entity in tl.required_entities:
                    reduced = [t for t in full if t != entity]
                    assert not _hits_gold(
                        reader_handle(conv.passage, reduced), turn.gold_answers
                    )
                    checked += 1
        assert checked > 0

    def test_token_bits_cover_required_and_question_entities(self):
        conv = generate_synthetic(29, 1)[0]
        labels = distant_label(conv, reader_handle)
        from convsel.text import tokenize

        for turn, tl in zip(conv.turns, labels.turns):
            tokens = [t.text for t in tokenize(turn.question)]
            assert len(tokens) == len(tl.token_bits)
            vocab = set()
            for term in tl.required_entities:
                vocab.update(term.split(" "))
            own = extract_entities(turn.question).question_entities
            for term in own:
                vocab.update(term.split(" "))
            for tok, bit in zip(tokens, tl.token_bits):
                assert bit == (1 if tok in vocab else 0)

    def test_reader_failure_names_turn(self):
        conv = generate_synthetic(31, 1)[0]

        def broken(passage, terms):
            raise RuntimeError("boom")

        with pytest.raises(LabelingError) as err:
            distant_label(conv, broken)
        assert any(turn.id in str(err.value) for turn in conv.turns)
        assert "reader failed" in str(err.value)

    def test_labels_serialization_round_trip(self):
        conv = generate_synthetic(37, 1)[0]
        labels = distant_label(conv, reader_handle)
        assert DistantLabels.from_json(labels.to_json()) == labels


def test_candidate_entities_in_conversation_order():
    last = EntitySet(
        context_entities=("band",), question_entities=("first", "album")
    )
    aug = propagate("When was it released?", last, "the album aadat")
    candidates = candidate_entities(aug)
    assert candidates.index("band") < candidates.index("aadat")
    assert "released" not in candidates


def test_answer_context_terms_are_content_ngrams():
    terms = answer_context_terms("The first album by the band")
    assert "first" in terms and "album" in terms and "first album" in terms
    assert "the" not in terms
