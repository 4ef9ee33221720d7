import json

import pytest

from convsel.corpus import (
    CorpusError,
    DialogFeature,
    conversation_to_dict,
    history_for,
    idf_table,
    load_canard,
    load_quac,
    parse_quac,
    save_quac,
)
from convsel.synth import SynthError, generate_synthetic
from convsel.text import tokenize


def quac_payload(context="Jal was founded in 2002.", answer="2002", start=19):
    return {
        "data": [
            {
                "id": "c1",
                "title": "Jal",
                "context": context,
                "qas": [
                    {
                        "id": "q0",
                        "question": "When was Jal founded?",
                        "answers": [{"text": answer, "answer_start": start}],
                    },
                    {
                        "id": "q1",
                        "question": "Who founded it?",
                        "answers": [{"text": "Jal", "answer_start": 0}],
                    },
                ],
            }
        ]
    }


def test_load_quac_echoes_schema(tmp_path):
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps(quac_payload()), encoding="utf-8")
    convs = load_quac(path)
    assert len(convs) == 1
    assert convs[0].id == "c1"
    assert [t.id for t in convs[0].turns] == ["q0", "q1"]
    assert convs[0].turns[0].gold_answers[0].text == "2002"


def test_answer_start_past_end_is_reported():
    payload = quac_payload(start=500)
    with pytest.raises(CorpusError) as err:
        parse_quac(payload)
    assert "q0" in str(err.value)


def test_answer_text_mismatch_is_reported():
    payload = quac_payload(answer="1999")
    with pytest.raises(CorpusError) as err:
        parse_quac(payload)
    assert "does not match" in str(err.value)


def test_malformed_json_raises(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(CorpusError):
        load_quac(path)


def test_round_trip_preserves_structure(tmp_path):
    corpus = generate_synthetic(3, 4)
    path = tmp_path / "synth.json"
    save_quac(corpus, path)
    reloaded = load_quac(path)
    assert [conversation_to_dict(c) for c in corpus] == [
        conversation_to_dict(c) for c in reloaded
    ]


def test_span_tokens_match_text_everywhere():
    for conv in generate_synthetic(11, 6):
        for turn in conv.turns:
            for span in turn.gold_answers:
                span_tokens = [
                    t.text for t in conv.passage.tokens[span.start : span.end + 1]
                ]
                assert span_tokens == [t.text for t in tokenize(span.text)]


def test_tokenization_offsets_round_trip():
    text = "The band, Jal-X (2002) was: great!"
    for tok in tokenize(text):
        assert text[tok.start : tok.end].lower() == tok.text


class TestGenerator:
    def test_deterministic(self):
        a = generate_synthetic(42, 10)
        b = generate_synthetic(42, 10)
        assert [conversation_to_dict(c) for c in a] == [
            conversation_to_dict(c) for c in b
        ]

    def test_zero_conversations(self):
        assert generate_synthetic(1, 0) == []

    def test_forced_mix_is_all_topic_shift(self):
        corpus = generate_synthetic(5, 8, {DialogFeature.TOPIC_SHIFT: 1.0})
        for conv in corpus:
            for turn in conv.turns[1:]:
                assert turn.feature == DialogFeature.TOPIC_SHIFT

    def test_invalid_mix_rejected(self):
        with pytest.raises(SynthError):
            generate_synthetic(1, 1, {DialogFeature.TOPIC_SHIFT: 0.4})
        with pytest.raises(SynthError):
            generate_synthetic(
                1,
                1,
                {DialogFeature.TOPIC_SHIFT: 1.4, DialogFeature.DRILL_DOWN: -0.4},
            )

    def test_different_seeds_differ(self):
        pairs = zip(generate_synthetic(1, 50), generate_synthetic(2, 50))
        differing = sum(
            1
            for a, b in pairs
            if [t.question for t in a.turns] != [t.question for t in b.turns]
        )
        assert differing >= 50 * 0.99

    def test_first_turn_is_first_question(self):
        for conv in generate_synthetic(9, 10):
            assert conv.turns[0].feature == DialogFeature.FIRST_QUESTION

    def test_pronoun_follow_ups_carry_planted_entities(self):
        corpus = generate_synthetic(13, 20)
        planted = [
            t
            for c in corpus
            for t in c.turns
            if t.planted_required_entities and t.feature == DialogFeature.DRILL_DOWN
        ]
        assert planted, "expected pronoun follow-ups in the corpus"
        for turn in planted:
            assert all(e == e.lower() for e in turn.planted_required_entities)


def test_history_for_uses_gold_answers():
    conv = generate_synthetic(4, 1)[0]
    items = history_for(conv, 2)
    assert len(items) == 2
    assert items[0].answer_text == conv.turns[0].gold_answers[0].text


def test_load_canard(tmp_path):
    payload = [
        {"History": ["q1", "a1"], "Question": "When was it?", "Rewrite": "When was Jal founded?"}
    ]
    path = tmp_path / "canard.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    records = load_canard(path)
    assert len(records) == 1
    assert records[0].history == ("q1", "a1")
    assert records[0].rewrite == "When was Jal founded?"


def test_canard_missing_rewrite(tmp_path):
    path = tmp_path / "canard.json"
    path.write_text(json.dumps([{"History": [], "Question": "q"}]), encoding="utf-8")
    with pytest.raises(CorpusError) as err:
        load_canard(path)
    assert "record 0" in str(err.value)


def test_canard_empty_list(tmp_path):
    path = tmp_path / "canard.json"
    path.write_text("[]", encoding="utf-8")
    assert load_canard(path) == []


def test_idf_table_monotone():
    corpus = generate_synthetic(21, 10)
    idf = idf_table(corpus)
    # band-name styling words appear everywhere, names in one passage only
    assert idf["band"] < max(idf.values())
    assert all(v > 0 for v in idf.values())
