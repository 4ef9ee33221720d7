import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convsel.nncore import EmbeddingTable, LinearLayer, TrainConfig, sigmoid
from convsel.termclass import (
    N_EXTRA_FEATURES,
    TermClassError,
    TermClassifier,
    classify_terms,
    token_features,
    train_termclass,
)


@pytest.fixture(scope="module")
def table():
    return EmbeddingTable.build({"band", "album", "the"}, dim=8, seed=0)


class TestTokenFeatures:
    def test_entity_indicator(self, table):
        feats = token_features("band", table, {"band"}, {"band"}, 0.5, 0.3)
        assert feats[8] == 1.0
        feats = token_features("band", table, set(), {"band"}, 0.5, 0.3)
        assert feats[8] == 0.0

    def test_passage_indicator_and_recency_endpoint(self, table):
        feats = token_features("album", table, set(), {"album"}, 1.0, 0.25)
        assert feats[9] == 1.0  # in passage
        assert feats[10] == 1.0  # most recent turn
        assert feats[11] == 0.25

    def test_matches_independent_recomputation(self, table):
        feats = token_features("album", table, {"album"}, set(), 0.75, 0.4)
        expected = np.concatenate([table.lookup("album"), [1.0, 0.0, 0.75, 0.4]])
        assert np.array_equal(feats, expected)

    def test_dimension(self, table):
        feats = token_features("the", table, set(), set(), 0.0, 0.0)
        assert feats.shape == (8 + N_EXTRA_FEATURES,)


def constant_model(dim, bias):
    return TermClassifier(
        layer=LinearLayer(np.zeros((dim, 1)), np.array([float(bias)]))
    )


class TestClassifyTerms:
    def test_zero_logit_is_bit_one(self, table):
        model = constant_model(12, 0.0)
        feats = token_features("band", table, set(), set(), 0.0, 0.0)
        labeling = classify_terms([("band", feats)], model)
        assert labeling.tokens[0].score == pytest.approx(0.5)
        assert labeling.tokens[0].bit == 1  # threshold is inclusive

    def test_saturated_negative_bias_all_zero(self, table):
        model = constant_model(12, -10.0)
        feats = token_features("band", table, {"band"}, {"band"}, 1.0, 1.0)
        labeling = classify_terms([("band", feats)], model)
        assert labeling.tokens[0].score < 1e-4
        assert labeling.tokens[0].bit == 0

    def test_dimension_mismatch(self, table):
        model = constant_model(5, 0.0)
        feats = token_features("band", table, set(), set(), 0.0, 0.0)
        with pytest.raises(TermClassError):
            classify_terms([("band", feats)], model)

    def test_inference_deterministic(self, table):
        rng = np.random.default_rng(0)
        model = TermClassifier(
            layer=LinearLayer(rng.normal(size=(12, 1)), rng.normal(size=1)),
            dropout_rate=0.4,
        )
        feats = [
            ("band", token_features("band", table, {"band"}, set(), 0.5, 0.5)),
            ("the", token_features("the", table, set(), {"the"}, 1.0, 0.1)),
        ]
        first = classify_terms(feats, model)
        second = classify_terms(feats, model)
        assert first == second

    @settings(max_examples=60, deadline=None)
    @given(st.floats(min_value=-6, max_value=6), st.floats(min_value=0.05, max_value=0.95))
    def test_threshold_semantics(self, logit, threshold):
        model = TermClassifier(
            layer=LinearLayer(np.array([[1.0]]), np.zeros(1)), threshold=threshold
        )
        labeling = classify_terms([("x", np.array([logit]))], model, threshold)
        expected = 1 if float(sigmoid(logit)) >= threshold else 0
        assert labeling.tokens[0].bit == expected


class TestTrainTermclass:
    def make_rows(self, n=200, seed=0):
        # the entity indicator perfectly predicts the label
        rng = np.random.default_rng(seed)
        rows = []
        for _ in range(n):
            label = int(rng.integers(0, 2))
            emb = rng.normal(scale=0.05, size=8)
            feats = np.concatenate(
                [emb, [float(label), 1.0, rng.random(), rng.random()]]
            )
            rows.append((feats, label))
        return rows

    def test_zero_epochs_unchanged(self):
        model = TermClassifier.init(8, seed=0)
        before = model.layer.weights.copy()
        trained = train_termclass(
            self.make_rows(), 12, TrainConfig(max_epochs=0, seed=0), model
        )
        assert np.array_equal(trained.layer.weights, before)

    def test_indicator_separable_reaches_high_accuracy(self):
        rows = self.make_rows(400, seed=1)
        config = TrainConfig(
            learning_rate=0.2, max_epochs=60, dropout_rate=0.0, seed=0, batch_size=32
        )
        model = train_termclass(rows, 12, config)
        correct = sum(
            1
            for feats, label in rows
            if classify_terms([("t", feats)], model).tokens[0].bit == label
        )
        assert correct / len(rows) >= 0.99

    def test_same_seed_identical(self):
        rows = self.make_rows(100)
        config = TrainConfig(learning_rate=0.1, max_epochs=8, seed=5)
        a = train_termclass(rows, 12, config)
        b = train_termclass(rows, 12, config)
        assert np.array_equal(a.layer.weights, b.layer.weights)
        assert np.array_equal(a.layer.bias, b.layer.bias)

    def test_empty_rejected(self):
        with pytest.raises(TermClassError):
            train_termclass([], 12, TrainConfig())

    def test_entity_weight_monotonicity(self):
        # with a positive learned entity weight, raising the indicator
        # never lowers the score
        rows = self.make_rows(300, seed=2)
        config = TrainConfig(
            learning_rate=0.2, max_epochs=40, dropout_rate=0.0, seed=1, batch_size=32
        )
        model = train_termclass(rows, 12, config)
        ent_weight = model.layer.weights[8, 0]
        assert ent_weight > 0
        base = np.concatenate([np.zeros(8), [0.0, 1.0, 0.5, 0.5]])
        on = base.copy()
        on[8] = 1.0
        score_off = classify_terms([("t", base)], model).tokens[0].score
        score_on = classify_terms([("t", on)], model).tokens[0].score
        assert score_on > score_off


def test_trained_bits_match_planted_relevance(trained):
    """Question-token bits from the trained classifier against the
    distant labels on held-out conversations."""
    from convsel.entities import distant_label, entity_chain
    from convsel.pipeline import labeler_reader_handle
    from convsel.text import token_strings

    models, _, _, held_out = trained
    handle = labeler_reader_handle()
    tp = fp = fn = 0
    for conv in held_out:
        labels = distant_label(conv, handle)
        chain = entity_chain(
            [t.question for t in conv.turns],
            [t.gold_answers[0].text for t in conv.turns],
        )
        passage_tokens = set(conv.passage.token_strings)
        for i, (turn, tl) in enumerate(zip(conv.turns, labels.turns)):
            feats = [
                (
                    tok,
                    token_features(
                        tok,
                        models.embeddings,
                        chain[i].all_entity_tokens(),
                        passage_tokens,
                        1.0,
                        1.0,
                    ),
                )
                for tok in token_strings(turn.question)
            ]
            labeling = classify_terms(feats, models.termclass)
            for scored, bit in zip(labeling.tokens, tl.token_bits):
                if scored.bit and bit:
                    tp += 1
                elif scored.bit and not bit:
                    fp += 1
                elif bit and not scored.bit:
                    fn += 1
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    f1 = 2 * precision * recall / (precision + recall)
    assert f1 >= 0.90
