import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convsel.corpus import HistoryItem
from convsel.entities import EntitySet, propagate
from convsel.nncore import EmbeddingTable, LinearLayer, TrainConfig
from convsel.selection import (
    AttentionScorer,
    PruneConfig,
    SelectionError,
    prune,
    represent,
    rerank,
    train_attention,
    uniform_selection,
)


def history_with_entities(pairs):
    out = []
    for i, (question, terms) in enumerate(pairs):
        out.append(
            (
                HistoryItem(turn_id=f"t{i}", question=question, answer_text=""),
                EntitySet(question_entities=tuple(terms)),
            )
        )
    return out


class TestPrune:
    def test_running_example_prunes_singer_turn(self):
        # at Q4 ("What was their first album?") the singer question shares
        # no entities and is pruned; the band questions survive
        history = history_with_entities(
            [
                ("Who founded Jal?", ["founded", "jal", "band"]),
                ("Where was Atif Aslam born?", ["atif", "aslam", "born"]),
                ("When was the band founded?", ["band", "founded"]),
            ]
        )
        current = propagate(
            "What was their first album?",
            EntitySet(context_entities=("band",), question_entities=("founded",)),
        )
        retained, pruned = prune(history, current)
        assert [item.turn_id for item, _, _ in retained] == ["t0", "t2"]
        assert [p.turn_id for p in pruned] == ["t1"]

    def test_empty_history(self):
        current = propagate("Who founded Jal?", None)
        retained, pruned = prune([], current)
        assert retained == [] and pruned == []

    def test_min_shared_entities_honored(self):
        history = history_with_entities([("q", ["band"]), ("r", ["band", "album"])])
        current = propagate(
            "When was it?", EntitySet(question_entities=("band", "album"))
        )
        retained_1, _ = prune(history, current, PruneConfig(min_shared_entities=1))
        assert len(retained_1) == 2
        retained_2, pruned_2 = prune(history, current, PruneConfig(min_shared_entities=2))
        assert [item.turn_id for item, _, _ in retained_2] == ["t1"]
        assert len(pruned_2) == 1

    def test_monotone_in_min_shared(self):
        history = history_with_entities(
            [("a", ["x"]), ("b", ["x", "y"]), ("c", ["x", "y", "z"]), ("d", ["w"])]
        )
        current = propagate("it", EntitySet(question_entities=("x", "y", "z")))
        sizes = []
        for k in (1, 2, 3):
            retained, _ = prune(history, current, PruneConfig(min_shared_entities=k))
            sizes.append(len(retained))
        assert sizes == sorted(sizes, reverse=True)

    def test_normalized_overlap_mode(self):
        history = history_with_entities([("a", ["x", "y"]), ("b", ["x", "q"])])
        current = propagate("it", EntitySet(question_entities=("x", "y")))
        retained, pruned = prune(
            history,
            current,
            PruneConfig(match_mode="normalized_overlap", overlap_threshold=0.9),
        )
        assert [item.turn_id for item, _, _ in retained] == ["t0"]

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.lists(st.sampled_from("abcdefgh"), max_size=4).map(tuple),
            max_size=50,
        ),
        st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=4),
    )
    def test_partition_invariant(self, history_terms, current_terms):
        history = history_with_entities(
            [(f"q{i}", terms) for i, terms in enumerate(history_terms)]
        )
        current = propagate("it", EntitySet(question_entities=tuple(current_terms)))
        retained, pruned = prune(history, current)
        retained_ids = [item.turn_id for item, _, _ in retained]
        pruned_ids = [p.turn_id for p in pruned]
        assert sorted(retained_ids + pruned_ids) == sorted(
            item.turn_id for item, _ in history
        )
        assert not (set(retained_ids) & set(pruned_ids))


class TestRepresent:
    def test_single_token_turn_is_that_row(self):
        table = EmbeddingTable.build({"hello"}, dim=8, seed=0)
        item = HistoryItem(turn_id="t", question="hello", answer_text="")
        rep = represent(item, table)
        assert np.allclose(rep.vector, table.lookup("hello"))

    def test_identical_turns_identical_vectors(self):
        table = EmbeddingTable.build({"a", "b"}, dim=8, seed=0)
        one = represent(HistoryItem("t1", "a b", "b"), table)
        two = represent(HistoryItem("t2", "a b", "b"), table)
        assert np.array_equal(one.vector, two.vector)

    def test_matches_brute_force_mean(self):
        table = EmbeddingTable.build({"who", "founded", "jal", "goher"}, dim=16, seed=3)
        item = HistoryItem("t", "Who founded Jal?", "Goher")
        rep = represent(item, table)
        tokens = ["who", "founded", "jal", "goher"]
        expected = sum(table.lookup(t) for t in tokens) / len(tokens)
        assert np.allclose(rep.vector, expected)

    def test_empty_turn_rejected(self):
        table = EmbeddingTable.build({"a"}, dim=4, seed=0)
        with pytest.raises(SelectionError):
            represent(HistoryItem("t", "...", ""), table)


def reps_from(vectors):
    from convsel.selection import TurnRepresentation

    return [
        TurnRepresentation(turn_id=f"t{i}", vector=np.array(v, dtype=float))
        for i, v in enumerate(vectors)
    ]


class TestRerank:
    def test_single_turn_weight_one(self):
        scorer = AttentionScorer.init(2, seed=0)
        result = rerank(reps_from([[1.0, 0.0]]), scorer)
        assert result.kept[0].weight == pytest.approx(1.0)

    def test_zero_scorer_uniform_conversation_order(self):
        scorer = AttentionScorer(LinearLayer(np.zeros((2, 1)), np.zeros(1)))
        result = rerank(reps_from([[1, 0], [0, 1], [2, 2], [3, 3]]), scorer)
        assert [k.turn_id for k in result.kept] == ["t0", "t1", "t2", "t3"]
        for k in result.kept:
            assert k.weight == pytest.approx(0.25)

    def test_two_turn_softmax_closed_form(self):
        scorer = AttentionScorer(LinearLayer(np.array([[1.0], [0.0]]), np.zeros(1)))
        result = rerank(reps_from([[1, 0], [0, 1]]), scorer)
        assert result.kept[0].turn_id == "t0"
        assert result.kept[0].weight == pytest.approx(0.7311, abs=1e-4)
        assert result.kept[1].weight == pytest.approx(0.2689, abs=1e-4)

    def test_weights_sum_to_one_sorted_positive(self):
        rng = np.random.default_rng(0)
        scorer = AttentionScorer.init(4, seed=1)
        for n in (1, 2, 7, 50):
            result = rerank(reps_from(rng.normal(size=(n, 4))), scorer)
            weights = [k.weight for k in result.kept]
            assert abs(sum(weights) - 1.0) <= 1e-9
            assert all(w > 0 for w in weights)
            assert weights == sorted(weights, reverse=True)
            assert [k.rank for k in result.kept] == list(range(n))

    def test_shift_invariance_of_order(self):
        rng = np.random.default_rng(5)
        vectors = rng.normal(size=(6, 3))
        scorer = AttentionScorer(LinearLayer(rng.normal(size=(3, 1)), np.zeros(1)))
        shifted = AttentionScorer(
            LinearLayer(scorer.layer.weights, np.array([57.0]))
        )
        a = rerank(reps_from(vectors), scorer)
        b = rerank(reps_from(vectors), shifted)
        assert [k.turn_id for k in a.kept] == [k.turn_id for k in b.kept]

    def test_empty_rejected(self):
        with pytest.raises(SelectionError):
            rerank([], AttentionScorer.init(2, seed=0))


def test_uniform_selection_weights():
    result = uniform_selection(["a", "b", "c", "d"])
    assert [k.weight for k in result.kept] == [0.25] * 4
    assert [k.turn_id for k in result.kept] == ["a", "b", "c", "d"]


class TestTrainAttention:
    def test_zero_epochs_unchanged(self):
        scorer = AttentionScorer.init(4, seed=0)
        before = scorer.layer.weights.copy()
        trained = train_attention(
            [(np.zeros(4), 1)], 4, TrainConfig(max_epochs=0, seed=0), scorer
        )
        assert np.array_equal(trained.layer.weights, before)

    def test_marker_token_corpus_ranks_relevant_first(self):
        # relevant turns contain a dedicated marker token; after training,
        # the relevant turn outranks the irrelevant in nearly every pair
        table = EmbeddingTable.build(
            {f"w{i}" for i in range(20)} | {"marker"}, dim=16, seed=0
        )
        rng = np.random.default_rng(0)
        rows = []
        pairs = []
        for i in range(120):
            filler = [f"w{rng.integers(0, 20)}" for _ in range(4)]
            relevant = represent(
                HistoryItem("r", " ".join(filler[:2] + ["marker"]), ""), table
            )
            irrelevant = represent(HistoryItem("i", " ".join(filler), ""), table)
            rows.append((relevant.vector, 1))
            rows.append((irrelevant.vector, 0))
            pairs.append((relevant, irrelevant))
        config = TrainConfig(
            learning_rate=0.3, max_epochs=30, dropout_rate=0.0, seed=0, batch_size=16
        )
        scorer = train_attention(rows, 16, config)
        wins = sum(
            1
            for rel, irr in pairs
            if rerank([rel, irr], scorer).kept[0].turn_id == "r"
        )
        assert wins / len(pairs) >= 0.95

    def test_same_seed_identical_weights(self):
        rows = [(np.ones(4), 1), (np.zeros(4), 0)] * 5
        config = TrainConfig(learning_rate=0.1, max_epochs=5, seed=3)
        a = train_attention(rows, 4, config)
        b = train_attention(rows, 4, config)
        assert np.array_equal(a.layer.weights, b.layer.weights)

    def test_empty_rows_rejected(self):
        with pytest.raises(SelectionError):
            train_attention([], 4, TrainConfig())
