import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import greedy_topic_match, synthetic_topics
from snipsearch.errors import ArtifactMismatchError, InvalidInputError
from snipsearch.topics import TopicModel, infer_theta, topic_similarity, train_lda

DOCS = [["bab", "bad", "bab"], ["dik", "dim"], [], ["bab", "dim", "dik", "dim"]]


@pytest.fixture(scope="module")
def synthetic():
    docs, phi, vocab = synthetic_topics(seed=0)
    model = train_lda(docs, n_topics=3, iterations=200, seed=1)
    dist = model.topic_term_dist()
    # generator words that were never sampled have no column; they contribute 0
    recovered = np.zeros_like(phi)
    for i, w in enumerate(vocab):
        if w in model.vocab:
            recovered[:, i] = dist[:, model.vocab.index(w)]
    match = greedy_topic_match(recovered, phi)
    return model, phi, vocab, match


class TestTrain:
    def test_single_topic(self):
        model = train_lda(DOCS, n_topics=1, iterations=5)
        assert np.allclose(model.theta, 1.0)

    def test_theta_columns_are_distributions(self):
        model = train_lda(DOCS, n_topics=4, iterations=10, seed=3)
        assert model.theta.shape == (4, len(DOCS))
        assert np.all(model.theta >= 0)
        assert np.allclose(model.theta.sum(axis=0), 1.0, atol=1e-9)
        # an empty document gets the prior, which is uniform
        assert np.allclose(model.theta[:, 2], 0.25)

    def test_counts_reconcile_every_sweep(self):
        seen = []

        def check(state):
            n_tokens = state.words.shape[0]
            assert state.n_dk.sum() == n_tokens
            assert np.array_equal(state.n_k, state.n_kw.sum(axis=1))
            rebuilt = np.zeros_like(state.n_kw)
            np.add.at(rebuilt, (state.z, state.words), 1)
            assert np.array_equal(rebuilt, state.n_kw)
            assert np.all(state.n_kw >= 0)
            seen.append(state.sweep)

        train_lda(DOCS, n_topics=3, iterations=15, seed=2, on_sweep=check)
        assert seen == list(range(16))

    def test_topic_totals_match_counts(self):
        model = train_lda(DOCS, n_topics=3, iterations=5)
        assert model.topic_term.dtype.kind == "i"
        assert np.array_equal(model.topic_totals, model.topic_term.sum(axis=1))

    def test_deterministic(self):
        docs, _, _ = synthetic_topics(seed=4, n_docs=20, doc_len=30)
        a = train_lda(docs, n_topics=5, iterations=20, seed=9)
        b = train_lda(docs, n_topics=5, iterations=20, seed=9)
        c = train_lda(docs, n_topics=5, iterations=20, seed=10)
        assert np.array_equal(a.theta, b.theta)
        assert a.to_json() == b.to_json()
        assert not np.array_equal(a.theta, c.theta)

    def test_default_alpha(self):
        assert train_lda(DOCS, n_topics=10, iterations=1).alpha == 5.0

    @pytest.mark.parametrize("kwargs", [{"n_topics": 0}, {"iterations": 0}])
    def test_bad_parameters(self, kwargs):
        with pytest.raises(InvalidInputError):
            train_lda(DOCS, **kwargs)

    def test_empty_corpus(self):
        with pytest.raises(InvalidInputError):
            train_lda([[], []], n_topics=2)

    def test_recovers_synthetic_topics(self, synthetic):
        _, _, _, match = synthetic
        assert len(match) == 3
        for _, cosine in match.values():
            assert cosine >= 0.8


class TestInfer:
    def test_empty_and_oov_uniform(self):
        model = train_lda(DOCS, n_topics=4, iterations=5)
        assert np.allclose(infer_theta(model, []), 0.25)
        assert np.allclose(infer_theta(model, ["zzz", "qqq"]), 0.25)

    def test_single_topic(self):
        model = train_lda(DOCS, n_topics=1, iterations=5)
        assert np.array_equal(infer_theta(model, ["bab"]), [1.0])

    def test_is_distribution_and_deterministic(self):
        model = train_lda(DOCS, n_topics=3, iterations=10)
        a = infer_theta(model, ["bab", "dim", "nope"], seed=5)
        assert a.shape == (3,) and np.all(a >= 0)
        assert a.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(a, infer_theta(model, ["bab", "dim", "nope"], seed=5))

    def test_exclusive_terms_pick_matched_topic(self, synthetic):
        model, phi, vocab, match = synthetic
        for j in range(3):
            words = [vocab[i] for i in np.argsort(-phi[j])[:5]]
            theta = infer_theta(model, words * 2, seed=j)
            assert int(np.argmax(theta)) == match[j][0]


class TestSimilarity:
    def test_examples(self):
        assert topic_similarity([0.5, 0.5], [0.5, 0.5]) == pytest.approx(1.0)
        assert topic_similarity([1, 0], [0, 1]) == 0.0
        assert topic_similarity([0.5, 0.5], [1, 0]) == pytest.approx(0.7071, abs=1e-4)
        assert topic_similarity([0, 0], [1, 0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            topic_similarity([1, 0], [1, 0, 0])

    @given(
        st.lists(st.floats(0, 1), min_size=1, max_size=10).flatmap(
            lambda a: st.tuples(st.just(a), st.lists(st.floats(0, 1), min_size=len(a), max_size=len(a)))
        )
    )
    def test_symmetric_and_bounded(self, pair):
        a, b = pair
        s = topic_similarity(a, b)
        assert 0.0 <= s <= 1.0
        assert s == topic_similarity(b, a)


class TestSerialization:
    def test_roundtrip(self):
        model = train_lda(DOCS, n_topics=3, iterations=5, seed=1, doc_ids=["a", "b", "c", "d"])
        back = TopicModel.from_json(model.to_json())
        assert back.to_json() == model.to_json()
        assert np.array_equal(back.doc_theta("b"), model.doc_theta("b"))
        assert np.array_equal(infer_theta(back, ["bab"], seed=2), infer_theta(model, ["bab"], seed=2))

    def test_rejects_other_files(self):
        with pytest.raises(ArtifactMismatchError):
            TopicModel.from_json('{"magic": "x"}')
        with pytest.raises(InvalidInputError):
            TopicModel.from_json("{")

    def test_unknown_doc(self):
        with pytest.raises(InvalidInputError):
            train_lda(DOCS, n_topics=2, iterations=1).doc_theta("zz")
