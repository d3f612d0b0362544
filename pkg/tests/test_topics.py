import numpy as np
import pytest

from corpus import Corpus, SparseDocVector
from errors import ModelFileError
from topics import (LdaConfig, TopicModel, TopicModelBank, infer_corpus, infer_multi, infer_theta, load_bank,
                    load_model, save_bank, save_model, top_words, train_bank, train_lda)

from conftest import FAST_LDA


def _two_cluster_corpus(n=60, seed=0):
    """Words 0-9 form cluster A, words 10-19 cluster B; each doc draws from one cluster."""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n):
        base = 0 if i % 2 == 0 else 10
        words = rng.integers(base, base + 10, size=12)
        docs.append(SparseDocVector.from_pairs((w, 1) for w in words))
    vocab = {f"w{i:02d}": i for i in range(20)}
    return Corpus(docs, [frozenset()] * n, vocab, [])


@pytest.fixture(scope='module')
def clusters():
    return _two_cluster_corpus()


@pytest.fixture(scope='module')
def two_topic_model(clusters):
    return train_lda(clusters, 2, LdaConfig(iters=200, seed=1))


class TestTrainLda:
    def test_defaults(self):
        cfg = LdaConfig()
        assert (cfg.alpha, cfg.beta, cfg.iters, cfg.infer_iters, cfg.infer_average) == (0.5, 0.01, 1000, 20, 5)

    def test_planted_clusters_are_recovered(self, two_topic_model):
        for row in two_topic_model.phi:
            top = np.argsort(-row)[:5]
            purity = max(np.mean(top < 10), np.mean(top >= 10))
            assert purity >= 0.9

    def test_phi_rows_sum_to_one(self, two_topic_model):
        assert np.allclose(two_topic_model.phi.sum(axis=1), 1.0, atol=1e-6)

    def test_single_document_corpus(self):
        c = Corpus([SparseDocVector.from_pairs([(0, 2), (1, 1)])], [frozenset()], {"a": 0, "b": 1, "c": 2}, [])
        m = train_lda(c, 2, LdaConfig(iters=5))
        assert m.phi.shape == (2, 3)
        assert np.allclose(m.phi.sum(axis=1), 1.0, atol=1e-6)

    def test_k_larger_than_vocabulary_warns(self, caplog):
        c = Corpus([SparseDocVector.from_pairs([(0, 1), (1, 1)])], [frozenset()], {"a": 0, "b": 1}, [])
        m = train_lda(c, 4, LdaConfig(iters=3))
        assert m.K == 4 and m.k_exceeds_d
        assert "exceeds the vocabulary size" in caplog.text
        assert not train_lda(c, 2, LdaConfig(iters=3)).k_exceeds_d

    def test_empty_documents_are_skipped(self):
        docs = [SparseDocVector.empty(), SparseDocVector.from_pairs([(0, 3)])]
        c = Corpus(docs, [frozenset()] * 2, {"a": 0, "b": 1}, [])
        assert np.allclose(train_lda(c, 2, LdaConfig(iters=3)).phi.sum(axis=1), 1.0)

    def test_rejects_small_k_and_tfidf(self, clusters):
        with pytest.raises(ValueError):
            train_lda(clusters, 1, FAST_LDA)
        tfidf = Corpus(clusters.docs, clusters.tags, clusters.vocab, [], 'tfidf')
        with pytest.raises(ValueError):
            train_lda(tfidf, 2, FAST_LDA)

    def test_bitwise_reproducible(self, clusters):
        a = train_lda(clusters, 3, FAST_LDA)
        b = train_lda(clusters, 3, FAST_LDA)
        assert np.array_equal(a.phi, b.phi)

    def test_log_likelihood_trends_up(self, clusters):
        m = train_lda(clusters, 2, LdaConfig(iters=200, likelihood_every=1, seed=2))
        trace = m.loglik_trace
        tenth = max(1, len(trace) // 10)
        assert trace[-tenth:].mean() >= trace[:tenth].mean()


class TestInference:
    def test_empty_document_is_uniform(self, two_topic_model):
        theta = infer_theta(two_topic_model, SparseDocVector.empty())
        assert np.allclose(theta, 0.5)

    def test_out_of_vocabulary_document_is_uniform(self, two_topic_model):
        theta = infer_theta(two_topic_model, SparseDocVector.from_pairs([(500, 3)]))
        assert np.allclose(theta, 0.5)

    def test_planted_document(self, two_topic_model):
        cluster_a = int(np.argmax(two_topic_model.phi[:, :10].sum(axis=1)))
        doc = SparseDocVector.from_pairs([(w, 2) for w in range(10)])
        assert infer_theta(two_topic_model, doc)[cluster_a] > 0.8

    def test_theta_is_smoothed_distribution(self, two_topic_model, clusters):
        thetas = infer_corpus(two_topic_model, clusters)
        assert np.allclose(thetas.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(thetas > 0)

    def test_deterministic(self, two_topic_model, clusters):
        x = clusters.docs[3]
        assert np.array_equal(infer_theta(two_topic_model, x), infer_theta(two_topic_model, x))

    def test_infer_multi(self, planted_bank, planted):
        assert infer_multi([], planted.docs[0]) == []
        thetas = infer_multi(planted_bank.models, planted.docs[0])
        assert [len(t) for t in thetas] == [2, 4, 8]
        again = infer_multi(planted_bank.models, planted.docs[0])
        assert all(np.array_equal(a, b) for a, b in zip(thetas, again))


class TestBank:
    def test_seeds_derived_from_k(self, clusters):
        bank = train_bank(clusters, [3, 2], FAST_LDA)
        assert bank.Ks == [2, 3]
        assert [m.seed for m in bank.models] == [FAST_LDA.seed + 2, FAST_LDA.seed + 3]

    def test_singleton(self, clusters):
        assert len(train_bank(clusters, [2], FAST_LDA)) == 1

    def test_duplicates_rejected(self, clusters):
        with pytest.raises(ValueError):
            train_bank(clusters, [2, 2], FAST_LDA)

    def test_parallel_matches_serial(self, clusters):
        serial = train_bank(clusters, [2, 3], FAST_LDA, workers=1)
        parallel = train_bank(clusters, [2, 3], FAST_LDA, workers=2)
        assert all(np.array_equal(a.phi, b.phi) for a, b in zip(serial.models, parallel.models))

    def test_bank_requires_increasing_k(self, two_topic_model):
        with pytest.raises(ValueError):
            TopicModelBank([two_topic_model, two_topic_model])

    def test_get(self, planted_bank):
        assert planted_bank.get(4).K == 4
        with pytest.raises(KeyError):
            planted_bank.get(5)


class TestPersistence:
    def test_model_roundtrip_with_sidecar(self, two_topic_model, clusters, tmp_path):
        path = tmp_path / "lda.bin"
        save_model(two_topic_model, str(path), clusters.terms())
        loaded = load_model(str(path))
        assert loaded.K == 2 and loaded.seed == two_topic_model.seed
        assert np.array_equal(loaded.phi, two_topic_model.phi)
        lines = (tmp_path / "lda.bin.topwords.txt").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2 and lines[0].startswith("topic 0:")

    def test_bank_roundtrip(self, planted_bank, tmp_path):
        save_bank(planted_bank, str(tmp_path / "topics"))
        loaded = load_bank(str(tmp_path / "topics"))
        assert loaded.Ks == planted_bank.Ks
        assert load_bank(str(tmp_path / "topics"), [4]).Ks == [4]

    def test_missing_files(self, tmp_path):
        with pytest.raises(ModelFileError):
            load_model(str(tmp_path / "nope.bin"))
        with pytest.raises(ModelFileError):
            load_bank(str(tmp_path / "nope"))

    def test_top_words(self, two_topic_model, clusters):
        words = top_words(two_topic_model, clusters.terms(), count=3)
        assert len(words) == 2 and all(len(w) == 3 for w in words)


def test_topic_model_validation():
    with pytest.raises(ValueError):
        TopicModel(K=1, alpha=0.5, beta=0.01, phi=np.ones((1, 3)) / 3, train_iters=1, infer_iters=1, seed=0)
