import numpy as np
import pytest

from conftest import class_hamming_gap
from corpus import Corpus, SparseDocVector
from fuse_feature import (LinearHashFunction, encode_fea, encode_fea_corpus, fit_codes_fea, fuse, fuse_matrix,
                          load_fea, save_fea, train_fea, train_hash_fn)
from retrieval import unpack_codes
from selector import fixed_selection


@pytest.fixture(scope='module')
def selection():
    return fixed_selection([2, 4, 8], [1.0, 2.0, 1.5])


@pytest.fixture(scope='module')
def thetas(selection, planted_thetas):
    return [planted_thetas[K] for K in selection.Ks]


@pytest.fixture(scope='module')
def fea(planted, planted_bank, selection, thetas):
    return train_fea(planted, selection, planted_bank, l=4, k=10, thetas=thetas)


class TestFuse:
    def test_single_view_is_unchanged(self):
        theta = np.array([0.2, 0.3, 0.5])
        assert fuse([theta], [1.0]).tolist() == theta.tolist()

    def test_length_is_total_topics(self):
        thetas = [np.full(K, 1.0 / K) for K in (10, 30, 50)]
        assert len(fuse(thetas, [1.0, 1.0, 1.0])) == 90

    def test_segment_sums_are_balance_weights(self):
        thetas = [np.full(K, 1.0 / K) for K in (10, 30, 50)]
        omega = fuse(thetas, [3.44, 1.7, 1.0])
        sums = [omega[:10].sum(), omega[10:40].sum(), omega[40:].sum()]
        assert sums == pytest.approx([3.44, 1.7, 1.0], abs=1e-6)

    def test_linear_in_the_topic_vectors(self):
        rng = np.random.default_rng(0)
        thetas = [rng.dirichlet(np.ones(K)) for K in (3, 5)]
        scaled = fuse([2.5 * t for t in thetas], [1.0, 2.0])
        assert np.allclose(scaled, 2.5 * fuse(thetas, [1.0, 2.0]))

    def test_matrix_rows_match_vectors(self, thetas, selection):
        Omega = fuse_matrix(thetas, selection.mu_hat)
        assert Omega.shape == (thetas[0].shape[0], selection.K_tilde)
        assert np.allclose(Omega[7], fuse([t[7] for t in thetas], selection.mu_hat))

    def test_mismatch(self):
        with pytest.raises(ValueError):
            fuse([np.ones(2)], [1.0, 1.0])


class TestHashFunction:
    def test_separable_bits_are_learned_exactly(self):
        rng = np.random.default_rng(1)
        X = np.vstack([rng.uniform(1, 3, size=(20, 2)), rng.uniform(-3, -1, size=(20, 2))])
        X[::2, 1] *= -1
        codes = np.column_stack([np.sign(X[:, 0]), np.sign(X[:, 1])]).astype(np.int8)
        h = train_hash_fn(X, codes)
        assert h.train_accuracy.tolist() == [1.0, 1.0]
        assert np.array_equal(h.predict(X), codes)

    def test_constant_bit_gives_constant_predictor(self, caplog):
        X = np.random.default_rng(2).standard_normal((10, 3))
        codes = np.column_stack([np.ones(10), np.r_[np.ones(5), -np.ones(5)]]).astype(np.int8)
        h = train_hash_fn(X, codes)
        assert np.all(h.predict(X)[:, 0] == 1)
        assert np.all(h.W[:, 0] == 0)
        assert h.constant_bits == [0]
        assert "constant" in caplog.text

    def test_zero_weights_map_to_plus_one(self):
        h = LinearHashFunction(np.zeros((4, 3)), np.zeros(3))
        assert h.predict(np.ones(4)).tolist() == [[1, 1, 1]]

    def test_regularization_sweep_and_no_bias(self):
        X = np.random.default_rng(3).standard_normal((30, 4))
        codes = np.where(X[:, :2] > 0, 1, -1).astype(np.int8)
        for C in (0.1, 1.0, 10.0):
            h = train_hash_fn(X, codes, C=C, use_bias=False)
            assert np.all(h.bias == 0) and np.all(np.isfinite(h.W))

    def test_parallel_matches_serial(self):
        X = np.random.default_rng(4).standard_normal((40, 5))
        codes = np.where(X[:, :3] > 0.1, 1, -1).astype(np.int8)
        a, b = train_hash_fn(X, codes, workers=1), train_hash_fn(X, codes, workers=2)
        assert np.array_equal(a.W, b.W) and np.array_equal(a.bias, b.bias)

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            train_hash_fn(np.zeros((3, 2)), np.ones((4, 1), dtype=np.int8))


class TestFitCodes:
    def test_planted_classes_are_closer_within(self, planted, planted_bank, selection, thetas):
        codes, embedding, omegas = fit_codes_fea(planted, selection, planted_bank, 4, k=10, thetas=thetas)
        within, between = class_hamming_gap(codes.bits, planted.tags)
        assert within < between
        assert omegas.shape == (planted.n, 14)
        assert embedding.Y.shape == (planted.n, 4)

    def test_codes_are_balanced(self, fea):
        bits = fea[1].bits
        assert np.all(np.abs(bits.sum(axis=0)) <= 1)

    def test_tiny_corpus(self, planted, planted_bank, selection, thetas):
        small = Corpus(planted.docs[:3], planted.tags[:3], planted.vocab, planted.tag_names)
        codes, embedding, _ = fit_codes_fea(small, selection, planted_bank, 2, k=2, thetas=[t[:3] for t in thetas])
        assert codes.bits.shape == (3, 2)
        assert set(np.unique(codes.bits).tolist()) <= {-1, 1}
        assert np.all(np.abs(codes.bits.astype(int).sum(axis=0)) <= 1)
        assert embedding.Y.shape == (3, 2)
        with pytest.raises(ValueError):
            fit_codes_fea(small, selection, planted_bank, 3, k=2, thetas=[t[:3] for t in thetas])
        codes, _, _ = fit_codes_fea(small, selection, planted_bank, 1, k=2, thetas=[t[:3] for t in thetas])
        assert codes.bits.shape == (3, 1)
        assert abs(int(codes.bits.sum())) <= 1


class TestEncode:
    def test_frozen_encoding_matches_classifier_accuracy(self, fea, planted):
        model, codes, _ = fea
        frozen = np.vstack([unpack_codes(encode_fea(model, doc, frozen_index=i).words, model.l)
                            for i, doc in enumerate(planted.docs)])
        agreement = np.mean(frozen == codes.bits)
        assert agreement >= model.hash_fn.train_accuracy.mean() - 0.02

    def test_deterministic(self, fea, planted):
        model = fea[0]
        assert encode_fea(model, planted.docs[5]) == encode_fea(model, planted.docs[5])

    def test_empty_document(self, fea):
        code = encode_fea(fea[0], SparseDocVector.empty())
        assert code.l == 4

    def test_corpus_encoding_matches_single(self, fea, planted_test):
        model = fea[0]
        words, bits = encode_fea_corpus(model, planted_test)
        assert words.shape == (planted_test.n, 1)
        assert encode_fea(model, planted_test.docs[2]).bits().tolist() == bits[2].tolist()

    def test_keyword_input_space(self, planted, planted_bank, selection, thetas):
        model, _, _ = train_fea(planted, selection, planted_bank, l=4, k=10, input_space='keywords',
                                thetas=thetas)
        assert model.hash_fn.W.shape == (planted.d, 4)
        assert encode_fea(model, planted.docs[0]).l == 4


def test_model_file_roundtrip(fea, planted_bank, planted, tmp_path):
    model = fea[0]
    path = tmp_path / "hash.bin"
    save_fea(model, str(path))
    loaded = load_fea(str(path), planted_bank)
    assert loaded.Ks == model.Ks and loaded.mu_hat == model.mu_hat
    assert np.array_equal(loaded.hash_fn.W, model.hash_fn.W)
    assert encode_fea(loaded, planted.docs[1]) == encode_fea(model, planted.docs[1])
