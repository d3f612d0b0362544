import math

import numpy as np
import pytest

from corpus import (ENGLISH_STOPWORDS, Corpus, SparseDocVector, Tokenizer, cosine, drop_tags, dump_corpus,
                    encode_text, fit_idf, load_corpus, load_vocab, save_vocab, stats, tag_matrix, tfidf_transform,
                    to_csr)
from errors import CorpusFormatError, EmptyCorpusError


def _doc(pairs):
    return SparseDocVector.from_pairs(pairs)


def _corpus(docs, tags=None, d=None):
    d = d if d is not None else max((int(doc.term_ids[-1]) for doc in docs if doc.nnz), default=-1) + 1
    vocab = {f"t{i}": i for i in range(d)}
    tags = tags or [frozenset()] * len(docs)
    q = max((max(t) for t in tags if t), default=-1) + 1
    return Corpus(docs, tags, vocab, [f"tag{i}" for i in range(q)])


class TestLoadCorpus:
    def test_two_line_file(self, jsonl):
        path = jsonl([{"text": "a b", "tags": ["x"]}, {"text": "b c", "tags": []}])
        c = load_corpus(path)
        assert c.n == 2
        assert c.d == 3
        assert [{c.tag_names[t] for t in tags} for tags in c.tags] == [{"x"}, set()]

    def test_duplicate_tokens_are_counted(self, jsonl):
        c = load_corpus(jsonl([{"text": "a a b", "tags": []}]))
        assert dict(c.docs[0].entries())[c.vocab["a"]] == 2.0
        assert c.docs[0].length == 3

    def test_eight_domain_labels(self, tmp_path):
        domains = ["business", "computers", "culture-arts", "education-science", "engineering", "health",
                   "politics-society", "sports"]
        path = tmp_path / "snippets.txt"
        path.write_text("".join(f"{d}\tsome words about {d}\n" for d in domains), encoding="utf-8")
        c = load_corpus(str(path))
        assert c.q == 8

    def test_malformed_record_names_the_line(self, jsonl):
        path = jsonl([{"text": "ok", "tags": []}])
        with open(path, "a", encoding="utf-8") as f:
            f.write("{not json\n")
        with pytest.raises(CorpusFormatError) as info:
            load_corpus(path)
        assert info.value.line == 2
        assert ":2:" in str(info.value)

    def test_missing_text_field(self, jsonl):
        with pytest.raises(CorpusFormatError):
            load_corpus(jsonl([{"tags": ["x"]}]))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(EmptyCorpusError):
            load_corpus(str(path))

    def test_unknown_terms_dropped_with_fixed_vocab(self, jsonl):
        train = load_corpus(jsonl([{"text": "a b", "tags": []}], "train.jsonl"))
        test = load_corpus(jsonl([{"text": "a z z", "tags": []}], "test.jsonl"), vocab=train.vocab)
        assert test.d == train.d
        assert test.docs[0].entries() == [(train.vocab["a"], 1.0)]

    def test_roundtrip_through_dump(self, jsonl, tmp_path):
        c = load_corpus(jsonl([{"text": "b a a", "tags": ["x", "y"]}, {"text": "c", "tags": []}]))
        out = tmp_path / "dump.jsonl"
        dump_corpus(c, str(out))
        again = load_corpus(str(out))
        assert again.vocab == c.vocab
        assert again.tag_names == c.tag_names
        assert [d.entries() for d in again.docs] == [d.entries() for d in c.docs]
        assert again.tags == c.tags


class TestTokenizer:
    def test_default_keeps_everything_but_punctuation(self):
        assert Tokenizer()("The cat, the HAT!") == ["the", "cat", "the", "hat"]

    def test_stopwords_and_stemmer(self):
        tok = Tokenizer(ENGLISH_STOPWORDS, stemmer=lambda w: w.rstrip("s"))
        assert tok("the cats and dogs") == ["cat", "dog"]

    def test_encode_text_against_vocab(self):
        doc = encode_text("b b unknown a", {"a": 0, "b": 1})
        assert doc.entries() == [(0, 1.0), (1, 2.0)]


class TestTfidf:
    def test_term_in_every_doc_is_clamped_to_zero(self):
        c = _corpus([_doc([(0, 1)]), _doc([(0, 2)])])
        idf = fit_idf(c)
        assert math.log(2 / 3) < 0
        assert idf[0] == 0.0

    def test_term_in_one_of_ten_docs(self):
        docs = [_doc([(0, 1)])] + [_doc([(1, 1)]) for _ in range(9)]
        idf = fit_idf(_corpus(docs))
        assert idf[0] == pytest.approx(1.6094, abs=1e-4)

    def test_empty_and_zeroed_documents_are_kept(self):
        c = _corpus([_doc([(0, 1)]), _doc([(0, 1)]), SparseDocVector.empty()], d=1)
        t = tfidf_transform(c)
        assert t.n == 3
        assert all(doc.nnz == 0 and doc.norm == 0.0 for doc in t.docs)
        assert t.weighting == "tfidf"

    def test_weights_are_tf_times_idf(self):
        docs = [_doc([(0, 3), (1, 1)])] + [_doc([(1, 1)]) for _ in range(4)]
        t = tfidf_transform(_corpus(docs))
        assert dict(t.docs[0].entries())[0] == pytest.approx(3 * math.log(5 / 2))

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpusError):
            tfidf_transform(_corpus([], d=2))


class TestCosine:
    def test_identical(self):
        a = _doc([(0, 1.5), (3, 2.0)])
        assert cosine(a, a) == pytest.approx(1.0)

    def test_disjoint(self):
        assert cosine(_doc([(0, 1)]), _doc([(1, 1)])) == 0.0

    def test_hand_value(self):
        assert cosine(_doc([(0, 1), (1, 1)]), _doc([(0, 1)])) == pytest.approx(0.7071, abs=1e-4)

    def test_zero_norm(self):
        assert cosine(SparseDocVector.empty(), _doc([(0, 1)])) == 0.0

    def test_symmetric_and_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = _doc(zip(rng.choice(20, 5, replace=False), rng.random(5) + 0.01))
            b = _doc(zip(rng.choice(20, 5, replace=False), rng.random(5) + 0.01))
            assert cosine(a, b) == cosine(b, a)
            assert 0.0 <= cosine(a, b) <= 1.0


class TestSparseDocVector:
    def test_invariants(self):
        doc = _doc([(5, 1.0), (2, 2.0), (5, 1.0), (7, 0.0)])
        assert doc.term_ids.tolist() == [2, 5]
        assert np.all(doc.weights > 0)
        assert doc.norm == pytest.approx(math.sqrt(8.0), rel=1e-9)


class TestStats:
    def test_mean_sparsity(self):
        c = _corpus([_doc([(0, 1), (1, 1)]), _doc([(0, 1), (1, 1), (2, 1), (3, 1)])])
        assert stats(c).avg_sparsity_s == 3.0
        assert stats(c).avg_length == 3.0

    def test_boundary_sparsity_equals_d(self):
        c = _corpus([_doc([(i, 1) for i in range(5)])], d=5)
        s = stats(c)
        assert s.avg_sparsity_s == 5 == s.d

    def test_empty_corpus_is_an_error(self):
        with pytest.raises(EmptyCorpusError):
            stats(_corpus([], d=1))


class TestMatrixViews:
    def test_to_csr_and_tag_matrix(self):
        c = _corpus([_doc([(0, 1), (2, 3)]), SparseDocVector.empty()], [frozenset({1}), frozenset()], d=3)
        X = to_csr(c).toarray()
        assert X.tolist() == [[1.0, 0.0, 3.0], [0.0, 0.0, 0.0]]
        assert tag_matrix(c.tags, c.q).toarray().tolist() == [[0.0, 1.0], [0.0, 0.0]]

    def test_drop_tags(self, planted):
        assert drop_tags(planted, 0.0).tags == planted.tags
        assert not drop_tags(planted, 1.0).has_tags()
        kept = sum(len(t) for t in drop_tags(planted, 0.6, seed=1).tags)
        assert 0 < kept < sum(len(t) for t in planted.tags)
        with pytest.raises(ValueError):
            drop_tags(planted, 1.5)


def test_vocab_file_roundtrip(tmp_path):
    vocab = {"beta": 1, "alpha": 0, "gamma": 2}
    path = tmp_path / "vocab.txt"
    save_vocab(vocab, str(path))
    assert path.read_text(encoding="utf-8").splitlines()[0] == "alpha\t0"
    assert load_vocab(str(path)) == vocab
