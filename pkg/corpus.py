"""
Text collections with tags: loading, vocabulary, tf-idf weighting, cosine and stats.
"""
import json
import logging
import os
import string
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from errors import CorpusFormatError, EmptyCorpusError

logger = logging.getLogger(__name__)

ENGLISH_STOPWORDS = frozenset("""
a an and are as at be by for from has have in is it its of on or that the this to was were will with
""".split())


# --- DOMAIN TYPES ---
@dataclass(frozen=True)
class SparseDocVector:
    term_ids: np.ndarray
    weights: np.ndarray
    norm: float
    length: int = 0  # token count before weighting

    @classmethod
    def from_pairs(cls, pairs, length=None):
        """Build from (term_id, weight) pairs; non-positive weights are dropped."""
        merged = {}
        for term_id, weight in pairs:
            merged[int(term_id)] = merged.get(int(term_id), 0.0) + float(weight)
        ids = np.array(sorted(t for t, w in merged.items() if w > 0), dtype=np.int64)
        weights = np.array([merged[t] for t in ids], dtype=np.float64)
        if length is None:
            length = int(round(weights.sum()))
        return cls(ids, weights, float(np.sqrt(np.dot(weights, weights))), int(length))

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64), 0.0, 0)

    @property
    def nnz(self):
        return len(self.term_ids)

    def entries(self):
        return list(zip(self.term_ids.tolist(), self.weights.tolist()))


@dataclass(frozen=True)
class Corpus:
    docs: list
    tags: list  # one frozenset of tag ids per document
    vocab: dict  # term -> id
    tag_names: list = field(default_factory=list)
    weighting: str = 'count'

    def __post_init__(self):
        if len(self.docs) != len(self.tags):
            raise ValueError(f"{len(self.docs)} documents but {len(self.tags)} tag sets")
        d, q = len(self.vocab), len(self.tag_names)
        for i, doc in enumerate(self.docs):
            if doc.nnz and doc.term_ids[-1] >= d:
                raise ValueError(f"document {i} has term id {doc.term_ids[-1]} >= vocabulary size {d}")
        for i, tags in enumerate(self.tags):
            if any(t >= q or t < 0 for t in tags):
                raise ValueError(f"document {i} has a tag id outside the registry of {q} tags")

    @property
    def n(self):
        return len(self.docs)

    @property
    def d(self):
        return len(self.vocab)

    @property
    def q(self):
        return len(self.tag_names)

    def terms(self):
        """Vocabulary as a list indexed by term id."""
        out = [None] * len(self.vocab)
        for term, idx in self.vocab.items():
            out[idx] = term
        return out

    def has_tags(self):
        return any(self.tags)


@dataclass(frozen=True)
class CorpusStats:
    n: int
    d: int
    avg_sparsity_s: float
    avg_length: float


# --- TOKENIZATION ---
class Tokenizer:
    """Whitespace split, lowercase, punctuation strip and stopword removal.

    `stemmer` is any callable str -> str (e.g. nltk's PorterStemmer().stem); off by default.
    """

    def __init__(self, stopwords=(), stemmer=None):
        self.stopwords = frozenset(stopwords or ())
        self.stemmer = stemmer

    @classmethod
    def from_file(cls, path, stemmer=None):
        with open(path, encoding='utf-8') as f:
            words = [line.strip().lower() for line in f if line.strip()]
        return cls(words, stemmer)

    def __call__(self, text):
        tokens = []
        for raw in text.lower().split():
            tok = raw.strip(string.punctuation)
            if not tok or tok in self.stopwords:
                continue
            if self.stemmer is not None:
                tok = self.stemmer(tok)
            tokens.append(tok)
        return tokens


# --- LOADING ---
def _read_records(path, fmt):
    """Yield (line_no, text, tag strings) from a JSONL or TSV file."""
    with open(path, encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip('\n').rstrip('\r')
            if not line.strip():
                continue
            if fmt == 'jsonl':
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise CorpusFormatError(path, line_no, f"invalid JSON ({e.msg})")
                if not isinstance(record, dict) or not isinstance(record.get('text'), str):
                    raise CorpusFormatError(path, line_no, "record needs a string 'text' field")
                tags = record.get('tags', [])
                if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
                    raise CorpusFormatError(path, line_no, "'tags' must be an array of strings")
                yield line_no, record['text'], tags
            else:
                if '\t' not in line:
                    raise CorpusFormatError(path, line_no, "expected 'label<TAB>text'")
                label, text = line.split('\t', 1)
                tags = [t.strip() for t in label.split(',') if t.strip()]
                yield line_no, text, tags


def detect_format(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext in ('.jsonl', '.json'):
        return 'jsonl'
    if ext in ('.tsv', '.txt'):
        return 'tsv'
    raise ValueError(f"cannot infer corpus format from '{path}'; pass format='jsonl' or 'tsv'")


def load_corpus(path, format=None, vocab=None, tag_names=None, tokenizer=None):
    """Read a corpus file into a count-weighted Corpus.

    With `vocab` given (test/query time) unknown terms are dropped; otherwise the vocabulary
    is built from this file, terms sorted so ids are stable. Same for `tag_names`.
    """
    fmt = format or detect_format(path)
    if fmt not in ('jsonl', 'tsv'):
        raise ValueError(f"unknown corpus format '{fmt}'")
    tokenizer = tokenizer or Tokenizer()

    records = [(tokenizer(text), tags) for _, text, tags in _read_records(path, fmt)]
    if not records:
        raise EmptyCorpusError(f"{path}: corpus is empty")

    if vocab is None:
        vocab = {t: i for i, t in enumerate(sorted({tok for toks, _ in records for tok in toks}))}
    if tag_names is None:
        tag_names = sorted({t for _, tags in records for t in tags})
    tag_ids = {t: i for i, t in enumerate(tag_names)}

    docs, tags_out, dropped = [], [], 0
    for tokens, tags in records:
        counts = {}
        for tok in tokens:
            idx = vocab.get(tok)
            if idx is None:
                dropped += 1
                continue
            counts[idx] = counts.get(idx, 0) + 1
        docs.append(SparseDocVector.from_pairs(counts.items(), length=sum(counts.values())))
        tags_out.append(frozenset(tag_ids[t] for t in tags if t in tag_ids))

    if dropped:
        logger.debug(f"{path}: dropped {dropped} out-of-vocabulary tokens")
    logger.info(f"Loaded {len(docs)} documents from {path} (d={len(vocab)}, q={len(tag_names)})")
    return Corpus(docs, tags_out, dict(vocab), list(tag_names), 'count')


def encode_text(text, vocab, tokenizer=None):
    """Tokenize a query string against a fixed vocabulary (unknown terms dropped)."""
    tokenizer = tokenizer or Tokenizer()
    counts = {}
    for tok in tokenizer(text):
        idx = vocab.get(tok)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    return SparseDocVector.from_pairs(counts.items(), length=sum(counts.values()))


def dump_corpus(c, path):
    """Write a count-weighted corpus as JSONL that `load_corpus` reads back to an equal corpus."""
    if c.weighting != 'count':
        raise ValueError("only count-weighted corpora can be serialized as text")
    terms = c.terms()
    with open(path, 'w', encoding='utf-8') as f:
        for doc, tags in zip(c.docs, c.tags):
            words = []
            for term_id, weight in doc.entries():
                words.extend([terms[term_id]] * int(round(weight)))
            record = {'text': ' '.join(words), 'tags': sorted(c.tag_names[t] for t in tags)}
            f.write(json.dumps(record, sort_keys=True) + "\n")


def save_vocab(vocab, path):
    with open(path, 'w', encoding='utf-8') as f:
        for term, idx in sorted(vocab.items()):
            f.write(f"{term}\t{idx}\n")


def load_vocab(path):
    vocab = {}
    with open(path, encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip('\n')
            if not line:
                continue
            try:
                term, idx = line.split('\t')
                vocab[term] = int(idx)
            except ValueError:
                raise CorpusFormatError(path, line_no, "expected 'term<TAB>id'")
    return vocab


# --- WEIGHTING & SIMILARITY ---
def fit_idf(c):
    """idf(t) = max(0, ln(n / (1 + df(t))))."""
    if c.n == 0:
        raise EmptyCorpusError("cannot compute idf of an empty corpus")
    df = np.zeros(c.d, dtype=np.float64)
    for doc in c.docs:
        df[doc.term_ids] += 1
    return np.maximum(0.0, np.log(c.n / (1.0 + df)))


def apply_idf(doc, idf):
    known = doc.term_ids < len(idf)
    ids = doc.term_ids[known]
    weights = doc.weights[known] * idf[ids]
    keep = weights > 0
    ids, weights = ids[keep], weights[keep]
    return SparseDocVector(ids, weights, float(np.sqrt(np.dot(weights, weights))), doc.length)


def tfidf_transform(c, idf=None):
    """Re-weight every document by tf * idf; zero-weight terms vanish, empty docs are kept."""
    if c.n == 0:
        raise EmptyCorpusError("cannot tf-idf transform an empty corpus")
    if idf is None:
        idf = fit_idf(c)
    docs = [apply_idf(doc, idf) for doc in c.docs]
    return Corpus(docs, list(c.tags), c.vocab, c.tag_names, 'tfidf')


def cosine(a, b):
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    _, ia, ib = np.intersect1d(a.term_ids, b.term_ids, assume_unique=True, return_indices=True)
    value = float(np.dot(a.weights[ia], b.weights[ib])) / (a.norm * b.norm)
    return min(1.0, max(0.0, value))


def stats(c):
    if c.n == 0:
        raise EmptyCorpusError("no statistics for an empty corpus")
    return CorpusStats(
        n=c.n,
        d=c.d,
        avg_sparsity_s=sum(doc.nnz for doc in c.docs) / c.n,
        avg_length=sum(doc.length for doc in c.docs) / c.n,
    )


# --- MATRIX VIEWS ---
def to_csr(c, width=None):
    """Documents as an n x d CSR matrix (rows in corpus order)."""
    width = c.d if width is None else width
    indptr = np.zeros(c.n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([doc.nnz for doc in c.docs])
    indices = np.concatenate([doc.term_ids for doc in c.docs]) if c.n else np.zeros(0, dtype=np.int64)
    data = np.concatenate([doc.weights for doc in c.docs]) if c.n else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(c.n, width))


def tag_matrix(tags, q=None):
    """n x q binary CSR indicator of tag membership."""
    if q is None:
        q = max((max(t) for t in tags if t), default=-1) + 1
    rows = [i for i, t in enumerate(tags) for _ in t]
    cols = [j for t in tags for j in sorted(t)]
    data = np.ones(len(rows), dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(len(tags), max(q, 1)))


def shares_tag(a, b):
    return bool(a) and bool(b) and not a.isdisjoint(b)


def drop_tags(c, fraction, seed=0):
    """Remove each (document, tag) assignment independently with probability `fraction`."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"tag dropout fraction must be in [0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    kept = []
    for tags in c.tags:
        ordered = sorted(tags)
        keep = rng.random(len(ordered)) >= fraction
        kept.append(frozenset(t for t, k in zip(ordered, keep) if k))
    removed = sum(len(a) - len(b) for a, b in zip(c.tags, kept))
    logger.info(f"Tag dropout {fraction:.0%}: removed {removed} tag assignments")
    return Corpus(c.docs, kept, c.vocab, c.tag_names, c.weighting)


def restrict_vocab(c, vocab):
    """Re-map a corpus onto another vocabulary (terms missing from `vocab` are dropped)."""
    terms = c.terms()
    docs = []
    for doc in c.docs:
        pairs = [(vocab[terms[t]], w) for t, w in doc.entries() if terms[t] in vocab]
        docs.append(SparseDocVector.from_pairs(pairs, length=int(sum(w for _, w in pairs))))
    return Corpus(docs, list(c.tags), dict(vocab), c.tag_names, c.weighting)
