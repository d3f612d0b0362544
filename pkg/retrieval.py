"""
Packed binary codes, linear-scan Hamming search, the shared-tag evaluation protocol and a
random-hyperplane LSH baseline.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from sklearn.preprocessing import normalize

from corpus import tag_matrix, to_csr
from modelio import read_blob, write_blob

logger = logging.getLogger(__name__)

WORD_BITS = 64
EVAL_COLUMNS = ['bits', 'precision', 'recall', 'mp_topk', 'mp_radius', 'empty_queries']
QUERY_BLOCK = 256


# --- CODES ---
@dataclass(frozen=True, eq=False)
class HashCode:
    words: np.ndarray  # uint64, bit j of the code at word j // 64, position j % 64
    l: int

    def bits(self):
        return unpack_codes(self.words[None, :], self.l)[0]

    def __eq__(self, other):
        return isinstance(other, HashCode) and self.l == other.l and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.l, self.words.tobytes()))


def n_words(l):
    return (l + WORD_BITS - 1) // WORD_BITS


def pack_codes(bits):
    """n x l matrix in {-1, +1} -> n x ceil(l/64) uint64 words."""
    bits = np.atleast_2d(np.asarray(bits))
    n, l = bits.shape
    ones = (bits > 0).astype(np.uint64)
    words = np.zeros((n, n_words(l)), dtype=np.uint64)
    for w in range(words.shape[1]):
        chunk = ones[:, w * WORD_BITS:(w + 1) * WORD_BITS]
        shifts = np.arange(chunk.shape[1], dtype=np.uint64)
        words[:, w] = np.bitwise_or.reduce(chunk << shifts, axis=1)
    return words


def unpack_codes(words, l):
    words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
    j = np.arange(l)
    raw = (words[:, j // WORD_BITS] >> (j % WORD_BITS).astype(np.uint64)) & np.uint64(1)
    return np.where(raw == 1, 1, -1).astype(np.int8)


def to_hash_code(bits):
    bits = np.asarray(bits)
    return HashCode(pack_codes(bits)[0], bits.shape[-1])


def hamming(a, b):
    """Popcount of the XOR of two codes of equal width."""
    if a.l != b.l:
        raise ValueError(f"cannot compare a {a.l}-bit code with a {b.l}-bit code")
    return int(np.bitwise_count(a.words ^ b.words).sum())


# --- INDEX ---
@dataclass(frozen=True, eq=False)
class HammingIndex:
    codes: np.ndarray  # n x words uint64
    l: int
    doc_ids: np.ndarray = None

    def __post_init__(self):
        if self.doc_ids is None:
            object.__setattr__(self, 'doc_ids', np.arange(self.codes.shape[0]))
        if len(self.doc_ids) != self.codes.shape[0]:
            raise ValueError(f"{len(self.doc_ids)} doc ids for {self.codes.shape[0]} codes")

    @property
    def n(self):
        return self.codes.shape[0]

    def distances(self, q):
        if q.l != self.l:
            raise ValueError(f"query has {q.l} bits, index has {self.l}")
        return np.bitwise_count(self.codes ^ q.words[None, :]).sum(axis=1).astype(np.int64)


def _ranked(idx, dist, order):
    return [(int(idx.doc_ids[i]), int(dist[i])) for i in order]


def search_radius(idx, q, r):
    """All docs within Hamming distance r, sorted by (distance, doc id)."""
    if r < 0 or r > idx.l:
        raise ValueError(f"radius must be in [0, {idx.l}], got {r}")
    dist = idx.distances(q)
    hits = np.flatnonzero(dist <= r)
    order = hits[np.lexsort((idx.doc_ids[hits], dist[hits]))]
    return _ranked(idx, dist, order)


def search_topk(idx, q, K):
    """The K nearest docs, ties broken by doc id."""
    if K < 1 or K > idx.n:
        raise ValueError(f"K must be in [1, {idx.n}], got {K}")
    dist = idx.distances(q)
    order = np.lexsort((idx.doc_ids, dist))[:K]
    return _ranked(idx, dist, order)


# --- EVALUATION ---
@dataclass
class EvalRow:
    bits: int
    precision: float
    recall: float
    mp_topk: float
    mp_radius: float
    empty_queries: int
    skipped_queries: int = 0


@dataclass
class EvalReport:
    method: str = 'fea'
    rows: list = field(default_factory=list)

    def frame(self):
        return pd.DataFrame([asdict(r) for r in self.rows], columns=EVAL_COLUMNS + ['skipped_queries'])

    def to_csv(self, path):
        self.frame()[EVAL_COLUMNS].to_csv(path, index=False, float_format='%.6f')


def _distance_block(test_codes, train_codes):
    return np.bitwise_count(test_codes[:, None, :] ^ train_codes[None, :, :]).sum(axis=2)


def _query_counts(train_tags, train_codes, test_tags, test_codes, radius, topk):
    """Per tagged query: retrieved, relevant retrieved, total relevant, relevant in top-K."""
    q = max([max(t) for t in list(train_tags) + list(test_tags) if t], default=0) + 1
    T_train = tag_matrix(train_tags, q)
    tagged = np.array([i for i, t in enumerate(test_tags) if t], dtype=np.int64)
    T_test = tag_matrix([test_tags[i] for i in tagged], q)
    K = min(topk, train_codes.shape[0])

    counts = []
    for start in range(0, len(tagged), QUERY_BLOCK):
        rows = tagged[start:start + QUERY_BLOCK]
        D = _distance_block(test_codes[rows], train_codes)
        relevant = (T_test[start:start + len(rows)] @ T_train.T).toarray() > 0
        within = D <= radius
        top = np.argsort(D, axis=1, kind='stable')[:, :K]
        counts.append(np.column_stack([
            within.sum(axis=1),
            (within & relevant).sum(axis=1),
            relevant.sum(axis=1),
            np.take_along_axis(relevant, top, axis=1).sum(axis=1),
        ]))
    counts = np.vstack(counts) if counts else np.zeros((0, 4), dtype=np.int64)
    return counts, K, len(test_tags) - len(tagged)


def evaluate(train_tags, train_codes, test_tags, test_codes, l, radius=3, topk=200, pooled=False):
    """Shared-tag relevance: precision and recall within `radius`, mean precision at top-K and at `radius`.

    Precision is averaged over all tagged queries, an empty retrieval counting as 0 and tallied in
    `empty_queries`; recall is averaged over the same queries (1 when nothing in the index is relevant).
    With `pooled`, precision and recall pool counts over queries instead.
    """
    counts, K, skipped = _query_counts(train_tags, train_codes, test_tags, test_codes, radius, topk)
    if skipped:
        logger.warning(f"Skipped {skipped} untagged query documents")
    if len(counts) == 0:
        return EvalRow(l, 0.0, 0.0, 0.0, 0.0, 0, skipped)

    retrieved, hit, relevant, top_hit = (counts[:, j].astype(np.float64) for j in range(4))
    nonempty = retrieved > 0
    per_query_p = np.divide(hit, retrieved, out=np.zeros_like(hit), where=nonempty)
    per_query_r = np.divide(hit, relevant, out=np.ones_like(hit), where=relevant > 0)
    if pooled:
        precision = hit.sum() / retrieved.sum() if retrieved.sum() else 0.0
        recall = hit.sum() / relevant.sum() if relevant.sum() else 1.0
    else:
        precision = per_query_p.mean()
        recall = per_query_r.mean()
    row = EvalRow(
        bits=l,
        precision=float(precision),
        recall=float(recall),
        mp_topk=float((top_hit / K).mean()),
        mp_radius=float(per_query_p.mean()),
        empty_queries=int((~nonempty).sum()),
        skipped_queries=skipped,
    )
    logger.info(f"{l} bits: P={row.precision:.4f} R={row.recall:.4f} mP@{K}={row.mp_topk:.4f} "
                f"mP@r{radius}={row.mp_radius:.4f} ({row.empty_queries} empty)")
    return row


def pr_curve(train_tags, train_codes, test_tags, test_codes, l, pooled=False):
    """Precision and recall at every Hamming radius 0..l."""
    rows = []
    for r in range(l + 1):
        row = evaluate(train_tags, train_codes, test_tags, test_codes, l, radius=r, topk=1, pooled=pooled)
        rows.append({'radius': r, 'precision': row.precision, 'recall': row.recall})
    return pd.DataFrame(rows, columns=['radius', 'precision', 'recall'])


# --- PERSISTENCE ---
def save_codes(words, l, path):
    write_blob(path, 'codes', {'n': int(words.shape[0]), 'l': int(l)}, {'words': words})


def load_codes(path):
    header, arrays = read_blob(path, 'codes')
    return arrays['words'].astype(np.uint64), header['l']


# --- BASELINE ---
def lsh_baseline(c, l, seed=0):
    """l Gaussian random hyperplanes through the origin of the (tf-idf) keyword space.

    Returns (packed codes, LinearHashFunction).
    """
    from fuse_feature import LinearHashFunction

    rng = np.random.default_rng(seed)
    planes = LinearHashFunction(rng.standard_normal((c.d, l)), np.zeros(l))
    bits = planes.predict(normalize(to_csr(c)))
    return pack_codes(bits), planes
