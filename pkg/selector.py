"""
Optimal granularity selection: Relief-style weighting of candidate topic models by how well
their topic distributions separate tag-sharing neighbours from non-sharing ones.
"""
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.preprocessing import normalize

from corpus import tag_matrix, tfidf_transform, to_csr
from errors import ModelFileError, SelectionError
from topics import infer_corpus

logger = logging.getLogger(__name__)


# --- DOMAIN TYPES ---
@dataclass(frozen=True)
class GranularityWeights:
    weights: dict  # K -> mu(T_K)
    m: int
    k: int
    sampled: int = 0


@dataclass(frozen=True)
class SelectionResult:
    Ks: list  # chosen topic numbers, heaviest first
    mu: list
    mu_hat: list
    uniform_fallback: bool = False  # chosen weights were not all positive

    @property
    def M(self):
        return len(self.Ks)

    @property
    def K_tilde(self):
        return sum(self.Ks)

    def models(self, bank):
        return [bank.get(K) for K in self.Ks]

    def uniform(self):
        """Same granularities with every balance weight fixed to 1."""
        return SelectionResult(list(self.Ks), list(self.mu), [1.0] * len(self.Ks), self.uniform_fallback)


# --- DIVERGENCE ---
def symmetric_kl(p, q):
    """1/2 * sum_k [p_k ln(p_k/q_k) + q_k ln(q_k/p_k)] for strictly positive distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distributions differ in length: {p.shape} vs {q.shape}")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("symmetric KL needs strictly positive distributions")
    return float(0.5 * np.sum((p - q) * (np.log(p) - np.log(q))))


def _symmetric_kl_rows(p, Q):
    return 0.5 * np.sum((p - Q) * (np.log(p) - np.log(Q)), axis=1)


def _nearest(sims, mask, k):
    """Up to k candidate indices under `mask`, most similar first, ties by index."""
    candidates = np.flatnonzero(mask)
    order = np.lexsort((candidates, -sims[candidates]))
    return candidates[order[:k]]


def _stratified_sample(c, m, rng):
    sampled = set()
    for tag in range(c.q):
        members = np.array([i for i, t in enumerate(c.tags) if tag in t], dtype=np.int64)
        if len(members) > m:
            members = rng.choice(members, size=m, replace=False)
        sampled.update(members.tolist())
    return np.array(sorted(sampled), dtype=np.int64)


# --- OPERATIONS ---
def relief_weights(c, bank, m=100, k=10, seed=0, thetas=None, keyword=None):
    """Score every candidate model: mean divergence to misses minus mean divergence to hits.

    `c` is the count-weighted training corpus (with tags); neighbours are found by cosine in
    `keyword` space (tf-idf of `c` unless given). `thetas` may hold the n x K topic matrices
    of each bank model, in bank order, to avoid re-running inference.
    """
    if not c.has_tags():
        raise SelectionError("granularity selection needs a tagged corpus; no document has tags")
    if thetas is None:
        thetas = [infer_corpus(model, c) for model in bank.models]
    if keyword is None:
        keyword = tfidf_transform(c)

    rng = np.random.default_rng(seed)
    sampled = _stratified_sample(c, m, rng)
    X = normalize(to_csr(keyword))
    T = tag_matrix(c.tags, c.q)
    sims = (X[sampled] @ X.T).toarray()
    share = (T[sampled] @ T.T).toarray() > 0

    totals = np.zeros(len(bank.models))
    short = 0
    for row, i in enumerate(sampled):
        others = np.ones(c.n, dtype=bool)
        others[i] = False
        hits = _nearest(sims[row], share[row] & others, k)
        misses = _nearest(sims[row], ~share[row] & others, k)
        if len(hits) < k or len(misses) < k:
            short += 1
        for j, theta in enumerate(thetas):
            if len(misses):
                totals[j] += _symmetric_kl_rows(theta[i], theta[misses]).mean()
            if len(hits):
                totals[j] -= _symmetric_kl_rows(theta[i], theta[hits]).mean()

    if short:
        logger.warning(f"{short} of {len(sampled)} sampled documents had fewer than {k} hits or misses")
    weights = {model.K: float(w) for model, w in zip(bank.models, totals)}
    logger.info(f"Relief weights over {len(sampled)} sampled texts: "
                + ", ".join(f"K={K}: {w:.4f}" for K, w in weights.items()))
    return GranularityWeights(weights, m, k, len(sampled))


def select_top(w, M):
    """Greedy top-M by weight (ties: smaller K first); mu_hat = mu / min(chosen mu)."""
    N = len(w.weights)
    if M < 1 or M > N:
        raise SelectionError(f"cannot choose M={M} granularities out of {N} candidates")
    ranked = sorted(w.weights.items(), key=lambda kv: (-kv[1], kv[0]))[:M]
    Ks = [K for K, _ in ranked]
    mu = [float(v) for _, v in ranked]
    low = min(mu)
    fallback = low <= 0
    if fallback:
        logger.warning(f"smallest chosen Relief weight is {low:.4g}; using uniform balance weights")
        mu_hat = [1.0] * M
    else:
        mu_hat = [v / low for v in mu]
    return SelectionResult(Ks, mu, mu_hat, fallback)


def fixed_selection(Ks, mu_hat=None):
    """A selection given by hand, e.g. a single granularity or a manual combination."""
    Ks = [int(K) for K in Ks]
    if len(set(Ks)) != len(Ks) or not Ks:
        raise SelectionError(f"fixed granularities must be unique and non-empty, got {Ks}")
    mu_hat = [1.0] * len(Ks) if mu_hat is None else [float(v) for v in mu_hat]
    return SelectionResult(Ks, list(mu_hat), mu_hat)


# --- PERSISTENCE ---
def save_selection(sel, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"chosen={','.join(str(K) for K in sel.Ks)}\n")
        f.write(f"mu={','.join(repr(v) for v in sel.mu)}\n")
        f.write(f"mu_hat={','.join(repr(v) for v in sel.mu_hat)}\n")
        f.write(f"uniform_fallback={int(sel.uniform_fallback)}\n")


def load_selection(path):
    try:
        with open(path, encoding='utf-8') as f:
            values = dict(line.rstrip('\n').split('=', 1) for line in f if '=' in line)
    except FileNotFoundError:
        raise ModelFileError(path, "selection file not found")
    return SelectionResult(
        [int(v) for v in values['chosen'].split(',')],
        [float(v) for v in values['mu'].split(',')],
        [float(v) for v in values['mu_hat'].split(',')],
        values.get('uniform_fallback', '0') == '1',
    )
