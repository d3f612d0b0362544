"""
LDA topic models at several granularities, trained and applied by collapsed Gibbs sampling.
"""
import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from numba import njit
from scipy.special import gammaln

from errors import EmptyCorpusError, ModelFileError
from modelio import read_blob, write_blob

logger = logging.getLogger(__name__)


# --- CONFIGURATION ---
@dataclass(frozen=True)
class LdaConfig:
    alpha: float = 0.5
    beta: float = 0.01
    iters: int = 1000
    infer_iters: int = 20
    infer_average: int = 5  # sweeps averaged at inference; 1 = single final sample
    seed: int = 0
    likelihood_every: int = 10


# --- DOMAIN TYPES ---
@dataclass(frozen=True, eq=False)
class TopicModel:
    K: int
    alpha: float
    beta: float
    phi: np.ndarray  # K x d, rows sum to 1
    train_iters: int
    infer_iters: int
    seed: int
    infer_average: int = 5
    loglik_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"a topic model needs K >= 2, got {self.K}")
        if self.infer_iters < 1:
            raise ValueError(f"inference needs at least one Gibbs sweep, got {self.infer_iters}")
        # word-major copy for the inference kernel
        object.__setattr__(self, '_phi_wk', np.ascontiguousarray(self.phi.T))

    @property
    def d(self):
        return self.phi.shape[1]

    @property
    def k_exceeds_d(self):
        return self.K > self.d


@dataclass(frozen=True, eq=False)
class TopicModelBank:
    models: list

    def __post_init__(self):
        Ks = [m.K for m in self.models]
        if any(b <= a for a, b in zip(Ks, Ks[1:])):
            raise ValueError(f"bank K values must be strictly increasing, got {Ks}")

    @property
    def Ks(self):
        return [m.K for m in self.models]

    def get(self, K):
        for m in self.models:
            if m.K == K:
                return m
        raise KeyError(f"no topic model with K={K} in bank {self.Ks}")

    def __len__(self):
        return len(self.models)


# --- SAMPLING KERNELS ---
@njit(cache=True)
def _train_sweep(words, doc_of, z, n_dk, n_wk, n_k, alpha, beta, beta_sum, uniforms):
    K = n_k.shape[0]
    cum = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        d = doc_of[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_wk[w, k] -= 1
        n_k[k] -= 1
        total = 0.0
        for t in range(K):
            total += (n_dk[d, t] + alpha) * (n_wk[w, t] + beta) / (n_k[t] + beta_sum)
            cum[t] = total
        u = uniforms[i] * total
        k = 0
        while k < K - 1 and cum[k] <= u:
            k += 1
        z[i] = k
        n_dk[d, k] += 1
        n_wk[w, k] += 1
        n_k[k] += 1


@njit(cache=True)
def _infer_sweep(words, z, n_k, phi_wk, alpha, uniforms):
    K = n_k.shape[0]
    cum = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        k = z[i]
        n_k[k] -= 1
        total = 0.0
        for t in range(K):
            total += (n_k[t] + alpha) * phi_wk[w, t]
            cum[t] = total
        u = uniforms[i] * total
        k = 0
        while k < K - 1 and cum[k] <= u:
            k += 1
        z[i] = k
        n_k[k] += 1


def _tokens(doc, d=None):
    """Expand a count vector into a flat array of word ids (OOV ids >= d dropped)."""
    ids, counts = doc.term_ids, np.rint(doc.weights).astype(np.int64)
    if d is not None:
        keep = ids < d
        ids, counts = ids[keep], counts[keep]
    return np.repeat(ids, counts)


def _log_likelihood(n_wk, n_k, beta):
    d = n_wk.shape[0]
    K = n_k.shape[0]
    return float(K * (gammaln(d * beta) - d * gammaln(beta))
                 + gammaln(n_wk + beta).sum() - gammaln(n_k + d * beta).sum())


# --- TRAINING ---
def train_lda(c, K, config=LdaConfig()):
    """Collapsed Gibbs LDA; phi[k][w] = (n_kw + beta) / (n_k + d * beta) from the final counts."""
    if c.n == 0:
        raise EmptyCorpusError("cannot train a topic model on an empty corpus")
    if c.weighting != 'count':
        raise ValueError("topic models are trained on raw term counts, not tf-idf weights")
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    d = c.d
    if K > d:
        logger.warning(f"K={K} exceeds the vocabulary size d={d}; proceeding")

    words, doc_of = [], []
    for j, doc in enumerate(c.docs):
        toks = _tokens(doc)
        if len(toks) == 0:
            continue
        words.append(toks)
        doc_of.append(np.full(len(toks), j, dtype=np.int64))
    words = np.concatenate(words) if words else np.zeros(0, dtype=np.int64)
    doc_of = np.concatenate(doc_of) if doc_of else np.zeros(0, dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    z = rng.integers(K, size=len(words)).astype(np.int64)
    n_dk = np.zeros((c.n, K), dtype=np.int64)
    n_wk = np.zeros((d, K), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_wk, (words, z), 1)
    n_k = np.bincount(z, minlength=K).astype(np.int64)

    start = time.time()
    trace = []
    beta_sum = d * config.beta
    every = max(1, config.likelihood_every)
    for sweep in range(config.iters):
        uniforms = rng.random(len(words))
        _train_sweep(words, doc_of, z, n_dk, n_wk, n_k, config.alpha, config.beta, beta_sum, uniforms)
        if sweep % every == 0 or sweep == config.iters - 1:
            trace.append(_log_likelihood(n_wk, n_k, config.beta))

    phi = (n_wk.T + config.beta) / (n_k[:, None] + beta_sum)
    logger.info(f"Trained LDA K={K} on {len(words)} tokens, {config.iters} sweeps in {time.time() - start:.1f}s")
    return TopicModel(
        K=K, alpha=config.alpha, beta=config.beta, phi=phi,
        train_iters=config.iters, infer_iters=config.infer_iters, seed=config.seed,
        infer_average=config.infer_average, loglik_trace=np.array(trace),
    )


def train_bank(c, Ks, config=LdaConfig(), workers=1):
    """One model per K, each seeded with config.seed + K."""
    if len(set(Ks)) != len(Ks):
        raise ValueError(f"candidate topic numbers must be unique, got {list(Ks)}")
    Ks = sorted(Ks)
    configs = [replace(config, seed=config.seed + K) for K in Ks]
    models = Parallel(n_jobs=workers)(delayed(train_lda)(c, K, cfg) for K, cfg in zip(Ks, configs))
    return TopicModelBank(list(models))


# --- INFERENCE ---
def infer_theta(m, x, seed=None, iters=None, average=None):
    """Topic distribution of one document with phi held fixed.

    theta[k] = (n_k + alpha) / (len + K * alpha), n_k averaged over the last `average` sweeps.
    Empty or all-OOV documents get the uniform distribution.
    """
    words = _tokens(x, m.d)
    if len(words) == 0:
        return np.full(m.K, 1.0 / m.K)

    r = m.infer_iters if iters is None else iters
    keep = max(1, min(m.infer_average if average is None else average, r))
    rng = np.random.default_rng(m.seed if seed is None else seed)
    z = rng.integers(m.K, size=len(words)).astype(np.int64)
    n_k = np.bincount(z, minlength=m.K).astype(np.int64)
    acc = np.zeros(m.K)
    for sweep in range(r):
        uniforms = rng.random(len(words))
        _infer_sweep(words, z, n_k, m._phi_wk, m.alpha, uniforms)
        if sweep >= r - keep:
            acc += n_k
    return (acc / keep + m.alpha) / (len(words) + m.K * m.alpha)


def infer_multi(models, x, seed=None):
    return [infer_theta(m, x, seed) for m in models]


def infer_corpus(m, c, seed=None):
    """n x K matrix of per-document topic distributions."""
    return np.vstack([infer_theta(m, doc, seed) for doc in c.docs]) if c.n else np.zeros((0, m.K))


def top_words(m, terms, count=10):
    return [[terms[w] for w in np.argsort(-row, kind='stable')[:count]] for row in m.phi]


# --- PERSISTENCE ---
def save_model(m, path, terms=None):
    header = {
        'K': m.K, 'alpha': m.alpha, 'beta': m.beta, 'd': m.d, 'seed': m.seed,
        'train_iters': m.train_iters, 'infer_iters': m.infer_iters, 'infer_average': m.infer_average,
    }
    write_blob(path, 'lda', header, {'phi': m.phi, 'loglik_trace': m.loglik_trace})
    if terms is not None:
        with open(f"{path}.topwords.txt", 'w', encoding='utf-8') as f:
            for k, words in enumerate(top_words(m, terms)):
                f.write(f"topic {k}: {' '.join(words)}\n")


def load_model(path):
    header, arrays = read_blob(path, 'lda')
    return TopicModel(
        K=header['K'], alpha=header['alpha'], beta=header['beta'], phi=arrays['phi'],
        train_iters=header['train_iters'], infer_iters=header['infer_iters'], seed=header['seed'],
        infer_average=header['infer_average'], loglik_trace=arrays['loglik_trace'],
    )


def model_filename(K):
    return f"lda_K{K:04d}.bin"


def save_bank(bank, directory, terms=None):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for m in bank.models:
        path = os.path.join(directory, model_filename(m.K))
        save_model(m, path, terms)
        paths.append(path)
    return paths


def load_bank(directory, Ks=None):
    if not os.path.isdir(directory):
        raise ModelFileError(directory, "topic model directory not found")
    if Ks is None:
        names = sorted(f for f in os.listdir(directory) if f.startswith('lda_K') and f.endswith('.bin'))
    else:
        names = [model_filename(K) for K in sorted(Ks)]
    models = [load_model(os.path.join(directory, name)) for name in names]
    return TopicModelBank(sorted(models, key=lambda m: m.K))
