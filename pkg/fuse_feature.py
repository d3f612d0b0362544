"""
Feature-level fusion: weighted concatenation of multi-granularity topic vectors, Laplacian code
learning on the fused space, and one linear SVM per bit as the hash function.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from joblib import Parallel, delayed
from sklearn.preprocessing import normalize
from sklearn.svm import LinearSVC

from affinity import build_affinity
from corpus import apply_idf, fit_idf, tfidf_transform, to_csr
from errors import ModelFileError
from modelio import read_blob, write_blob
from retrieval import HashCode, pack_codes
from spectral import laplacian_eigenmap, median_binarize
from topics import infer_corpus, infer_multi, model_filename

logger = logging.getLogger(__name__)


def fuse(thetas, mu_hat):
    """Omega = [mu_1 theta_1 | mu_2 theta_2 | ... | mu_M theta_M]."""
    if len(thetas) != len(mu_hat):
        raise ValueError(f"{len(thetas)} topic vectors for {len(mu_hat)} balance weights")
    return np.concatenate([w * np.asarray(t, dtype=np.float64) for t, w in zip(thetas, mu_hat)])


def fuse_matrix(theta_mats, mu_hat):
    """Row-wise `fuse` for per-model n x K_i matrices."""
    if len(theta_mats) != len(mu_hat):
        raise ValueError(f"{len(theta_mats)} topic matrices for {len(mu_hat)} balance weights")
    return np.hstack([w * np.asarray(t, dtype=np.float64) for t, w in zip(theta_mats, mu_hat)])


# --- HASH FUNCTION ---
@dataclass(frozen=True, eq=False)
class LinearHashFunction:
    W: np.ndarray  # input_dim x l
    bias: np.ndarray
    train_accuracy: np.ndarray = None

    @property
    def l(self):
        return self.W.shape[1]

    @property
    def constant_bits(self):
        """Columns fitted as constant predictors (all-zero weights)."""
        return np.flatnonzero(~self.W.any(axis=0)).tolist()

    def decision(self, X):
        if not sp.issparse(X):
            X = np.atleast_2d(X)
        return np.asarray(X @ self.W) + self.bias

    def predict(self, X):
        """Codes in {-1, +1}; a zero pre-activation maps to +1."""
        return np.where(self.decision(X) >= 0, 1, -1).astype(np.int8)


def _fit_bit(X, y, C, use_bias, j):
    if np.all(y == y[0]):
        logger.warning(f"bit {j} is constant ({int(y[0]):+d}) on the training set; using a constant predictor")
        return np.zeros(X.shape[1]), float(y[0]), 1.0
    clf = LinearSVC(loss='hinge', C=C, fit_intercept=use_bias, random_state=0, max_iter=10000, dual=True)
    clf.fit(X, y)
    w = clf.coef_.ravel()
    b = float(clf.intercept_[0]) if use_bias else 0.0
    pred = np.where(np.asarray(X @ w).ravel() + b >= 0, 1, -1)
    return w, b, float(np.mean(pred == y))


def train_hash_fn(omegas, codes, C=1.0, use_bias=True, workers=1):
    """l independent L2-regularized hinge-loss classifiers, one per bit column."""
    bits = codes.bits if hasattr(codes, 'bits') else np.asarray(codes)
    if omegas.shape[0] != bits.shape[0]:
        raise ValueError(f"{omegas.shape[0]} feature rows for {bits.shape[0]} codes")
    fits = Parallel(n_jobs=workers)(
        delayed(_fit_bit)(omegas, bits[:, j].astype(np.int64), C, use_bias, j) for j in range(bits.shape[1]))
    W = np.column_stack([w for w, _, _ in fits])
    bias = np.array([b for _, b, _ in fits])
    acc = np.array([a for _, _, a in fits])
    logger.info(f"Trained {bits.shape[1]} hash classifiers, mean training accuracy {acc.mean():.3f}")
    return LinearHashFunction(W, bias, acc)


# --- TRAINING ---
def fit_codes_fea(c, sel, bank, l, k=25, a=1.0, b=0.1, thetas=None):
    """Fuse training topic vectors, build the affinity graph over them and binarize its eigenmap.

    Returns (codes, embedding, omegas).
    """
    models = sel.models(bank)
    if thetas is None:
        thetas = [infer_corpus(m, c) for m in models]
    omegas = fuse_matrix(thetas, sel.mu_hat)
    g = build_affinity(omegas, c.tags, k, a, b)
    embedding = laplacian_eigenmap(g, l)
    codes = median_binarize(embedding)
    logger.info(f"Learned {l}-bit codes for {c.n} texts over a {omegas.shape[1]}-dim fused space")
    return codes, embedding, omegas


@dataclass(frozen=True, eq=False)
class FeatureHashModel:
    Ks: list
    mu_hat: list
    hash_fn: LinearHashFunction
    models: list  # TopicModel per K, same order as Ks
    input_space: str = 'topics'  # or 'keywords'
    idf: np.ndarray = None
    train_omegas: np.ndarray = None  # cached for frozen-theta encoding

    @property
    def l(self):
        return self.hash_fn.l

    @property
    def K_tilde(self):
        return sum(self.Ks)

    def features(self, x, seed=None):
        if self.input_space == 'keywords':
            doc = apply_idf(x, self.idf)
            row = np.zeros(len(self.idf))
            row[doc.term_ids] = doc.weights / doc.norm if doc.norm else 0.0
            return row
        return fuse(infer_multi(self.models, x, seed), self.mu_hat)


def train_fea(c, sel, bank, l, k=25, a=1.0, b=0.1, C=1.0, use_bias=True, input_space='topics',
              idf=None, thetas=None, workers=1):
    codes, embedding, omegas = fit_codes_fea(c, sel, bank, l, k, a, b, thetas)
    if input_space == 'keywords':
        idf = fit_idf(c) if idf is None else idf
        X = normalize(to_csr(tfidf_transform(c, idf))).toarray()
    else:
        X = omegas
    hash_fn = train_hash_fn(X, codes, C, use_bias, workers)
    model = FeatureHashModel(list(sel.Ks), list(sel.mu_hat), hash_fn, sel.models(bank), input_space, idf, omegas)
    return model, codes, embedding


def encode_fea(model, x, seed=None, frozen_index=None):
    """Hash one document; `frozen_index` reuses the cached training topic vector of that document."""
    if frozen_index is not None and model.input_space == 'topics':
        features = model.train_omegas[frozen_index]
    else:
        features = model.features(x, seed)
    bits = model.hash_fn.predict(features)
    return HashCode(pack_codes(bits)[0], model.l)


def encode_fea_corpus(model, c, seed=None):
    bits = model.hash_fn.predict(np.vstack([model.features(doc, seed) for doc in c.docs]))
    return pack_codes(bits), bits


# --- PERSISTENCE ---
def save_fea(model, path):
    header = {
        'variant': 'FEA', 'l': model.l, 'K_tilde': model.K_tilde, 'Ks': model.Ks,
        'mu_hat': model.mu_hat, 'input_space': model.input_space,
        'topic_models': [model_filename(K) for K in model.Ks],
    }
    arrays = {'W': model.hash_fn.W, 'bias': model.hash_fn.bias, 'train_accuracy': model.hash_fn.train_accuracy}
    if model.idf is not None:
        arrays['idf'] = model.idf
    if model.train_omegas is not None:
        arrays['train_omegas'] = model.train_omegas
    write_blob(path, 'hash', header, arrays)


def load_fea(path, bank):
    header, arrays = read_blob(path, 'hash')
    if header.get('variant') != 'FEA':
        raise ModelFileError(path, f"expected a FEA hash model, found {header.get('variant')}")
    hash_fn = LinearHashFunction(arrays['W'], arrays['bias'], arrays['train_accuracy'])
    return FeatureHashModel(header['Ks'], header['mu_hat'], hash_fn, [bank.get(K) for K in header['Ks']],
                            header['input_space'], arrays.get('idf'), arrays.get('train_omegas'))
