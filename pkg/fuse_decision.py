"""
Decision-level fusion: each topic granularity is a view with its own affinity graph and linear
predictor; codes, per-view projections and simplex view weights are learned by alternating
minimization of

    C1 * tr(Y^T (sum_k L_k) Y) + C2 * ||Y - sum_k alpha_k X_k W_k||_F^2 + sum_k ||W_k||_F^2

subject to Y^T 1 = 0 and Y^T Y = I on the relaxed codes Y.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed

from affinity import build_affinity, degree_and_laplacian
from errors import ModelFileError
from modelio import read_blob, write_blob
from retrieval import HashCode, pack_codes
from spectral import median_binarize, simplex_project, symmetric_eig
from topics import infer_corpus, infer_multi, model_filename

logger = logging.getLogger(__name__)

ALPHA_STEPS = 100


@dataclass(frozen=True, eq=False)
class View:
    K: int
    L: object  # normalized Laplacian, n x n sparse
    X: np.ndarray  # n x K topic distributions


@dataclass(eq=False)
class MultiViewModel:
    Ks: list
    W: list  # per view K_i x l
    alpha: np.ndarray
    C1: float
    C2: float
    thresholds: np.ndarray = None
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    views: list = field(default_factory=list)  # training views; empty after loading
    models: list = field(default_factory=list)  # TopicModel per view, for encoding

    @property
    def M(self):
        return len(self.Ks)

    @property
    def l(self):
        return self.W[0].shape[1]

    def predict_real(self, thetas):
        """sum_k alpha_k X_k W_k for per-view topic rows (or matrices)."""
        return sum(a * (np.atleast_2d(X) @ W) for a, X, W in zip(self.alpha, thetas, self.W))


def multiview_objective(mvm, Y, views=None):
    views = mvm.views if views is None else views
    Y = np.asarray(Y, dtype=np.float64)
    if len(views) != len(mvm.W) or len(mvm.alpha) != len(views):
        raise ValueError(f"{len(views)} views, {len(mvm.W)} projections, {len(mvm.alpha)} view weights")
    for v, W in zip(views, mvm.W):
        if v.L.shape[0] != Y.shape[0] or v.X.shape[0] != Y.shape[0]:
            raise ValueError(f"view K={v.K} covers {v.X.shape[0]} texts, codes cover {Y.shape[0]}")
        if W.shape != (v.X.shape[1], Y.shape[1]):
            raise ValueError(f"projection shape {W.shape} does not map {v.X.shape[1]} topics to {Y.shape[1]} bits")
    smooth = sum(float(np.sum(Y * (v.L @ Y))) for v in views)
    residual = Y - mvm.predict_real([v.X for v in views])
    ridge = sum(float(np.sum(W * W)) for W in mvm.W)
    return mvm.C1 * smooth + mvm.C2 * float(np.sum(residual * residual)) + ridge


# --- ALTERNATING STEPS ---
def _w_step(views, Y, W, alpha, C2):
    """Exact block minimization over each W_k in turn."""
    W = [w.copy() for w in W]
    for k, v in enumerate(views):
        if alpha[k] == 0:
            W[k] = np.zeros_like(W[k])
            continue
        others = sum((alpha[j] * (views[j].X @ W[j]) for j in range(len(views)) if j != k),
                     np.zeros_like(Y))
        R = Y - others
        A = C2 * alpha[k] ** 2 * (v.X.T @ v.X) + np.eye(v.X.shape[1])
        W[k] = scipy.linalg.solve(A, C2 * alpha[k] * (v.X.T @ R), assume_a='pos')
    return W


def _alpha_step(views, Y, W, alpha):
    """Projected gradient on ||Y - sum_k alpha_k P_k||^2 over the simplex, fixed step 1/Lipschitz."""
    P = [v.X @ w for v, w in zip(views, W)]
    G = np.array([[np.sum(Pi * Pj) for Pj in P] for Pi in P])
    h = np.array([np.sum(Pi * Y) for Pi in P])
    lip = 2.0 * float(np.linalg.eigvalsh(G)[-1])
    if lip <= 0:
        return alpha
    for _ in range(ALPHA_STEPS):
        alpha = simplex_project(alpha - (2.0 * (G @ alpha - h)) / lip)
    return alpha


def _procrustes(U, P):
    """Rotate the orthonormal basis U toward P (maximizes tr(Y^T P) over Y = U R)."""
    M = U.T @ P
    if not np.any(M):
        return U
    A, _, Bt = np.linalg.svd(M)
    return U @ (A @ Bt)


def _y_step(L_sum, P, l, C1, C2):
    """l smallest eigenvectors, orthogonal to 1, of C1 * L_sum + C2 * (I - Pi_P), rotated toward P."""
    n = L_sum.shape[0]
    A = C1 * L_sum.toarray() + C2 * np.eye(n)
    Pc = P - P.mean(axis=0)
    if np.any(Pc):
        Q = scipy.linalg.orth(Pc)
        A -= C2 * (Q @ Q.T)
    # compress onto the complement of the constant vector, which is parked above the spectrum
    e = np.full(n, 1.0 / np.sqrt(n))
    Ae = A @ e
    A = A - np.outer(e, Ae) - np.outer(Ae, e) + float(e @ Ae) * np.outer(e, e)
    shift = C1 * float(abs(L_sum).sum(axis=1).max()) + C2 + 1.0
    A += shift * np.outer(e, e)
    _, U = symmetric_eig((A + A.T) / 2.0, count=l)
    return _procrustes(U, Pc)


def fit_multiview(views, l, C1=1.0, C2=1.0, max_iters=20, tol=1e-6, fix_alpha=False, Ks=None):
    """Alternate W, alpha and Y steps until the relative objective change drops below `tol`.

    Returns (model, relaxed codes Y).
    """
    if C1 <= 0 or C2 <= 0:
        raise ValueError(f"trade-off parameters must be positive, got C1={C1}, C2={C2}")
    n = views[0].X.shape[0]
    if l < 1 or l > n - 1:
        raise ValueError(f"need 1 <= l <= n - 1 = {n - 1}, got l={l}")
    M = len(views)
    L_sum = sum(v.L for v in views)
    mvm = MultiViewModel(
        Ks=list(Ks) if Ks is not None else [v.K for v in views],
        W=[np.zeros((v.X.shape[1], l)) for v in views],
        alpha=np.full(M, 1.0 / M),
        C1=C1, C2=C2, views=list(views),
    )
    Y = _y_step(L_sum, np.zeros((n, l)), l, C1, C2)
    current = multiview_objective(mvm, Y)
    mvm.objective_trace.append(current)

    for it in range(max_iters):
        mvm.W = _w_step(views, Y, mvm.W, mvm.alpha, C2)
        if not fix_alpha:
            mvm.alpha = _alpha_step(views, Y, mvm.W, mvm.alpha)
        P = mvm.predict_real([v.X for v in views])
        candidates = [_y_step(L_sum, P, l, C1, C2), _procrustes(Y, P - P.mean(axis=0))]
        scores = [multiview_objective(mvm, cand) for cand in candidates]
        best = int(np.argmin(scores))
        Y = candidates[best]
        previous, current = current, scores[best]
        mvm.objective_trace.append(current)
        logger.debug(f"iteration {it + 1}: objective {current:.6f}, alpha {np.round(mvm.alpha, 4).tolist()}")
        if abs(previous - current) <= tol * max(abs(previous), 1e-12):
            mvm.converged = True
            break

    if not mvm.converged:
        logger.warning(f"Alternating optimization did not converge in {max_iters} iterations; "
                       f"returning the last (lowest-objective) iterate")
    return mvm, Y


# --- TRAINING ---
def _view(K, theta, tags, k, a, b):
    g = build_affinity(theta, tags, k, a, b)
    _, L = degree_and_laplacian(g, normalized=True)
    return View(K, L, theta)


def fit_codes_dec(c, sel, bank, l, k=25, a=1.0, b=0.1, C1=1.0, C2=1.0, max_iters=20, tol=1e-6,
                  thetas=None, fix_alpha=False, workers=1):
    """Returns (model, codes, relaxed Y); model thresholds are per-bit medians of training predictions."""
    models = sel.models(bank)
    if thetas is None:
        thetas = [infer_corpus(m, c) for m in models]
    views = Parallel(n_jobs=workers)(
        delayed(_view)(m.K, theta, c.tags, k, a, b) for m, theta in zip(models, thetas))
    mvm, Y = fit_multiview(views, l, C1, C2, max_iters, tol, fix_alpha, Ks=sel.Ks)
    mvm.models = models
    mvm.thresholds = median_binarize(mvm.predict_real(thetas)).medians
    codes = median_binarize(Y)
    logger.info(f"Decision-level fusion: {l} bits, alpha={np.round(mvm.alpha, 4).tolist()}, "
                f"{len(mvm.objective_trace) - 1} iterations")
    return mvm, codes, Y


def encode_dec_bits(mvm, thetas):
    return np.where(mvm.predict_real(thetas) - mvm.thresholds >= 0, 1, -1).astype(np.int8)


def encode_dec(mvm, x, seed=None):
    bits = encode_dec_bits(mvm, infer_multi(mvm.models, x, seed))
    return HashCode(pack_codes(bits)[0], mvm.l)


def encode_dec_corpus(mvm, c, seed=None):
    thetas = [infer_corpus(m, c, seed) for m in mvm.models]
    bits = encode_dec_bits(mvm, thetas)
    return pack_codes(bits), bits


# --- PERSISTENCE ---
def save_dec(mvm, path):
    header = {
        'variant': 'DEC', 'l': mvm.l, 'M': mvm.M, 'Ks': mvm.Ks, 'alpha': mvm.alpha.tolist(),
        'C1': mvm.C1, 'C2': mvm.C2, 'converged': mvm.converged,
        'topic_models': [model_filename(K) for K in mvm.Ks],
    }
    arrays = {f"W{k}": W for k, W in enumerate(mvm.W)}
    arrays['thresholds'] = mvm.thresholds
    arrays['objective_trace'] = np.array(mvm.objective_trace)
    write_blob(path, 'hash', header, arrays)


def load_dec(path, bank):
    header, arrays = read_blob(path, 'hash')
    if header.get('variant') != 'DEC':
        raise ModelFileError(path, f"expected a DEC hash model, found {header.get('variant')}")
    return MultiViewModel(
        Ks=header['Ks'],
        W=[arrays[f"W{k}"] for k in range(header['M'])],
        alpha=np.array(header['alpha']),
        C1=header['C1'], C2=header['C2'],
        thresholds=arrays['thresholds'],
        objective_trace=arrays['objective_trace'].tolist(),
        converged=header['converged'],
        models=[bank.get(K) for K in header['Ks']],
    )
