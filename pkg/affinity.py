"""
Tag-confidence weighted kNN cosine affinity graph and its Laplacians.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.preprocessing import normalize

from corpus import Corpus, tag_matrix, to_csr

logger = logging.getLogger(__name__)

BLOCK_ROWS = 1024


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    n: int
    S: sp.csr_matrix  # symmetric, zero diagonal
    k: int
    a: float
    b: float

    def triplets(self):
        coo = sp.triu(self.S, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[o]), int(coo.col[o]), float(coo.data[o])) for o in order]


def _as_matrix(feats):
    if isinstance(feats, Corpus):
        return to_csr(feats)
    if sp.issparse(feats):
        return sp.csr_matrix(feats, dtype=np.float64)
    return np.asarray(feats, dtype=np.float64)


def _knn(X, k):
    """Row-wise top-k cosine neighbours (self excluded), ties broken by lower index."""
    n = X.shape[0]
    X = normalize(X)
    rows, cols, vals = [], [], []
    for start in range(0, n, BLOCK_ROWS):
        stop = min(n, start + BLOCK_ROWS)
        block = X[start:stop] @ X.T
        block = block.toarray() if sp.issparse(block) else np.asarray(block)
        block = np.clip(block, 0.0, 1.0)
        block[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on -sim keeps the lower index first among ties
        top = np.argsort(-block, axis=1, kind='stable')[:, :k]
        for r, neighbours in enumerate(top):
            sims = block[r, neighbours]
            keep = sims > 0
            rows.extend([start + r] * int(keep.sum()))
            cols.extend(neighbours[keep].tolist())
            vals.extend(sims[keep].tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def build_affinity(feats, tags, k=25, a=1.0, b=0.1):
    """S_ij = c_ij * cos(x_i, x_j) if i in kNN(j) or j in kNN(i); c_ij = a when tags are shared, else b."""
    if not 1.0 >= a >= b > 0.0:
        raise ValueError(f"confidences must satisfy 1 >= a >= b > 0, got a={a}, b={b}")
    X = _as_matrix(feats)
    n = X.shape[0]
    if len(tags) != n:
        raise ValueError(f"{len(tags)} tag sets for {n} feature vectors")
    if k < 1 or k >= n:
        raise ValueError(f"k must be in [1, n-1] = [1, {n - 1}], got {k}")

    W = _knn(X, k)
    W = W.maximum(W.T).tocoo()

    T = tag_matrix(tags)
    shared = np.asarray((T[W.row].multiply(T[W.col])).sum(axis=1)).ravel() > 0
    conf = np.where(shared, a, b)
    S = sp.csr_matrix((W.data * conf, (W.row, W.col)), shape=(n, n))
    S.sort_indices()
    isolated = int(np.sum(S.getnnz(axis=1) == 0))
    logger.info(f"Affinity graph: n={n}, k={k}, {S.nnz // 2} edges, {isolated} isolated nodes")
    return AffinityGraph(n, S, k, a, b)


def degree_and_laplacian(g, normalized=False):
    """Degree vector and L = D - S; normalized gives D^-1/2 L D^-1/2 with identity rows for isolated nodes."""
    deg = np.asarray(g.S.sum(axis=1)).ravel()
    L = (sp.diags(deg) - g.S).tocsr()
    if not normalized:
        return deg, L
    dinv = np.zeros_like(deg)
    nz = deg > 0
    dinv[nz] = 1.0 / np.sqrt(deg[nz])
    Dm = sp.diags(dinv)
    L_norm = (Dm @ L @ Dm).tolil()
    for i in np.flatnonzero(~nz):
        L_norm[i, i] = 1.0
    return deg, L_norm.tocsr()


def export_triplets(g, path):
    with open(path, 'w', encoding='utf-8') as f:
        for i, j, s in g.triplets():
            f.write(f"{i} {j} {s!r}\n")
