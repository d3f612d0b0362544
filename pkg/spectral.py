"""
Shared numerics: dense symmetric eigensolver, Laplacian eigenmaps, median binarization
and projection onto the probability simplex.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, eigsh

from affinity import degree_and_laplacian

logger = logging.getLogger(__name__)

# Above this many (non-isolated) nodes the eigenmap switches to the sparse Lanczos solver.
DENSE_LIMIT = 4000
NEAR_ZERO = 1e-8


@dataclass(frozen=True, eq=False)
class Embedding:
    Y: np.ndarray  # n x l real embedding
    eigenvalues: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    bits: np.ndarray  # n x l int8 in {-1, +1}
    medians: np.ndarray

    @property
    def n(self):
        return self.bits.shape[0]

    @property
    def l(self):
        return self.bits.shape[1]


def fix_signs(V):
    """Flip each column so its first entry with |v| > 1e-12 is positive."""
    V = np.array(V, dtype=np.float64, copy=True)
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if len(nz) and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def symmetric_eig(A, count=None):
    """Eigenvalues ascending and orthonormal eigenvectors (columns) of a symmetric matrix.

    `count` keeps only the smallest `count` eigenpairs.
    """
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max())) if A.size else 1.0
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-9 * scale):
        raise ValueError("matrix is not symmetric")
    subset = None if count is None else [0, count - 1]
    w, V = scipy.linalg.eigh((A + A.T) / 2.0, subset_by_index=subset)
    return w, fix_signs(V)


def _smallest_deflated(L_norm, u0, l):
    """l smallest eigenpairs of L_norm restricted to the complement of unit vector u0."""
    n = L_norm.shape[0]
    if n <= DENSE_LIMIT:
        A = L_norm.toarray() + 3.0 * np.outer(u0, u0)
        w, V = scipy.linalg.eigh((A + A.T) / 2.0, subset_by_index=[0, l - 1])
        return w, V
    # spectrum of L_norm lies in [0, 2]; largest eigenpairs of 3I - L_norm - 3 u0 u0^T
    shifted = sp.identity(n, format='csr') * 3.0 - L_norm
    op = LinearOperator(
        (n, n), matvec=lambda x: shifted @ x - 3.0 * u0 * np.dot(u0, x), dtype=np.float64)
    v0 = np.random.default_rng(0).standard_normal(n)
    w, V = eigsh(op, k=l, which='LA', v0=v0)
    w = 3.0 - w
    order = np.argsort(w, kind='stable')
    return w[order], V[:, order]


def laplacian_eigenmap(g, l):
    """Solve L v = lambda D v for the l smallest non-trivial eigenpairs.

    Isolated nodes are embedded at 0. Columns are D-orthonormal and orthogonal (in the D inner
    product) to the constant vector.
    """
    if l < 1 or l > g.n - 1:
        raise ValueError(f"need 1 <= l <= n - 1 = {g.n - 1}, got l={l}")
    deg, L_norm = degree_and_laplacian(g, normalized=True)
    active = np.flatnonzero(deg > 0)
    isolated = g.n - len(active)
    components, _ = connected_components(g.S[active][:, active], directed=False)
    if l > len(active) - 1:
        raise ValueError(f"only {len(active)} connected nodes; cannot embed into {l} dimensions")

    sub = L_norm[active][:, active]
    u0 = np.sqrt(deg[active])
    u0 /= np.linalg.norm(u0)
    w, U = _smallest_deflated(sub, u0, l)

    Y = np.zeros((g.n, l))
    Y[active] = U / np.sqrt(deg[active])[:, None]
    Y = fix_signs(Y)
    near_zero = int(np.sum(np.abs(w) < NEAR_ZERO))
    diagnostics = {'components': int(components), 'isolated': isolated, 'near_zero_eigenvalues': near_zero}
    if near_zero or components > 1:
        logger.warning(f"Affinity graph has {components} components and {isolated} isolated nodes; "
                       f"{near_zero} of {l} eigenvalues are ~0")
    return Embedding(Y, w, diagnostics)


def median_binarize(e):
    """Threshold each column at its ceil(n/2)-th smallest value; strictly greater maps to +1."""
    Y = e.Y if isinstance(e, Embedding) else np.asarray(e, dtype=np.float64)
    n = Y.shape[0]
    m = np.sort(Y, axis=0)[(n + 1) // 2 - 1] if n else np.zeros(Y.shape[1])
    bits = np.where(Y > m, 1, -1).astype(np.int8)
    return CodeMatrix(bits, m)


def simplex_project(v):
    """Euclidean projection of v onto {x : x >= 0, sum(x) = 1} (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot project an empty vector onto the simplex")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)
