"""Term-document matrix and rank-reduced word embeddings via truncated SVD."""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._format import write_header

logger = logging.getLogger(__name__)

EMBED_MAGIC = "HLSM-EMBED v1"


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class TermDocMatrix:
    """Raw occurrence counts, words x documents, stored as CSR."""
    matrix: sp.csr_matrix

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    @property
    def nnz(self):
        return self.matrix.nnz

    def entries(self):
        coo = self.matrix.tocoo()
        return [(int(i), int(j), int(v)) for i, j, v in zip(coo.row, coo.col, coo.data)]


@dataclass(frozen=True)
class WordEmbedding:
    vectors: np.ndarray          # (n_words, rank), rows of U * sigma
    singular_values: np.ndarray  # (rank,), non-increasing
    left_vectors: np.ndarray     # U, kept for diagnostics and orthogonality checks

    @property
    def rank(self):
        return len(self.singular_values)

    @property
    def n_words(self):
        return self.vectors.shape[0]


def build_term_doc_matrix(corpus):
    rows, cols, vals = [], [], []
    for d in corpus.documents:
        for w, c in d.token_counts.items():
            rows.append(w)
            cols.append(d.doc_id)
            vals.append(c)
    shape = (len(corpus.vocabulary), len(corpus.documents))
    m = sp.csr_matrix((np.asarray(vals, dtype=np.float64), (rows, cols)), shape=shape)
    m.sum_duplicates()
    m.eliminate_zeros()
    return TermDocMatrix(m)


def default_rank(n_words, n_docs, cap=100):
    return max(1, min(cap, min(n_words, n_docs) - 1))


def _orth(a):
    q, _ = np.linalg.qr(a)
    return q


def truncated_svd(m, rank, seed=0, oversample=10, n_power=4, tol=1e-9, max_iter=1000):
    """Top-``rank`` singular triplets by randomized subspace iteration.

    A Gaussian range finder with ``oversample`` extra columns is refined by
    at least ``n_power`` power iterations, then iterated further until every
    retained Ritz pair has residual ``|A^T u - s v| <= tol * s_max``.
    Columns of U are sign-normalized so the largest-magnitude entry is
    positive, which makes the result reproducible for a fixed seed.
    """
    a = m.matrix if isinstance(m, TermDocMatrix) else m
    a = sp.csr_matrix(a, dtype=np.float64) if sp.issparse(a) else np.asarray(a, dtype=np.float64)
    n_rows, n_cols = a.shape
    if not 1 <= rank <= min(n_rows, n_cols):
        raise ValueError(f"rank must be in [1, {min(n_rows, n_cols)}], got {rank}")
    at = a.T.tocsr() if sp.issparse(a) else a.T
    block = min(rank + oversample, min(n_rows, n_cols))
    rng = np.random.default_rng(seed)

    q = _orth(a @ rng.standard_normal((n_cols, block)))
    residual = np.inf
    for it in range(max_iter):
        q = _orth(a @ _orth(at @ q))
        if it + 1 < n_power:
            continue
        b = (at @ q).T  # q^T a, shape (block, n_cols)
        ub, s, vt = np.linalg.svd(b, full_matrices=False)
        u = q @ ub[:, :rank]
        s = s[:rank]
        v = vt[:rank].T
        scale = s[0] if s[0] > 0 else 1.0
        residual = float(np.max(np.linalg.norm(at @ u - v * s, axis=0)) / scale)
        if residual <= tol:
            break
    else:
        raise ConvergenceError(f"truncated SVD did not converge in {max_iter} iterations", residual)
    logger.debug("truncated SVD rank %d converged after %d iterations", rank, it + 1)

    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(rank)])
    flip[flip == 0] = 1.0
    u = u * flip
    return WordEmbedding(vectors=u * s, singular_values=s, left_vectors=u)


def word_vector(e, word_id):
    if not 0 <= word_id < e.n_words:
        raise IndexError(f"word id {word_id} out of range [0, {e.n_words})")
    return e.vectors[word_id]


def write_embedding(e, words, path, meta=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, EMBED_MAGIC, meta)
        for w, row in zip(words, e.vectors):
            fh.write(w + "\t" + ",".join(f"{x:.9g}" for x in row) + "\n")
