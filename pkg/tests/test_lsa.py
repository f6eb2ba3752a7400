import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hlsm.corpus import preprocess
from hlsm.lsa import (
    ConvergenceError, build_term_doc_matrix, default_rank, truncated_svd, word_vector,
    write_embedding,
)


def test_term_doc_matrix_entries():
    c = preprocess(["bb bb", "bb cc"], stopwords=(), min_count=1)
    m = build_term_doc_matrix(c)
    assert sorted(m.entries()) == [(0, 0, 2), (0, 1, 1), (1, 1, 1)]
    assert (m.rows, m.cols) == (2, 2)


def test_no_empty_columns_and_nnz():
    c = preprocess(["aa bb", "the of", "bb cc cc dd"], min_count=1)
    m = build_term_doc_matrix(c)
    assert np.all(np.diff(m.matrix.tocsc().indptr) > 0)
    assert m.nnz == sum(len(d.token_counts) for d in c.documents)


def test_default_rank():
    assert default_rank(5000, 3000) == 100
    assert default_rank(20, 8) == 7
    assert default_rank(1, 1) == 1


def test_identity_spectrum():
    e = truncated_svd(np.eye(5), 3)
    assert np.allclose(e.singular_values, 1.0)


def test_rank_one_outer_product():
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 3.0, 0.0, 0.0])
    a = np.outer(u, v)
    e = truncated_svd(sp.csr_matrix(a), 1)
    assert e.singular_values[0] == pytest.approx(6.0)
    vv = a.T @ e.left_vectors / e.singular_values
    assert np.allclose(e.left_vectors @ np.diag(e.singular_values) @ vv.T, a)


def test_identity_full_rank_vectors_are_orthonormal():
    # a repeated spectrum fixes U only up to rotation
    e = truncated_svd(np.eye(4), 4)
    assert np.allclose(e.vectors @ e.vectors.T, np.eye(4))


def test_distinct_diagonal_vectors_are_scaled_basis():
    d = np.array([1.0, 2.0, 3.0, 4.0])
    e = truncated_svd(np.diag(d), 4)
    for i in range(4):
        vec = np.abs(word_vector(e, i))
        assert np.count_nonzero(vec > 1e-9) == 1 and vec.max() == pytest.approx(d[i])


def test_identical_rows_identical_vectors():
    a = np.array([[1, 2, 0, 1], [1, 2, 0, 1], [0, 1, 3, 0], [2, 0, 1, 1]], dtype=float)
    e = truncated_svd(a, 3)
    assert np.allclose(e.vectors[0], e.vectors[1])


def test_word_vector_range():
    e = truncated_svd(np.eye(3), 2)
    with pytest.raises(IndexError):
        word_vector(e, 3)


def test_invalid_rank():
    with pytest.raises(ValueError):
        truncated_svd(np.eye(3), 4)
    with pytest.raises(ValueError):
        truncated_svd(np.eye(3), 0)


def test_convergence_error_reports_residual():
    rng = np.random.default_rng(0)
    a = rng.random((60, 40))
    with pytest.raises(ConvergenceError) as info:
        truncated_svd(a, 10, oversample=0, n_power=1, max_iter=1, tol=1e-15)
    assert info.value.residual > 0


def test_deterministic_for_seed():
    rng = np.random.default_rng(1)
    a = sp.random(40, 30, density=0.2, random_state=rng, format="csr")
    e1, e2 = truncated_svd(a, 6, seed=4), truncated_svd(a, 6, seed=4)
    assert np.array_equal(e1.vectors, e2.vectors)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_matches_dense_svd(seed, rank):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, (15, 12)).astype(float)
    s_ref = np.linalg.svd(a, compute_uv=False)
    e = truncated_svd(a, rank, seed=seed)
    assert np.allclose(e.singular_values, s_ref[:rank], rtol=1e-7, atol=1e-9)
    u = e.left_vectors
    assert np.allclose(u.T @ u, np.eye(rank), atol=1e-8)


def test_write_embedding(tmp_path):
    e = truncated_svd(np.eye(3), 2)
    p = tmp_path / "e.txt"
    write_embedding(e, ["aa", "bb", "cc"], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "HLSM-EMBED v1"
    assert sum(1 for line in lines if line.startswith(("aa", "bb", "cc"))) == 3
