import math

import numpy as np
import pytest

from hlsm._format import FormatError
from hlsm.corpus import preprocess
from hlsm.graph import (
    WordGraph, ZeroNormError, build_graph, cooccurring_pairs, cosine_similarity, read_graph,
    write_graph,
)
from hlsm.lsa import WordEmbedding, build_term_doc_matrix


def _emb(vectors):
    v = np.asarray(vectors, dtype=float)
    return WordEmbedding(v, np.ones(v.shape[1]), v)


def _pairs(docs):
    return build_term_doc_matrix(preprocess(docs, stopwords=(), min_count=1))


def test_pairs_by_definition():
    assert cooccurring_pairs(_pairs(["aa bb", "cc"])).tolist() == [[0, 1]]


def test_pairs_in_one_document():
    assert len(cooccurring_pairs(_pairs(["aa bb cc dd"]))) == 6


def test_pairs_do_not_cross_documents():
    assert cooccurring_pairs(_pairs(["aa bb", "cc dd"])).tolist() == [[0, 1], [2, 3]]


def test_cosine_examples():
    e = _emb([[1, 1], [1, 0], [0, 1], [1, 1]])
    assert cosine_similarity(e, 0, 3) == pytest.approx(1.0)
    assert cosine_similarity(e, 1, 2) == pytest.approx(0.0)
    assert cosine_similarity(e, 0, 1) == pytest.approx(1 / math.sqrt(2), abs=1e-9)


def test_cosine_zero_norm():
    e = _emb([[0, 0], [1, 0]])
    with pytest.raises(ZeroNormError):
        cosine_similarity(e, 0, 1)


def _triangle():
    # unit vectors at chosen angles give S(a,b)=0.9, S(b,c)=0.1, S(a,c)=0.5
    ab, ac = math.acos(0.9), math.acos(0.5)
    a = [1.0, 0.0, 0.0]
    b = [math.cos(ab), math.sin(ab), 0.0]
    cx = math.cos(ac)
    cy = (0.1 - b[0] * cx) / b[1]
    c = [cx, cy, math.sqrt(1 - cx ** 2 - cy ** 2)]
    return _emb([a, b, c])


def test_threshold_by_hand():
    e = _triangle()
    g = build_graph(e, [(0, 1), (0, 2), (1, 2)], q=0.3)
    assert [(i, j) for i, j, _ in g.edges()] == [(0, 1), (0, 2)]
    assert np.allclose(g.weight, [0.9, 0.5])
    assert len(g.isolated) == 0


def test_no_pruning_at_minus_one_when_similarities_positive():
    e = _triangle()
    assert build_graph(e, [(0, 1), (0, 2), (1, 2)], q=-1).n_edges == 3


def test_non_positive_similarities_always_pruned():
    e = _emb([[1, 0], [-1, 0.1], [0, 1]])
    g = build_graph(e, [(0, 1), (0, 2), (1, 2)], q=-1)
    assert [(i, j) for i, j, _ in g.edges()] == [(1, 2)]
    assert g.isolated.tolist() == [0]


def test_zero_norm_pairs_dropped():
    e = _emb([[0, 0], [1, 0], [1, 1]])
    g = build_graph(e, [(0, 1), (1, 2)], q=0.0)
    assert g.edges()[0][:2] == (1, 2) and 0 in g.isolated


def test_extreme_threshold_isolates():
    rng = np.random.default_rng(0)
    e = _emb(rng.standard_normal((30, 5)))
    pairs = [(i, j) for i in range(30) for j in range(i + 1, 30)]
    g = build_graph(e, pairs, q=0.999)
    assert g.n_edges < 5 and len(g.isolated) > 20


def test_threshold_range():
    with pytest.raises(ValueError):
        build_graph(_triangle(), [(0, 1)], q=1.0)


def test_from_edges_validation():
    with pytest.raises(ValueError):
        WordGraph.from_edges([(1, 1)])
    with pytest.raises(ValueError):
        WordGraph.from_edges([(0, 1), (1, 0)])
    g = WordGraph.from_edges([(2, 0)], n_words=4)
    assert g.edges() == [(0, 2, 1.0)] and g.isolated.tolist() == [1, 3]


def test_graph_roundtrip(tmp_path):
    g = WordGraph.from_edges([(0, 1), (1, 3)], [0.5, 0.75], n_words=4)
    words = ["aa", "bb", "cc", "dd"]
    p = tmp_path / "g.hlsm"
    write_graph(g, words, p, {"k": 1})
    back, labels, meta = read_graph(p, words)
    assert back.edges() == g.edges() and back.isolated.tolist() == [2]
    assert labels == words and meta["k"] == "1"
    alone, labels, _ = read_graph(p)
    assert labels == ["aa", "bb", "dd"] and alone.n_edges == 2


def test_graph_bad_line(tmp_path):
    p = tmp_path / "g.hlsm"
    p.write_text("HLSM-GRAPH v1\naa\tbb\n")
    with pytest.raises(FormatError):
        read_graph(p)
