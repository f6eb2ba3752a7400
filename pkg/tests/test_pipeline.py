import numpy as np
import pytest

from hlsm import pipeline
from hlsm.corpus import preprocess
from hlsm.synthetic import block_words, generating_perplexity, make_block_corpus


def test_block_words_are_distinct_and_tokenizable():
    blocks = block_words(3, 40)
    flat = [w for b in blocks for w in b]
    assert len(set(flat)) == 120
    c = preprocess([" ".join(flat)], stopwords=(), min_count=1)
    assert len(c.vocabulary) == 120


def test_block_corpus_labels_and_lengths():
    bc = make_block_corpus(n_docs=9, doc_len=20, seed=0)
    assert bc.labels[:3] == ["block0", "block1", "block2"]
    assert all(len(t.split()) == 20 for t in bc.texts)
    c = bc.corpus()
    assert generating_perplexity(bc, c) == pytest.approx(40, rel=0.3)


def test_train_recovers_blocks():
    bc = make_block_corpus(n_docs=90, seed=1)
    result = pipeline.train(bc.corpus(), seed=0)
    assert result.model.topic_count == 3
    assert len(result.hierarchy.first_level()) == 3
    assert result.embedding.rank == 89


def test_svd_rank_is_clamped():
    bc = make_block_corpus(n_docs=12, seed=2)
    assert pipeline.train(bc.corpus(), svd_rank=500).embedding.rank == 11
    assert pipeline.train(bc.corpus(), svd_rank=4).embedding.rank == 4


def test_no_edges_gives_catch_all_topic(caplog):
    # one-word documents share no words, so the graph has no edges
    c = preprocess(["alpha", "beta", "gamma", "delta"], stopwords=(), min_count=1)
    with caplog.at_level("WARNING"):
        result = pipeline.train(c)
    assert "near-empty" in caplog.text
    assert result.graph.n_edges == 0 and result.hierarchy is None
    assert result.model.topic_count == 1
    assert np.allclose(result.model.word_given_topic, 0.25)


def test_stage_errors_are_labeled():
    c = preprocess(["alpha beta"], stopwords=(), min_count=1)
    with pytest.raises(pipeline.StageError, match=r"^\[graph\]"):
        pipeline.train(c, threshold=2.0)


@pytest.mark.parametrize("q", [-0.5, 0.0, 0.1, 0.25, 0.4])
def test_threshold_sweep_recovers_blocks(q):
    from hlsm.evaluation import infer_corpus_topics, nearest_centroid_accuracy
    c = make_block_corpus(noise=0.05, seed=0).corpus()
    model = pipeline.train(c, threshold=q).model
    assert model.topic_count == 3
    assert nearest_centroid_accuracy(infer_corpus_topics(model, c)) == 1.0


def test_extreme_threshold_collapses_to_catch_all():
    c = make_block_corpus(noise=0.05, seed=0).corpus()
    result = pipeline.train(c, threshold=0.8)
    assert result.graph.n_edges <= 1 and result.model.topic_count == 1
