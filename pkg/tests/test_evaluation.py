import csv

import numpy as np
import pytest

from hlsm.corpus import Corpus, Document, Vocabulary, preprocess
from hlsm.evaluation import (
    DocTopicFeatures, export_features, infer_doc_topics, nearest_centroid_accuracy, perplexity,
    perplexity_report, read_features,
)
from hlsm.refine import TopicModel


def _vocab(words):
    return Vocabulary(tuple(words), (1,) * len(words), (1,) * len(words))


def _disjoint_model(words, k):
    """Topic t owns every k-th word, uniformly."""
    v = len(words)
    pw_t = np.zeros((k, v))
    for w in range(v):
        pw_t[w % k, w] = 1.0
    pw_t /= pw_t.sum(axis=1, keepdims=True)
    return TopicModel(k, pw_t, np.full(k, 1 / k), 0.0, 0.0, tuple(words))


def test_single_word_document():
    m = _disjoint_model(["aa", "bb"], 2)
    f = infer_doc_topics(m, Document(0, None, {0: 3}))
    assert np.allclose(f.features, [1, 0]) and f.coverage == 1.0


def test_fold_in_by_hand():
    m = _disjoint_model(["aa", "bb"], 2)
    f = infer_doc_topics(m, Document(0, None, {0: 2, 1: 1}))
    assert np.allclose(f.features, [2 / 3, 1 / 3])


def test_out_of_vocabulary_document():
    m = _disjoint_model(["aa", "bb"], 2)
    f = infer_doc_topics(m, Document(0, "x", {}, oov_count=4))
    assert f.coverage == 0.0 and np.all(f.features == 0)


def test_partial_coverage():
    m = _disjoint_model(["aa", "bb"], 2)
    f = infer_doc_topics(m, Document(0, None, {0: 3}, oov_count=1))
    assert f.coverage == pytest.approx(0.75) and np.allclose(f.features, [1, 0])


def test_uniform_model_perplexity_is_vocabulary_size():
    words = [f"w{i}" for i in range(17)]
    m = TopicModel(1, np.full((1, 17), 1 / 17), np.ones(1), 0.0, 0.0, tuple(words))
    test = Corpus((Document(0, None, {0: 2, 5: 1}), Document(1, None, {16: 4})), _vocab(words))
    assert perplexity(m, test) == pytest.approx(17, rel=1e-12)


def test_token_probability_one_tenth():
    # two topics, ten words each; every doc uses one topic's words only
    words = [f"w{i:02d}" for i in range(20)]
    pw_t = np.zeros((2, 20))
    pw_t[0, :10] = pw_t[1, 10:] = 0.1
    m = TopicModel(2, pw_t, np.array([0.5, 0.5]), 0.0, 0.0, tuple(words))
    test = Corpus((Document(0, None, {1: 3, 4: 2}), Document(1, None, {12: 5})), _vocab(words))
    report = perplexity_report(m, test)
    assert report.perplexity == pytest.approx(10.0)
    assert report.tokens == 10 and report.coverage == 1.0
    assert report.line().startswith("perplexity=10.000000 tokens=10")


def test_oov_tokens_excluded_from_perplexity():
    words = ["aa", "bb"]
    m = TopicModel(1, np.full((1, 2), 0.5), np.ones(1), 0.0, 0.0, tuple(words))
    test = Corpus((Document(0, None, {0: 1}, oov_count=3),), _vocab(words))
    report = perplexity_report(m, test)
    assert report.perplexity == pytest.approx(2.0) and report.coverage == pytest.approx(0.25)


def test_perplexity_needs_known_tokens():
    m = _disjoint_model(["aa", "bb"], 2)
    with pytest.raises(ValueError):
        perplexity(m, Corpus((Document(0, None, {}, 2),), _vocab(["aa", "bb"])))


def test_export_features(tmp_path):
    words = [f"w{i}" for i in range(8)]
    m = _disjoint_model(words, 4)
    rng = np.random.default_rng(0)
    docs = tuple(Document(d, f"lab{d % 3}", {int(w): 1 for w in rng.choice(8, 3, replace=False)})
                 for d in range(10))
    corpus = Corpus(docs, _vocab(words))
    out = tmp_path / "f.csv"
    export_features(m, corpus, out)
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["doc_id", "label", "coverage", "t0", "t1", "t2", "t3"]
    assert len(rows) == 11 and all(len(r) == 7 for r in rows)
    for r, d in zip(rows[1:], docs):
        assert r[1] == d.label
        assert sum(float(x) for x in r[3:]) == pytest.approx(1.0, abs=1e-5)
    back = read_features(out)
    assert [f.label for f in back] == [d.label for d in docs]


def _features(x, labels):
    return [DocTopicFeatures(i, lab, np.asarray(v, dtype=float), 1.0)
            for i, (v, lab) in enumerate(zip(x, labels))]


def test_one_hot_features_classify_perfectly():
    labels = [f"c{i % 4}" for i in range(80)]
    x = np.eye(4)[[i % 4 for i in range(80)]]
    assert nearest_centroid_accuracy(_features(x, labels), 0.8, seed=0) == 1.0


def test_random_features_at_chance():
    labels = [f"c{i % 4}" for i in range(200)]
    accs = []
    for seed in range(20):
        x = np.random.default_rng(seed).random((200, 4))
        accs.append(nearest_centroid_accuracy(_features(x, labels), 0.8, seed=seed))
    assert np.mean(accs) == pytest.approx(0.25, abs=0.1)


def test_classifier_deterministic():
    labels = [f"c{i % 3}" for i in range(60)]
    x = np.random.default_rng(1).random((60, 3))
    f = _features(x, labels)
    assert nearest_centroid_accuracy(f, seed=4) == nearest_centroid_accuracy(f, seed=4)


def test_classifier_errors():
    with pytest.raises(ValueError):
        nearest_centroid_accuracy(_features(np.eye(2), ["a", "a"]))
    with pytest.raises(ValueError):
        # "b" has one document, which rounds to zero training documents at 0.4
        nearest_centroid_accuracy(_features(np.eye(3), ["a", "a", "b"]), train_fraction=0.4)


def test_fold_in_on_preprocessed_corpus():
    c = preprocess(["aa aa bb", "bb cc"], stopwords=(), min_count=1)
    m = _disjoint_model(list(c.vocabulary.words), 3)
    f = infer_doc_topics(m, c.documents[0])
    assert np.allclose(f.features, [2 / 3, 1 / 3, 0])
