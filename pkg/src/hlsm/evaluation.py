"""Held-out inference, perplexity and topic-feature export."""
import csv
import math
from dataclasses import dataclass

import numpy as np

PERPLEXITY_FLOOR = 1e-12


@dataclass(frozen=True)
class DocTopicFeatures:
    doc_id: int
    label: str | None
    features: np.ndarray
    coverage: float


@dataclass(frozen=True)
class PerplexityReport:
    perplexity: float
    tokens: int
    coverage: float

    def __float__(self):
        return self.perplexity

    def line(self):
        return f"perplexity={self.perplexity:.6f} tokens={self.tokens} coverage={self.coverage:.6f}"


def _known(model, doc):
    """In-model words of ``doc`` as parallel (ids, counts) arrays plus coverage."""
    pw = model.word_prior
    ids, counts, oov = [], [], doc.oov_count
    for w, c in doc.token_counts.items():
        if w < len(pw) and pw[w] > 0:
            ids.append(w)
            counts.append(c)
        else:
            oov += c
    total = sum(counts) + oov
    coverage = sum(counts) / total if total else 0.0
    return np.asarray(ids, dtype=np.int64), np.asarray(counts, dtype=np.float64), coverage


def infer_doc_topics(model, doc, topic_given_word=None):
    """p(t|d) for an unseen document from fixed p(w|t) and p(t).

    Each in-vocabulary token contributes its word's p(t|w); the sum is
    divided by the number of such tokens.  Unknown tokens only lower
    ``coverage``.
    """
    ptw = model.topic_given_word() if topic_given_word is None else topic_given_word
    ids, counts, coverage = _known(model, doc)
    if counts.sum() == 0:
        return DocTopicFeatures(doc.doc_id, doc.label, np.zeros(model.topic_count), 0.0)
    feats = counts @ ptw[ids] / counts.sum()
    return DocTopicFeatures(doc.doc_id, doc.label, feats, coverage)


def infer_corpus_topics(model, corpus):
    ptw = model.topic_given_word()
    return [infer_doc_topics(model, d, ptw) for d in corpus.documents]


def perplexity_report(model, test):
    if len(test) == 0:
        raise ValueError("test corpus is empty")
    ptw = model.topic_given_word()
    log_sum, tokens, seen = 0.0, 0, 0
    for doc in test.documents:
        ids, counts, _ = _known(model, doc)
        seen += doc.length + doc.oov_count
        if counts.sum() == 0:
            continue
        theta = counts @ ptw[ids] / counts.sum()
        prob = model.word_given_topic[:, ids].T @ theta
        log_sum += float(counts @ np.log(np.maximum(prob, PERPLEXITY_FLOOR)))
        tokens += int(counts.sum())
    if tokens == 0:
        raise ValueError("test corpus has no in-vocabulary tokens")
    return PerplexityReport(math.exp(-log_sum / tokens), tokens, tokens / seen)


def perplexity(model, test):
    return perplexity_report(model, test).perplexity


def export_features(model, corpus, out_path):
    rows = infer_corpus_topics(model, corpus)
    header = ["doc_id", "label", "coverage"] + [f"t{k}" for k in range(model.topic_count)]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in sorted(rows, key=lambda r: r.doc_id):
            writer.writerow([r.doc_id, r.label or "", f"{r.coverage:.6f}"]
                            + [f"{x:.6f}" for x in r.features])
    return rows


def read_features(path):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            out.append(DocTopicFeatures(int(row[0]), row[1] or None,
                                        np.array([float(x) for x in row[3:]]), float(row[2])))
    return out


def nearest_centroid_accuracy(features, train_fraction=0.8, seed=0):
    """Accuracy of a Euclidean nearest-centroid classifier on a stratified split."""
    labels = sorted({f.label for f in features if f.label is not None})
    if len(labels) < 2:
        raise ValueError("need at least two labels")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    x = np.array([f.features for f in features], dtype=np.float64)
    y = np.array([labels.index(f.label) if f.label is not None else -1 for f in features])
    train_idx, test_idx = [], []
    for k, label in enumerate(labels):
        idx = np.flatnonzero(y == k)
        rng.shuffle(idx)
        n_train = int(round(train_fraction * len(idx)))
        if n_train == 0:
            raise ValueError(f"label {label!r} has no training documents")
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    if not test_idx:
        raise ValueError("split left no test documents")
    train_idx, test_idx = np.array(train_idx), np.array(test_idx)
    centroids = np.array([x[train_idx[y[train_idx] == k]].mean(axis=0) for k in range(len(labels))])
    dist = ((x[test_idx, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = np.argmin(dist, axis=1)
    return float(np.mean(pred == y[test_idx]))
