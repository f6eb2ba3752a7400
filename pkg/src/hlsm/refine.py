"""Turn the leaf-module word partition into a probabilistic topic model.

Topics start as the leaf modules (every token of a word goes to that word's
module).  Words left out of the network are folded into each document's most
significant topic, then an eta sweep reassigns, per document, the tokens of
topics rarer than eta to the most significant topic and keeps the sweep
point with the highest likelihood.

Token assignments are stored per term-document entry: all tokens of word w
in document d share one topic, so counts stay integral throughout.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from ._format import FormatError, VocabularyMismatchError, read_header, read_lines, vocabulary_hash, write_meta
from ._threads import worker_count

logger = logging.getLogger(__name__)

MODEL_MAGIC = "HLSM-MODEL v1"
LIKELIHOOD_FLOOR = 1e-300
ETA_GRID = tuple(k / 100 for k in range(51))


@dataclass(frozen=True)
class TopicAssignmentState:
    topic_count: int
    doc_idx: np.ndarray      # per entry
    word_idx: np.ndarray     # per entry
    counts: np.ndarray       # per entry, occurrences of word in document
    topic: np.ndarray        # per entry, -1 while unassigned
    doc_lengths: np.ndarray  # L_d
    n_words: int
    n_wt: np.ndarray = field(init=False, repr=False)
    doc_topic_counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k, done = self.topic_count, self.topic >= 0
        n_wt = np.zeros((self.n_words, k), dtype=np.int64)
        np.add.at(n_wt, (self.word_idx[done], self.topic[done]), self.counts[done])
        c_dt = np.zeros((len(self.doc_lengths), k), dtype=np.int64)
        np.add.at(c_dt, (self.doc_idx[done], self.topic[done]), self.counts[done])
        object.__setattr__(self, "n_wt", n_wt)
        object.__setattr__(self, "doc_topic_counts", c_dt)

    @property
    def n_docs(self):
        return len(self.doc_lengths)

    @property
    def total_tokens(self):
        return int(self.counts.sum())

    @property
    def doc_topic(self):
        """p(t|d); rows fall short of 1 only while isolated words are unassigned."""
        return self.doc_topic_counts / self.doc_lengths[:, None]

    @property
    def topic_prior(self):
        """p(t) = sum_w p(w) p(t|w), which reduces to n(t) / L_C."""
        return self.n_wt.sum(axis=0) / self.total_tokens

    def word_given_topic(self):
        n_t = self.n_wt.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(n_t > 0, self.n_wt / np.maximum(n_t, 1), 0.0)
        return p

    def token_topic(self, d):
        rows = np.flatnonzero(self.doc_idx == d)
        return {int(self.word_idx[r]): int(self.topic[r]) for r in rows}

    def with_topics(self, topic, topic_count=None):
        return TopicAssignmentState(
            self.topic_count if topic_count is None else topic_count,
            self.doc_idx, self.word_idx, self.counts, topic, self.doc_lengths, self.n_words)


@dataclass(frozen=True)
class TopicModel:
    topic_count: int
    word_given_topic: np.ndarray  # (K, n_words)
    topic_prior: np.ndarray       # (K,)
    eta_selected: float
    log_likelihood: float
    words: tuple = ()
    doc_topic: np.ndarray | None = None
    eta_trace: tuple = ()         # (eta, L_eta) for every swept value

    @property
    def word_prior(self):
        return self.topic_prior @ self.word_given_topic

    def topic_given_word(self):
        """p(t|w) = p(t) p(w|t) / p(w), shape (n_words, K)."""
        joint = (self.word_given_topic * self.topic_prior[:, None]).T
        pw = joint.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(pw > 0, joint / np.where(pw > 0, pw, 1.0), 0.0)


def _entries(corpus):
    d, w, c = [], [], []
    for doc in corpus.documents:
        for word, count in sorted(doc.token_counts.items()):
            d.append(doc.doc_id)
            w.append(word)
            c.append(count)
    return (np.asarray(d, dtype=np.int64), np.asarray(w, dtype=np.int64),
            np.asarray(c, dtype=np.int64))


def initial_topics(corpus, leaves):
    """One topic per leaf module; words in no leaf stay unassigned (-1)."""
    n_words = len(corpus.vocabulary)
    word_topic = np.full(n_words, -1, dtype=np.int64)
    for t, leaf in enumerate(leaves):
        for w in leaf:
            if word_topic[w] >= 0:
                raise ValueError(f"word {w} appears in more than one leaf module")
            word_topic[w] = t
    d, w, c = _entries(corpus)
    lengths = np.array([doc.length for doc in corpus.documents], dtype=np.int64)
    return TopicAssignmentState(len(leaves), d, w, c, word_topic[w], lengths, n_words)


def log_binomial_tail(x, n, p):
    """log P(X >= x) for X ~ Binomial(n, p), stable for tiny tails."""
    x = int(round(x))
    if x <= 0:
        return 0.0
    if x > n or p <= 0:
        return -math.inf
    if p >= 1:
        return 0.0
    k = np.arange(x, n + 1)
    logpmf = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
              + k * math.log(p) + (n - k) * math.log1p(-p))
    return float(min(logsumexp(logpmf), 0.0))


def topic_significance(state, d, t, prior=None):
    """p-value of seeing at least x tokens of topic t in document d."""
    prior = state.topic_prior if prior is None else prior
    x = state.doc_topic_counts[d, t]
    return math.exp(log_binomial_tail(x, int(state.doc_lengths[d]), float(prior[t])))


def most_significant_topics(state, prior=None):
    """Per document, the topic with the smallest p-value (-1 if none).

    Ties go to the larger token count, then the smaller topic id.
    """
    prior = state.topic_prior if prior is None else prior
    c_dt = state.doc_topic_counts
    out = np.full(state.n_docs, -1, dtype=np.int64)
    cache = {}
    for d in range(state.n_docs):
        n = int(state.doc_lengths[d])
        best = None
        for t in np.flatnonzero(c_dt[d] > 0):
            x = int(c_dt[d, t])
            key = (x, n, t)
            if key not in cache:
                cache[key] = log_binomial_tail(x, n, float(prior[t]))
            rank = (cache[key], -x, t)
            if best is None or rank < best:
                best = rank
        if best is not None:
            out[d] = best[2]
    return out


def assign_singletons(state, isolated=None):
    """Fold unassigned (isolated-word) tokens into each document's t_s.

    Documents with no assigned token at all take the topic with the largest
    p(t); with no topics at all a single catch-all topic is created.
    """
    pending = state.topic < 0
    if isolated is not None:
        iso = np.zeros(state.n_words, dtype=bool)
        iso[np.asarray(sorted(isolated), dtype=np.int64)] = True
        if np.any(pending & ~iso[state.word_idx]):
            raise ValueError("unassigned tokens belong to words not marked isolated")
    if not pending.any():
        return state
    if state.topic_count == 0:
        return state.with_topics(np.zeros_like(state.topic), topic_count=1)
    prior = state.topic_prior
    ts = most_significant_topics(state, prior)
    ts[ts < 0] = int(np.argmax(prior))
    topic = state.topic.copy()
    topic[pending] = ts[state.doc_idx[pending]]
    return state.with_topics(topic)


def likelihood(state, chunk=1 << 22):
    """PLSA-style log-likelihood (natural log) of the corpus under ``state``."""
    pw_t = state.word_given_topic()
    theta = state.doc_topic
    total = 0.0
    rows = max(1, chunk // max(state.topic_count, 1))  # bounds the (rows, K) temporaries
    for s in range(0, len(state.counts), rows):
        w = state.word_idx[s:s + rows]
        d = state.doc_idx[s:s + rows]
        prob = np.einsum("ij,ij->i", pw_t[w], theta[d])
        total += float(np.dot(state.counts[s:s + rows], np.log(np.maximum(prob, LIKELIHOOD_FLOOR))))
    return total


def eta_reassign(state, eta, prior=None, ts=None):
    """Move every infrequent topic's tokens to the document's t_s.

    A topic is infrequent in d when ``0 < p(t|d) < eta`` and it is not t_s.
    ``prior`` and ``ts`` default to the values computed on ``state``; pass
    them to reuse one computation across a sweep.
    """
    if not 0 <= eta <= 0.5:
        raise ValueError(f"eta must be in [0, 0.5], got {eta}")
    if ts is None:
        ts = most_significant_topics(state, prior)
    c_dt = state.doc_topic_counts
    p_td = c_dt / state.doc_lengths[:, None]
    infrequent = (c_dt > 0) & (p_td < eta)
    has_ts = ts >= 0
    infrequent[np.flatnonzero(has_ts), ts[has_ts]] = False
    infrequent[~has_ts] = False
    assigned = state.topic >= 0
    moved = np.zeros_like(assigned)
    moved[assigned] = infrequent[state.doc_idx[assigned], state.topic[assigned]]
    if not moved.any():
        return state
    topic = state.topic.copy()
    topic[moved] = ts[state.doc_idx[moved]]
    return state.with_topics(topic)


def _to_model(state, eta, log_l, words, trace):
    keep = state.n_wt.sum(axis=0) > 0
    pw_t = state.word_given_topic()[:, keep].T
    prior = state.topic_prior[keep]
    theta = state.doc_topic[:, keep]
    return TopicModel(int(keep.sum()), pw_t, prior, eta, log_l, tuple(words), theta, tuple(trace))


def sweep_eta(baseline, etas=ETA_GRID, words=()):
    """Apply each eta to an independent copy of ``baseline``; keep the best.

    Ties in likelihood go to the smaller eta.  Topics left with no tokens are
    dropped from the returned model.
    """
    if np.any(baseline.topic < 0):
        raise ValueError("baseline still has unassigned tokens; run assign_singletons first")
    prior = baseline.topic_prior
    ts = most_significant_topics(baseline, prior)

    def trial(eta):
        return float(eta), likelihood(eta_reassign(baseline, eta, prior=prior, ts=ts))

    # states are large; keep only the scores and rebuild the winner
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        trace = list(pool.map(trial, etas))
    eta, log_l = trace[0]
    for e, l in trace[1:]:
        if l > log_l:
            eta, log_l = e, l
    st = eta_reassign(baseline, eta, prior=prior, ts=ts)
    logger.info("eta sweep: selected eta=%.2f, log-likelihood %.6g (baseline %.6g)",
                eta, log_l, trace[0][1])
    return _to_model(st, eta, log_l, words, trace)


def topics_table(model, top_n=6):
    """Topics by descending p(t), each with its ``top_n`` words by p(w|t).

    Returns ``[(topic_id, p_t, [(word_id, p_w_t), ...]), ...]``; ties are
    broken by the smaller id.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    order = sorted(range(model.topic_count), key=lambda t: (-model.topic_prior[t], t))
    table = []
    for t in order:
        row = model.word_given_topic[t]
        nz = np.flatnonzero(row > 0)
        ranked = sorted(nz, key=lambda w: (-row[w], w))[:top_n]
        table.append((t, float(model.topic_prior[t]), [(int(w), float(row[w])) for w in ranked]))
    return table


def format_topics_table(table, words, per_row=6):
    """Render ``topics_table`` output as blocks of side-by-side columns."""
    lines = []
    for start in range(0, len(table), per_row):
        block = table[start:start + per_row]
        cols = []
        for rank, (t, pt, ws) in enumerate(block, start=start + 1):
            cols.append([f"topic: {rank}", f"p(t): {pt:.4f}", "-" * 12] + [words[w] for w, _ in ws])
        depth = max(len(c) for c in cols)
        width = max(len(s) for c in cols for s in c) + 2
        for i in range(depth):
            lines.append("".join((c[i] if i < len(c) else "").ljust(width) for c in cols).rstrip())
        lines.append("")
    return "\n".join(lines)


def write_model(model, path, meta=None):
    if not model.words:
        raise ValueError("model has no vocabulary attached")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MODEL_MAGIC + "\n")
        fh.write(f"topic_count={model.topic_count}\n")
        fh.write(f"eta_selected={model.eta_selected:.2f}\n")
        fh.write(f"log_likelihood={model.log_likelihood:.17g}\n")
        fh.write(f"vocab_sha256={vocabulary_hash(model.words)}\n")
        fh.write(f"vocab_size={len(model.words)}\n")
        write_meta(fh, meta)
        fh.write("PRIORS\n")
        for t, p in enumerate(model.topic_prior):
            fh.write(f"{t}\t{p:.9g}\n")
        fh.write("TOPICS\n")
        for t in range(model.topic_count):
            row = model.word_given_topic[t]
            for w in np.flatnonzero(row > 0):
                fh.write(f"{t}\t{model.words[w]}\t{row[w]:.9g}\n")


def read_model(path, words=None):
    """Load a ``HLSM-MODEL v1`` file.

    ``words`` (the vocabulary the model was trained on) must hash to the
    stored ``vocab_sha256``; without it, words are ordered as they first
    appear in the TOPICS section.
    """
    lines = read_lines(path)
    _, i = read_header(lines, MODEL_MAGIC, path)
    try:
        return _parse_model(lines, i, path, words)
    except (IndexError, KeyError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed model file ({exc!r})") from exc


def _parse_model(lines, i, path, words):
    fields = {}
    while i < len(lines) and "=" in lines[i] and not lines[i].startswith("#"):
        k, _, v = lines[i].partition("=")
        fields[k] = v
        i += 1
    meta = {}
    while i < len(lines) and lines[i].startswith("# "):
        k, _, v = lines[i][2:].partition(": ")
        meta[k] = v
        i += 1
    if i >= len(lines) or lines[i] != "PRIORS":
        raise FormatError(f"{path}: missing PRIORS section")
    k_topics = int(fields["topic_count"])
    if words is not None and vocabulary_hash(words) != fields.get("vocab_sha256"):
        raise VocabularyMismatchError(f"{path}: vocabulary does not match the model")
    prior = np.zeros(k_topics)
    i += 1
    while lines[i] != "TOPICS":
        t, p = lines[i].split("\t")
        prior[int(t)] = float(p)
        i += 1
    rows = []
    for line in lines[i + 1:]:
        if line:
            t, w, p = line.split("\t")
            rows.append((int(t), w, float(p)))
    if words is None:
        seen = {}
        for _, w, _ in rows:
            seen.setdefault(w, len(seen))
        words = list(seen)
    index = {w: k for k, w in enumerate(words)}
    pw_t = np.zeros((k_topics, len(words)))
    for t, w, p in rows:
        if w not in index:
            raise FormatError(f"{path}: word {w!r} not in vocabulary")
        pw_t[t, index[w]] = p
    # stored at 9 significant digits; restore exact normalization
    pw_t /= np.maximum(pw_t.sum(axis=1, keepdims=True), np.finfo(float).tiny)
    prior /= prior.sum()
    model = TopicModel(k_topics, pw_t, prior, float(fields["eta_selected"]),
                       float(fields["log_likelihood"]), tuple(words))
    return model, meta
