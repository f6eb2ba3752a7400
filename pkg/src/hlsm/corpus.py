"""Corpus ingestion: tokenizing, filtering, vocabulary building and splitting."""
import logging
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._format import FormatError, read_header, read_lines, vocabulary_hash, write_header
from ._threads import worker_count
from .stopwords import DEFAULT_STOPWORDS

logger = logging.getLogger(__name__)

CORPUS_MAGIC = "HLSM-CORPUS v1"

_ALPHA_RUN = re.compile(r"[a-z]+")


@dataclass(frozen=True)
class Document:
    doc_id: int
    label: str | None
    token_counts: dict  # word_id -> count
    # tokens of words outside the vocabulary (only set on held-out splits)
    oov_count: int = 0

    @property
    def length(self):
        return sum(self.token_counts.values())


@dataclass(frozen=True)
class Vocabulary:
    words: tuple
    doc_freq: tuple
    corpus_freq: tuple
    word_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "word_to_id", {w: i for i, w in enumerate(self.words)})
        if len(self.word_to_id) != len(self.words):
            raise ValueError("vocabulary words must be unique")

    def __len__(self):
        return len(self.words)

    @property
    def total_tokens(self):
        return int(sum(self.corpus_freq))

    def digest(self):
        return vocabulary_hash(self.words)


@dataclass(frozen=True)
class Corpus:
    documents: tuple
    vocabulary: Vocabulary
    split_tag: str = "train"

    def __len__(self):
        return len(self.documents)

    @property
    def labels(self):
        return [d.label for d in self.documents]

    @property
    def total_tokens(self):
        return sum(d.length for d in self.documents)


def tokenize(raw_text, stem=False):
    """Lowercase alphabetic tokens of length >= 2; everything else separates."""
    tokens = [t for t in _ALPHA_RUN.findall(raw_text.lower()) if len(t) >= 2]
    if stem:
        tokens = [_stemmer().stem(t) for t in tokens]
    return tokens


_STEMMER = None


def _stemmer():
    global _STEMMER
    if _STEMMER is None:
        try:
            from nltk.stem import PorterStemmer
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise RuntimeError("stemming needs nltk: pip install 'artifact[stem]'") from exc
        _STEMMER = PorterStemmer()
    return _STEMMER


def preprocess(docs, stopwords=DEFAULT_STOPWORDS, min_count=3, labels=None,
               min_length=1, stem=False):
    """Tokenize raw documents and build a filtered :class:`Corpus`.

    Stopwords are removed first, then words occurring fewer than
    ``min_count`` times in the whole corpus.  Documents left with fewer than
    ``min_length`` tokens are dropped.  Word ids follow alphabetical order.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    docs = list(docs)
    if labels is None:
        labels = [None] * len(docs)
    elif len(labels) != len(docs):
        raise ValueError("labels and docs differ in length")

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        tokenized = list(pool.map(lambda text: tokenize(text, stem=stem), docs))
    stopwords = frozenset(stopwords)
    tokenized = [[t for t in toks if t not in stopwords] for toks in tokenized]

    totals = Counter()
    for toks in tokenized:
        totals.update(toks)
    kept_words = sorted(w for w, c in totals.items() if c >= min_count)
    word_to_id = {w: i for i, w in enumerate(kept_words)}

    documents = []
    doc_freq = np.zeros(len(kept_words), dtype=np.int64)
    corpus_freq = np.zeros(len(kept_words), dtype=np.int64)
    for toks, label in zip(tokenized, labels):
        counts = Counter(word_to_id[t] for t in toks if t in word_to_id)
        if sum(counts.values()) < max(min_length, 1):
            continue
        token_counts = dict(sorted(counts.items()))
        for w, c in token_counts.items():
            doc_freq[w] += 1
            corpus_freq[w] += c
        documents.append(Document(len(documents), label, token_counts))

    if not documents:
        raise ValueError("every document is empty after filtering")
    # A word can only lose its documents through min_length drops.
    if np.any(doc_freq == 0):
        return _reindex(documents, kept_words)
    vocab = Vocabulary(tuple(kept_words), tuple(int(x) for x in doc_freq),
                       tuple(int(x) for x in corpus_freq))
    logger.info("preprocessed %d documents, %d word types, %d tokens",
                len(documents), len(vocab), vocab.total_tokens)
    return Corpus(tuple(documents), vocab)


def _reindex(documents, words, split_tag="train"):
    """Rebuild ids and frequencies keeping only words that still occur."""
    counts = Counter()
    dfs = Counter()
    for d in documents:
        for w, c in d.token_counts.items():
            counts[w] += c
            dfs[w] += 1
    old_ids = sorted(counts)
    remap = {old: new for new, old in enumerate(old_ids)}
    vocab = Vocabulary(tuple(words[i] for i in old_ids),
                       tuple(dfs[i] for i in old_ids),
                       tuple(counts[i] for i in old_ids))
    docs = tuple(
        Document(k, d.label, {remap[w]: c for w, c in d.token_counts.items()}, d.oov_count)
        for k, d in enumerate(documents)
    )
    return Corpus(docs, vocab, split_tag)


def read_directory(root_path):
    """Read a directory-per-class tree; return ``(texts, labels, paths)``."""
    if not os.path.isdir(root_path):
        raise FileNotFoundError(f"corpus root not found: {root_path}")
    texts, labels, paths = [], [], []
    for label in sorted(os.listdir(root_path)):
        class_dir = os.path.join(root_path, label)
        if not os.path.isdir(class_dir):
            continue
        for name in sorted(os.listdir(class_dir)):
            path = os.path.join(class_dir, name)
            if not os.path.isfile(path):
                continue
            try:
                with open(path, encoding="utf-8", errors="replace") as fh:
                    texts.append(fh.read())
            except OSError as exc:
                raise OSError(f"cannot read {path}: {exc}") from exc
            labels.append(label)
            paths.append(path)
    if not texts:
        raise ValueError(f"no documents found under {root_path}")
    return texts, labels, paths


def read_line_file(path):
    """One document per line, optionally prefixed by ``label<TAB>``."""
    texts, labels = [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if sep:
                labels.append(label)
                texts.append(text)
            else:
                labels.append(None)
                texts.append(line)
    if not texts:
        raise ValueError(f"no documents found in {path}")
    return texts, labels


def load_directory_corpus(root_path, stopwords=DEFAULT_STOPWORDS, min_count=3, **kwargs):
    texts, labels, _ = read_directory(root_path)
    return preprocess(texts, stopwords=stopwords, min_count=min_count, labels=labels, **kwargs)


def _allocate(group_sizes, n_total):
    """Largest-remainder allocation of ``n_total`` over groups."""
    size = sum(group_sizes)
    exact = [g * n_total / size for g in group_sizes]
    alloc = [int(np.floor(x)) for x in exact]
    order = sorted(range(len(group_sizes)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order[: n_total - sum(alloc)]:
        alloc[i] += 1
    return alloc


def split_corpus(corpus, held_out_fraction=0.2, seed=0):
    """Stratified, seeded train/test split.

    The train corpus gets a vocabulary rebuilt over its own documents; the
    test corpus shares that vocabulary and counts unseen words in
    ``Document.oov_count``.
    """
    if not 0 < held_out_fraction < 1:
        raise ValueError(f"held_out_fraction must be in (0, 1), got {held_out_fraction}")
    n = len(corpus)
    n_test = min(max(int(round(held_out_fraction * n)), 1), n - 1) if n > 1 else 0
    if n_test == 0:
        raise ValueError("need at least 2 documents to split")
    rng = np.random.default_rng(seed)

    groups = {}
    for d in corpus.documents:
        groups.setdefault("" if d.label is None else d.label, []).append(d.doc_id)
    keys = sorted(groups)
    alloc = _allocate([len(groups[k]) for k in keys], n_test)
    test_ids = set()
    for k, n_k in zip(keys, alloc):
        ids = np.array(groups[k])
        rng.shuffle(ids)
        test_ids.update(int(i) for i in ids[:n_k])

    words = corpus.vocabulary.words
    train_docs = [d for d in corpus.documents if d.doc_id not in test_ids]
    train = _reindex(train_docs, words, split_tag="train")
    to_train = train.vocabulary.word_to_id
    test_docs = []
    for d in corpus.documents:
        if d.doc_id not in test_ids:
            continue
        kept, oov = {}, d.oov_count
        for w, c in d.token_counts.items():
            new = to_train.get(words[w])
            if new is None:
                oov += c
            else:
                kept[new] = c
        test_docs.append(Document(len(test_docs), d.label, dict(sorted(kept.items())), oov))
    test = Corpus(tuple(test_docs), train.vocabulary, split_tag="test")
    return train, test


def write_corpus(corpus, path, meta=None):
    meta = dict(meta or {})
    meta.setdefault("split", corpus.split_tag)
    meta["vocab_sha256"] = corpus.vocabulary.digest()
    v = corpus.vocabulary
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, CORPUS_MAGIC, meta)
        for w, cf, df in zip(v.words, v.corpus_freq, v.doc_freq):
            fh.write(f"{w}\t{cf}\t{df}\n")
        fh.write("\n")
        for d in corpus.documents:
            entries = ",".join(f"{w}:{c}" for w, c in sorted(d.token_counts.items()))
            line = f"{d.doc_id}\t{d.label or ''}\t{entries}"
            if d.oov_count:
                line += f"\toov:{d.oov_count}"
            fh.write(line + "\n")


def read_corpus(path):
    """Load a ``HLSM-CORPUS v1`` file; returns ``(corpus, meta)``."""
    lines = read_lines(path)
    meta, i = read_header(lines, CORPUS_MAGIC, path)
    words, cfs, dfs = [], [], []
    while i < len(lines) and lines[i] != "":
        parts = lines[i].split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{i + 1}: bad vocabulary line")
        words.append(parts[0])
        cfs.append(int(parts[1]))
        dfs.append(int(parts[2]))
        i += 1
    vocab = Vocabulary(tuple(words), tuple(dfs), tuple(cfs))
    docs = []
    for lineno in range(i + 1, len(lines)):
        line = lines[lineno]
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise FormatError(f"{path}:{lineno + 1}: bad document line")
        counts = {}
        if parts[2]:
            for item in parts[2].split(","):
                w, c = item.split(":")
                counts[int(w)] = int(c)
        oov = int(parts[3].split(":")[1]) if len(parts) == 4 else 0
        if int(parts[0]) != len(docs):
            raise FormatError(f"{path}:{lineno + 1}: document ids must be contiguous")
        if any(w >= len(vocab) for w in counts):
            raise FormatError(f"{path}:{lineno + 1}: word id out of range")
        docs.append(Document(len(docs), parts[1] or None, counts, oov))
    split_tag = meta.get("split", "train")
    return Corpus(tuple(docs), vocab, split_tag), meta
