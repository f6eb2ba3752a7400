"""Synthetic block corpora with a known generating topic model."""
from dataclasses import dataclass

import numpy as np

from .corpus import preprocess
from .stopwords import DEFAULT_STOPWORDS


def block_words(n_blocks, block_size):
    """Distinct alphabetic pseudo-words, ``block_size`` per block.

    Words are built from letters only so they survive tokenization, and none
    collide with the default stopwords.
    """
    letters = "bcdfghjklmnpqrstvwxz"
    out = []
    for b in range(n_blocks):
        block = []
        for i in range(block_size):
            w = "w" + letters[b % 20] + letters[(b // 20) % 20] + letters[i % 20] + letters[(i // 20) % 20]
            assert w not in DEFAULT_STOPWORDS
            block.append(w)
        out.append(block)
    return out


@dataclass(frozen=True)
class BlockCorpus:
    texts: list
    labels: list
    blocks: list          # word strings per block
    word_probs: np.ndarray  # within-block word distribution
    noise: float

    def corpus(self, min_count=1):
        return preprocess(self.texts, stopwords=(), min_count=min_count, labels=self.labels)


def make_block_corpus(n_docs=200, n_blocks=3, block_size=40, doc_len=50, noise=0.0,
                      zipf=0.0, seed=0):
    """Each document draws ``doc_len`` tokens from one block.

    With probability ``noise`` a token comes instead from a uniformly chosen
    other block.  ``zipf`` > 0 skews the within-block word distribution as
    ``rank ** -zipf``.  Documents cycle through the blocks so labels are
    balanced.
    """
    rng = np.random.default_rng(seed)
    blocks = block_words(n_blocks, block_size)
    probs = np.arange(1, block_size + 1, dtype=np.float64) ** -zipf
    probs /= probs.sum()
    texts, labels = [], []
    for d in range(n_docs):
        b = d % n_blocks
        toks = []
        for _ in range(doc_len):
            src = b
            if noise and n_blocks > 1 and rng.random() < noise:
                src = int(rng.choice([k for k in range(n_blocks) if k != b]))
            toks.append(blocks[src][rng.choice(block_size, p=probs)])
        texts.append(" ".join(toks))
        labels.append(f"block{b}")
    return BlockCorpus(texts, labels, blocks, probs, noise)


def generating_perplexity(bc, test):
    """Perplexity of the true generating model on ``test``.

    Each document's true mixture is its own block with weight ``1 - noise``
    and every other block with an equal share of ``noise``.
    """
    n_blocks = len(bc.blocks)
    word_block, word_rank = {}, {}
    for b, words in enumerate(bc.blocks):
        for r, w in enumerate(words):
            word_block[w], word_rank[w] = b, r
    vocab = test.vocabulary.words
    log_sum, tokens = 0.0, 0
    for doc in test.documents:
        own = int(doc.label.removeprefix("block"))
        for w, c in doc.token_counts.items():
            word = vocab[w]
            b = word_block[word]
            mix = 1 - bc.noise if b == own else bc.noise / (n_blocks - 1)
            log_sum += c * np.log(mix * bc.word_probs[word_rank[word]])
            tokens += c
    return float(np.exp(-log_sum / tokens))
