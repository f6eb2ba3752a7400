"""Cosine-association word network built over co-occurring word pairs."""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._format import FormatError, read_header, read_lines, write_header
from .lsa import TermDocMatrix

logger = logging.getLogger(__name__)

GRAPH_MAGIC = "HLSM-GRAPH v1"
DEFAULT_THRESHOLD = 0.25


class ZeroNormError(ValueError):
    def __init__(self, word_id):
        super().__init__(f"word {word_id} has a zero embedding vector")
        self.word_id = word_id


@dataclass(frozen=True)
class WordGraph:
    """Undirected weighted word network.

    Edges are stored once with ``src < dst``.  ``n_words`` is the vocabulary
    size, so ``nodes`` and ``isolated`` together cover ``range(n_words)``.
    """
    n_words: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    isolated: np.ndarray

    @property
    def nodes(self):
        return np.unique(np.concatenate([self.src, self.dst]))

    @property
    def n_edges(self):
        return len(self.weight)

    def edges(self):
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.src, self.dst, self.weight)]

    @classmethod
    def from_edges(cls, edges, weights=None, n_words=None):
        """Build a graph from ``(i, j)`` pairs; unit weights unless given."""
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=np.float64)
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        lo, hi = edges.min(axis=1), edges.max(axis=1)
        key = np.unique(np.stack([lo, hi], axis=1), axis=0, return_index=True)[1]
        if len(key) != len(edges):
            raise ValueError("duplicate edges")
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if n_words is None:
            n_words = int(hi.max()) + 1 if len(hi) else 0
        present = np.zeros(n_words, dtype=bool)
        present[lo] = True
        present[hi] = True
        return cls(n_words, lo, hi, w, np.flatnonzero(~present))


def cooccurring_pairs(m):
    """Word pairs ``(i, j)``, ``i < j``, sharing at least one document.

    Returned as an ``(n_pairs, 2)`` array in lexicographic order.
    """
    a = m.matrix if isinstance(m, TermDocMatrix) else sp.csr_matrix(m)
    b = (a > 0).astype(np.int64)
    co = sp.triu(b @ b.T, k=1).tocoo()
    pairs = np.stack([co.row, co.col], axis=1).astype(np.int64)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def cosine_similarity(e, i, j):
    wi, wj = e.vectors[i], e.vectors[j]
    ni, nj = np.linalg.norm(wi), np.linalg.norm(wj)
    if ni == 0:
        raise ZeroNormError(i)
    if nj == 0:
        raise ZeroNormError(j)
    return float(np.clip(wi @ wj / (ni * nj), -1.0, 1.0))


def pair_similarities(e, pairs, chunk=1 << 18):
    """Cosine similarity for each row of ``pairs``; NaN where a norm is zero."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    norms = np.linalg.norm(e.vectors, axis=1)
    unit = np.zeros_like(e.vectors)
    ok = norms > 0
    unit[ok] = e.vectors[ok] / norms[ok, None]
    sims = np.empty(len(pairs))
    for start in range(0, len(pairs), chunk):
        p = pairs[start:start + chunk]
        sims[start:start + chunk] = np.einsum("ij,ij->i", unit[p[:, 0]], unit[p[:, 1]])
    sims = np.clip(sims, -1.0, 1.0)
    sims[~(ok[pairs[:, 0]] & ok[pairs[:, 1]])] = np.nan
    return sims


def build_graph(e, pairs, q=DEFAULT_THRESHOLD):
    """Keep pairs whose similarity exceeds both ``q`` and zero."""
    if not -1 <= q < 1:
        raise ValueError(f"threshold must be in [-1, 1), got {q}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    sims = pair_similarities(e, pairs)
    with np.errstate(invalid="ignore"):
        keep = (sims > q) & (sims > 0)
    src, dst = pairs[keep, 0], pairs[keep, 1]
    present = np.zeros(e.n_words, dtype=bool)
    present[src] = True
    present[dst] = True
    g = WordGraph(e.n_words, src, dst, sims[keep], np.flatnonzero(~present))
    logger.info("word graph: %d nodes, %d edges, %d isolated words",
                e.n_words - len(g.isolated), g.n_edges, len(g.isolated))
    return g


def write_graph(g, words, path, meta=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, GRAPH_MAGIC, meta)
        for i, j, w in zip(g.src, g.dst, g.weight):
            fh.write(f"{words[i]}\t{words[j]}\t{w:.9g}\n")
        fh.write("# isolated: " + ",".join(str(int(i)) for i in g.isolated) + "\n")


def read_graph(path, words=None):
    """Load a ``HLSM-GRAPH v1`` edge list.

    With ``words`` (the vocabulary) labels map to vocabulary ids.  Without
    it, ids are assigned in order of first appearance, which is enough for
    standalone clustering; the isolated trailer is then ignored.
    """
    lines = read_lines(path)
    meta, i = read_header(lines, GRAPH_MAGIC, path)
    index = {w: k for k, w in enumerate(words)} if words is not None else {}
    labels = list(words) if words is not None else []
    edges, weights, isolated = [], [], []
    for lineno in range(i, len(lines)):
        line = lines[lineno]
        if not line:
            continue
        if line.startswith("# isolated:"):
            body = line[len("# isolated:"):].strip()
            isolated = [int(x) for x in body.split(",")] if body else []
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno + 1}: expected word_i<TAB>word_j<TAB>weight")
        ids = []
        for label in parts[:2]:
            if label not in index:
                if words is not None:
                    raise FormatError(f"{path}:{lineno + 1}: unknown word {label!r}")
                index[label] = len(labels)
                labels.append(label)
            ids.append(index[label])
        edges.append(ids)
        weights.append(float(parts[2]))
    g = WordGraph.from_edges(edges, weights, n_words=len(labels))
    if words is not None and isolated and set(isolated) != set(g.isolated.tolist()):
        raise FormatError(f"{path}: isolated trailer disagrees with the edge list")
    return g, labels, meta
