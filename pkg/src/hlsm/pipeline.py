"""End-to-end training: embedding -> word graph -> hierarchy -> topics."""
import logging
from dataclasses import dataclass

import numpy as np

from . import graph as graph_mod
from . import lsa, mapeq, refine

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


@dataclass
class TrainResult:
    embedding: lsa.WordEmbedding
    graph: graph_mod.WordGraph
    hierarchy: mapeq.HierarchyPartition | None
    baseline: refine.TopicAssignmentState
    model: refine.TopicModel


def train(corpus, svd_rank=None, threshold=graph_mod.DEFAULT_THRESHOLD, seed=0,
          max_iters=100, trials=5):
    words = corpus.vocabulary.words
    try:
        m = lsa.build_term_doc_matrix(corpus)
        # requested rank, clamped to min(n_words, n_docs) - 1
        rank = lsa.default_rank(m.rows, m.cols, cap=svd_rank or 100)
        emb = lsa.truncated_svd(m, rank, seed=seed)
    except (ValueError, lsa.ConvergenceError) as exc:
        raise StageError("lsa", exc) from exc

    try:
        pairs = graph_mod.cooccurring_pairs(m)
        g = graph_mod.build_graph(emb, pairs, threshold)
    except ValueError as exc:
        raise StageError("graph", exc) from exc
    if g.n_edges < max(1, 0.01 * len(words)):
        logger.warning("word graph is near-empty (%d edges for %d words); "
                       "most words will be handled as isolated", g.n_edges, len(words))

    hierarchy = None
    leaves = []
    if g.n_edges:
        try:
            flow = mapeq.compute_flow(g)
            hierarchy = mapeq.optimize_partition(flow, seed=seed, max_iters=max_iters, trials=trials)
            leaves = mapeq.leaf_modules(hierarchy)
        except ValueError as exc:
            raise StageError("mapeq", exc) from exc

    try:
        state = refine.initial_topics(corpus, leaves)
        baseline = refine.assign_singletons(state, set(np.asarray(g.isolated).tolist()))
        model = refine.sweep_eta(baseline, words=words)
    except ValueError as exc:
        raise StageError("refine", exc) from exc
    logger.info("trained %d topics (eta=%.2f, log-likelihood %.6g)",
                model.topic_count, model.eta_selected, model.log_likelihood)
    return TrainResult(emb, g, hierarchy, baseline, model)
