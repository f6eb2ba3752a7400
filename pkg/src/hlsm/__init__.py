"""Hierarchical latent semantic topic models.

Words are embedded by truncated SVD of the term-document matrix, linked into
a cosine-similarity graph, clustered hierarchically by minimizing the map
equation, and the leaf clusters are refined into topics by a likelihood
driven reassignment of infrequent topics.
"""
from .corpus import Corpus, Document, Vocabulary, preprocess, read_corpus, split_corpus, write_corpus
from .evaluation import nearest_centroid_accuracy, perplexity, perplexity_report
from .graph import WordGraph, build_graph
from .lsa import WordEmbedding, truncated_svd
from .mapeq import HierarchyPartition, codelength, compute_flow, optimize_partition
from .pipeline import TrainResult, train
from .refine import TopicModel, read_model, write_model

__version__ = "0.1.0"

__all__ = [
    "Corpus", "Document", "Vocabulary", "preprocess", "read_corpus", "split_corpus", "write_corpus",
    "nearest_centroid_accuracy", "perplexity", "perplexity_report", "WordGraph", "build_graph",
    "WordEmbedding", "truncated_svd", "HierarchyPartition", "codelength", "compute_flow",
    "optimize_partition", "TrainResult", "train", "TopicModel", "read_model", "write_model",
]
