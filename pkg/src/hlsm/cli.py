"""Command-line front end: ``hlsm preprocess | split | train | eval | cluster``."""
import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass

from . import corpus as corpus_mod
from . import evaluation, mapeq, pipeline, refine
from . import graph as graph_mod
from ._format import VocabularyMismatchError, sha256_file
from .stopwords import load_stopwords

logger = logging.getLogger("hlsm")


@dataclass
class PipelineConfig:
    min_count: int = 3
    stopword_path: str | None = None
    stem: bool = False
    min_length: int = 1
    svd_rank: int = 100  # clamped to min(n_words, n_docs) - 1
    threshold: float = graph_mod.DEFAULT_THRESHOLD
    eta_step: float = 0.01
    eta_max: float = 0.5
    seed: int = 0
    held_out_fraction: float = 0.2
    max_iters: int = 100

    def validate(self):
        if self.min_count < 1:
            raise ValueError("--min-count must be >= 1")
        if self.svd_rank < 1:
            raise ValueError("--svd-rank must be >= 1")
        if not -1 <= self.threshold < 1:
            raise ValueError("--threshold must be in [-1, 1)")
        if not 0 < self.held_out_fraction < 1:
            raise ValueError("--held-out must be in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("--max-iters must be >= 1")


def _config(args):
    cfg = PipelineConfig()
    for key in asdict(cfg):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _meta(cfg, source):
    return {"config": asdict(cfg), "source-sha256": sha256_file(source)}


def _atomic_write(path, writer, *args, **kwargs):
    """Write via a temporary sibling so a failure never leaves a partial file."""
    tmp = f"{path}.tmp"
    try:
        writer(*args, tmp, **kwargs)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def cmd_preprocess(args):
    cfg = _config(args)
    stop = load_stopwords(cfg.stopword_path)
    kw = dict(stopwords=stop, min_count=cfg.min_count, min_length=cfg.min_length, stem=cfg.stem)
    if os.path.isdir(args.input):
        texts, labels, _ = corpus_mod.read_directory(args.input)
        source_hash = None
    else:
        texts, labels = corpus_mod.read_line_file(args.input)
        source_hash = sha256_file(args.input)
    c = corpus_mod.preprocess(texts, labels=labels, **kw)
    meta = {"config": asdict(cfg)}
    if source_hash:
        meta["source-sha256"] = source_hash
    _atomic_write(args.output, lambda p: corpus_mod.write_corpus(c, p, meta))
    logger.info("wrote %s: %d documents, %d words, %d tokens",
                args.output, len(c), len(c.vocabulary), c.vocabulary.total_tokens)


def cmd_split(args):
    cfg = _config(args)
    c, _ = corpus_mod.read_corpus(args.corpus)
    train, test = corpus_mod.split_corpus(c, cfg.held_out_fraction, cfg.seed)
    meta = _meta(cfg, args.corpus)
    _atomic_write(args.train, lambda p: corpus_mod.write_corpus(train, p, meta))
    _atomic_write(args.test, lambda p: corpus_mod.write_corpus(test, p, meta))
    logger.info("split %d documents into %d train / %d test", len(c), len(train), len(test))


def cmd_train(args):
    cfg = _config(args)
    c, _ = corpus_mod.read_corpus(args.corpus)
    result = pipeline.train(c, svd_rank=cfg.svd_rank, threshold=cfg.threshold,
                            seed=cfg.seed, max_iters=cfg.max_iters)
    words = c.vocabulary.words
    meta = _meta(cfg, args.corpus)
    os.makedirs(args.out_dir, exist_ok=True)
    out = {name: os.path.join(args.out_dir, name) for name in ("graph.hlsm", "tree.hlsm", "model.hlsm")}
    _atomic_write(out["graph.hlsm"], lambda p: graph_mod.write_graph(result.graph, words, p, meta))
    tree = result.hierarchy
    if tree is None:
        tree = mapeq.HierarchyPartition(mapeq.Module(children=[]))
    _atomic_write(out["tree.hlsm"], lambda p: mapeq.write_tree(tree, words, p, meta))
    _atomic_write(out["model.hlsm"], lambda p: refine.write_model(result.model, p, meta))
    m = result.model
    logger.info("K=%d topics, eta=%.2f, log-likelihood=%.6g", m.topic_count, m.eta_selected, m.log_likelihood)
    print(f"topics={m.topic_count} eta={m.eta_selected:.2f} log_likelihood={m.log_likelihood:.6f}")


def cmd_eval(args):
    c, _ = corpus_mod.read_corpus(args.corpus)
    try:
        model, _ = refine.read_model(args.model, words=c.vocabulary.words)
    except VocabularyMismatchError as exc:
        raise VocabularyMismatchError(f"model and corpus were built over different vocabularies ({exc})") from exc
    if args.mode == "perplexity":
        print(evaluation.perplexity_report(model, c).line())
    elif args.mode == "features":
        if not args.out:
            raise ValueError("--out is required for features mode")
        _atomic_write(args.out, lambda p: evaluation.export_features(model, c, p))
        logger.info("wrote features for %d documents to %s", len(c), args.out)
    else:
        table = refine.topics_table(model, args.top_n)
        print(refine.format_topics_table(table, model.words), end="")


def cmd_cluster(args):
    cfg = _config(args)
    g, labels, _ = graph_mod.read_graph(args.graph)
    flow = mapeq.compute_flow(g)
    h = mapeq.optimize_partition(flow, seed=cfg.seed, max_iters=cfg.max_iters)
    _atomic_write(args.output, lambda p: mapeq.write_tree(h, labels, p, _meta(cfg, args.graph)))
    print(f"codelength={mapeq.codelength(flow, h).total_bits:.6f} "
          f"modules={len(h.first_level())} leaves={len(mapeq.leaf_modules(h))}")


def build_parser():
    p = argparse.ArgumentParser(prog="hlsm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def seed(sp):
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("preprocess", help="tokenize and filter raw text into a corpus file")
    sp.add_argument("input", help="directory with one subdirectory per class, or a one-document-per-line file")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--min-count", dest="min_count", type=int)
    sp.add_argument("--stopwords", dest="stopword_path")
    sp.add_argument("--stem", action="store_true", default=None)
    sp.add_argument("--min-length", dest="min_length", type=int)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("split", help="stratified train/test split of a corpus file")
    sp.add_argument("corpus")
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--held-out", dest="held_out_fraction", type=float)
    seed(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="fit a topic model; writes graph, tree and model files")
    sp.add_argument("corpus")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--svd-rank", dest="svd_rank", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    seed(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="perplexity, topic features or topic table")
    sp.add_argument("model")
    sp.add_argument("corpus")
    sp.add_argument("--mode", choices=("perplexity", "features", "topics"), default="perplexity")
    sp.add_argument("--out")
    sp.add_argument("--top-n", type=int, default=6)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("cluster", help="hierarchical map-equation clustering of a graph file")
    sp.add_argument("graph")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    seed(sp)
    sp.set_defaults(func=cmd_cluster)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"hlsm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
