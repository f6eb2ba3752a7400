"""Hierarchical map equation: evaluation and greedy minimization.

Flow is the stationary distribution of an undirected random walk without
teleportation, so a node's visit rate is its strength over twice the total
edge weight and the flow along one direction of an edge is its weight over
twice the total.  A module's exit rate equals its enter rate.

The optimizer is a Louvain-style search (greedy node moves, aggregation,
repeat) on the two-level objective, followed by recursive attempts to split
leaf modules into submodules and to group sibling modules under new index
levels.  Every structural change is accepted only if it lowers the total
codelength by more than ``TOL`` bits.
"""
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from ._format import FormatError, read_header, read_lines, write_header

logger = logging.getLogger(__name__)

TREE_MAGIC = "HLSM-TREE v1"
TOL = 1e-10


def plogp(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log2(x[pos])
    return out


def _plogp(x):
    return x * math.log2(x) if x > 0 else 0.0


def codebook_bits(rates):
    """Rate-weighted entropy ``q * H(rates / q)`` of one codebook, in bits.

    ``rates`` lists the use rate of every codeword; ``q`` is their sum.
    """
    rates = np.asarray(rates, dtype=np.float64)
    return float(plogp(rates.sum()) - plogp(rates).sum())


@dataclass(frozen=True)
class FlowNetwork:
    nodes: np.ndarray            # graph node ids, index k <-> nodes[k]
    node_visit_rate: np.ndarray
    src: np.ndarray              # edge endpoints as indices into ``nodes``
    dst: np.ndarray
    edge_flow: np.ndarray        # both directions summed
    adjacency: sp.csr_matrix = field(repr=False)  # per-direction flow, symmetric

    @property
    def n(self):
        return len(self.nodes)

    def index_of(self):
        return {int(v): k for k, v in enumerate(self.nodes)}


def compute_flow(g):
    if g.n_edges == 0:
        raise ValueError("cannot compute flow on a graph without edges")
    nodes = g.nodes
    pos = np.full(g.n_words, -1, dtype=np.int64)
    pos[nodes] = np.arange(len(nodes))
    src, dst = pos[g.src], pos[g.dst]
    w = np.asarray(g.weight, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("edge weights must be positive")
    total = w.sum()
    strength = np.bincount(src, w, len(nodes)) + np.bincount(dst, w, len(nodes))
    half = w / (2 * total)
    adj = sp.csr_matrix(
        (np.concatenate([half, half]), (np.concatenate([src, dst]), np.concatenate([dst, src]))),
        shape=(len(nodes), len(nodes)),
    )
    adj.sum_duplicates()
    return FlowNetwork(nodes, strength / (2 * total), src, dst, w / total, adj)


# ---------------------------------------------------------------------------
# Hierarchy representation


@dataclass
class Module:
    """A tree node: either an internal module (``children``) or a leaf
    module holding graph nodes (``nodes``), never both."""
    children: list = field(default_factory=list)
    nodes: list = field(default_factory=list)

    @property
    def is_leaf(self):
        return not self.children

    def all_nodes(self):
        if self.is_leaf:
            return list(self.nodes)
        out = []
        for c in self.children:
            out.extend(c.all_nodes())
        return out


@dataclass
class HierarchyPartition:
    root: Module

    @classmethod
    def one_module(cls, nodes):
        return cls(Module(children=[Module(nodes=sorted(int(v) for v in nodes))]))

    @classmethod
    def from_flat(cls, groups):
        groups = [sorted(int(v) for v in g) for g in groups if len(g)]
        return cls(Module(children=[Module(nodes=g) for g in groups]))

    def first_level(self):
        if self.root.is_leaf:
            return [set(self.root.nodes)]
        return [set(c.all_nodes()) for c in self.root.children]

    def depth(self):
        def rec(m):
            return 0 if m.is_leaf else 1 + max(rec(c) for c in m.children)
        return rec(self.root)

    def iter_leaves(self):
        """Yield ``(path, module)`` for every leaf module; path is 1-based."""
        def rec(m, path):
            if m.is_leaf:
                yield path, m
            else:
                for k, c in enumerate(m.children, start=1):
                    yield from rec(c, path + (k,))
        yield from rec(self.root, ())

    def canonicalize(self):
        """Sort nodes and order siblings by their smallest node id."""
        def rec(m):
            if m.is_leaf:
                m.nodes = sorted(int(v) for v in m.nodes)
                return m.nodes[0]
            keys = [rec(c) for c in m.children]
            m.children = [c for _, c in sorted(zip(keys, m.children), key=lambda t: t[0])]
            return min(keys)
        rec(self.root)
        return self

    def validate(self, nodes):
        seen = []

        def rec(m):
            if m.children and m.nodes:
                raise ValueError("a module holds either submodules or nodes, not both")
            if not m.children and not m.nodes:
                raise ValueError("empty module")
            seen.extend(m.nodes)
            for c in m.children:
                rec(c)
        rec(self.root)
        if len(seen) != len(set(seen)) or set(seen) != {int(v) for v in nodes}:
            raise ValueError("hierarchy leaves do not partition the network's nodes")


def leaf_modules(h):
    """Deepest-level modules ordered by their smallest node id."""
    leaves = [frozenset(m.nodes) for _, m in h.iter_leaves()]
    return sorted(leaves, key=min)


# ---------------------------------------------------------------------------
# Codelength evaluation


@dataclass(frozen=True)
class CodelengthReport:
    total_bits: float
    index_terms: dict   # module path -> q_switch * H(Q) of its index codebook
    leaf_terms: dict    # leaf module path -> p_in * H(P)


def _module_rates(f, h):
    """Visit and exit rates of every module, keyed by path."""
    index = f.index_of()
    paths = {}  # node index -> path of its leaf module

    def rec(m, path):
        if m.is_leaf:
            for v in m.nodes:
                if int(v) not in index:
                    raise ValueError(f"node {v} is not in the flow network")
                paths[index[int(v)]] = path
        else:
            for k, c in enumerate(m.children, start=1):
                rec(c, path + (k,))
    rec(h.root, ())
    if len(paths) != f.n:
        raise ValueError("hierarchy leaves do not partition the network's nodes")

    visit, exit_ = {}, {}
    for k, path in paths.items():
        for d in range(len(path) + 1):
            visit[path[:d]] = visit.get(path[:d], 0.0) + f.node_visit_rate[k]
            exit_.setdefault(path[:d], 0.0)
    half = f.edge_flow / 2
    for u, v, fl in zip(f.src, f.dst, half):
        pu, pv = paths[u], paths[v]
        c = 0
        while c < len(pu) and c < len(pv) and pu[c] == pv[c]:
            c += 1
        for d in range(c + 1, len(pu) + 1):
            exit_[pu[:d]] += fl
        for d in range(c + 1, len(pv) + 1):
            exit_[pv[:d]] += fl
    return paths, visit, exit_


def codelength(f, h):
    """Evaluate the hierarchical map equation of ``h`` on flow ``f``."""
    paths, visit, exit_ = _module_rates(f, h)
    members = {}
    for k, path in paths.items():
        members.setdefault(path, []).append(k)
    index_terms, leaf_terms = {}, {}

    def rec(m, path):
        if m.is_leaf:
            rates = np.concatenate([[exit_[path]], f.node_visit_rate[members[path]]])
            leaf_terms[path] = codebook_bits(rates)
        else:
            kids = [path + (k,) for k in range(1, len(m.children) + 1)]
            index_terms[path] = codebook_bits([exit_[path]] + [exit_[p] for p in kids])
            for c, p in zip(m.children, kids):
                rec(c, p)
    rec(h.root, ())
    total = math.fsum(list(index_terms.values()) + list(leaf_terms.values()))
    return CodelengthReport(total, index_terms, leaf_terms)


def _labels_array(f, partition):
    if isinstance(partition, dict):
        index = f.index_of()
        labels = np.full(f.n, -1, dtype=np.int64)
        keys = {}
        for v, m in partition.items():
            labels[index[int(v)]] = keys.setdefault(m, len(keys))
        if np.any(labels < 0):
            raise ValueError("partition does not cover every node")
        return labels
    labels = np.asarray(partition)
    if labels.shape != (f.n,):
        raise ValueError("partition must label every node of the flow network")
    return np.unique(labels, return_inverse=True)[1].astype(np.int64)


def two_level_codelength(f, partition):
    """Two-level map equation for a flat module assignment.

    ``partition`` is either a sequence of labels aligned with ``f.nodes`` or
    a dict mapping node id to label.
    """
    labels = _labels_array(f, partition)
    k = labels.max() + 1
    visit = np.bincount(labels, f.node_visit_rate, k)
    cut = labels[f.src] != labels[f.dst]
    half = f.edge_flow[cut] / 2
    exit_ = np.bincount(labels[f.src[cut]], half, k) + np.bincount(labels[f.dst[cut]], half, k)
    return float(
        plogp(exit_.sum()) - 2 * plogp(exit_).sum()
        + plogp(exit_ + visit).sum() - plogp(f.node_visit_rate).sum()
    )


# ---------------------------------------------------------------------------
# Search


@dataclass
class _Scope:
    """Items to be grouped inside one parent module.

    ``weight`` is each item's own codeword rate (node visit rate, or enter
    rate when the items are modules), ``adj`` the per-direction flow between
    items, ``ext`` the flow from each item out of the parent, and ``base`` the
    parent's exit rate.
    """
    weight: np.ndarray
    adj: sp.csr_matrix
    ext: np.ndarray
    base: float

    @property
    def n(self):
        return len(self.weight)

    def out_flow(self):
        return self.ext + np.asarray(self.adj.sum(axis=1)).ravel()

    def aggregate(self, assign):
        k = int(assign.max()) + 1
        coo = self.adj.tocoo()
        r, c = assign[coo.row], assign[coo.col]
        keep = r != c
        adj = sp.csr_matrix((coo.data[keep], (r[keep], c[keep])), shape=(k, k))
        adj.sum_duplicates()
        return _Scope(np.bincount(assign, self.weight, k), adj,
                      np.bincount(assign, self.ext, k), self.base)

    def module_stats(self, assign):
        k = int(assign.max()) + 1
        coo = self.adj.tocoo()
        cut = assign[coo.row] != assign[coo.col]
        q = np.bincount(assign, self.ext, k) + np.bincount(assign[coo.row[cut]], coo.data[cut], k)
        return np.bincount(assign, self.weight, k), q

    def objective(self, assign):
        p, q = self.module_stats(assign)
        return float(plogp(self.base + q.sum()) - 2 * plogp(q).sum() + plogp(q + p).sum()
                     - plogp(self.weight).sum())


def _relabel(assign):
    """Compact labels ordered by first appearance."""
    _, first, inv = np.unique(assign, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


@numba.njit(cache=True)
def _nb_plogp(x):
    return x * math.log2(x) if x > 0 else 0.0


@numba.njit(cache=True)
def _sweep(perm, assign, indptr, indices, data, w, out, p_mod, q_mod, size, is_empty,
           first_empty, sum_q, base, tol, acc, mark, touched):
    """One pass of greedy moves over ``perm``; mutates the module state.

    Candidates are the modules of an item's neighbours plus, when the item
    is not alone, the lowest-numbered empty module.  Ties go to the lowest
    module id.  Returns ``(moves, sum_q, first_empty)``.
    """
    n = len(assign)
    moved = 0
    for i in perm:
        a = assign[i]
        nt = 0
        for k in range(indptr[i], indptr[i + 1]):
            m = assign[indices[k]]
            if not mark[m]:
                mark[m] = True
                touched[nt] = m
                nt += 1
            acc[m] += data[k]
        f_ia = acc[a] if mark[a] else 0.0
        cand = np.sort(touched[:nt])
        qa_new = max(q_mod[a] - out[i] + 2 * f_ia, 0.0)
        pa_new = max(p_mod[a] - w[i], 0.0)
        fixed = (-_nb_plogp(base + sum_q)
                 - 2 * (_nb_plogp(qa_new) - _nb_plogp(q_mod[a]))
                 + _nb_plogp(qa_new + pa_new) - _nb_plogp(q_mod[a] + p_mod[a]))
        use_empty = size[a] > 1 and first_empty < n
        best_b, best_delta, best_sum, best_q, best_p = -1, 0.0, 0.0, 0.0, 0.0
        j = 0
        while j < nt or use_empty:
            # merge the sorted neighbour modules with the empty candidate
            if use_empty and (j >= nt or first_empty < cand[j]):
                b, f_ib = first_empty, 0.0
                use_empty = False
            else:
                b = cand[j]
                j += 1
                if b == a:
                    continue
                f_ib = acc[b]
            qb_new = max(q_mod[b] + out[i] - 2 * f_ib, 0.0)
            pb_new = p_mod[b] + w[i]
            sum_new = sum_q - q_mod[a] + qa_new - q_mod[b] + qb_new
            delta = (fixed + _nb_plogp(base + sum_new)
                     - 2 * (_nb_plogp(qb_new) - _nb_plogp(q_mod[b]))
                     + _nb_plogp(qb_new + pb_new) - _nb_plogp(q_mod[b] + p_mod[b]))
            if best_b < 0 or delta < best_delta:
                best_b, best_delta, best_sum, best_q, best_p = b, delta, sum_new, qb_new, pb_new
        for k in range(nt):
            acc[touched[k]] = 0.0
            mark[touched[k]] = False
        if best_b < 0 or best_delta >= -tol:
            continue
        b = best_b
        if size[b] == 0:
            is_empty[b] = False
            if b == first_empty:
                while first_empty < n and not is_empty[first_empty]:
                    first_empty += 1
        sum_q = best_sum
        q_mod[a], p_mod[a] = qa_new, pa_new
        q_mod[b], p_mod[b] = best_q, best_p
        size[a] -= 1
        size[b] += 1
        if size[a] == 0:
            q_mod[a] = p_mod[a] = 0.0
            is_empty[a] = True
            first_empty = min(first_empty, a)
        assign[i] = b
        moved += 1
    return moved, sum_q, first_empty


def _move_items(scope, assign, rng, max_iters):
    """Greedy single-item moves until no move lowers the objective."""
    n = scope.n
    assign = assign.astype(np.int64)
    p_mod, q_mod = scope.module_stats(assign)
    p_mod = np.concatenate([p_mod, np.zeros(n - len(p_mod))])
    q_mod = np.concatenate([q_mod, np.zeros(n - len(q_mod))])
    size = np.bincount(assign, minlength=n).astype(np.int64)
    is_empty = size == 0
    first_empty = int(np.argmax(is_empty)) if is_empty.any() else n
    sum_q = float(q_mod.sum())
    adj = scope.adj
    indptr = adj.indptr.astype(np.int64)
    indices = adj.indices.astype(np.int64)
    data = adj.data.astype(np.float64)
    w = np.ascontiguousarray(scope.weight, dtype=np.float64)
    out = scope.out_flow().astype(np.float64)
    acc, mark, touched = np.zeros(n), np.zeros(n, dtype=np.bool_), np.zeros(n, dtype=np.int64)
    moved_any = False
    for _ in range(max_iters):
        moved, sum_q, first_empty = _sweep(
            rng.permutation(n).astype(np.int64), assign, indptr, indices, data, w, out,
            p_mod, q_mod, size, is_empty, first_empty, sum_q, float(scope.base), TOL,
            acc, mark, touched)
        if moved == 0:
            break
        moved_any = True
    return assign, moved_any


def _louvain(scope, rng, max_iters, init=None):
    """Move items, aggregate modules into items, repeat."""
    member = np.arange(scope.n)
    cur = scope
    assign = np.arange(scope.n) if init is None else _relabel(init)
    for _ in range(max_iters):
        assign, _ = _move_items(cur, assign, rng, max_iters)
        assign = _relabel(assign)
        member = assign[member]
        k = int(assign.max()) + 1
        if k == cur.n:
            break
        cur = cur.aggregate(assign)
        assign = np.arange(k)
    return member


def _two_level(scope, rng, max_iters, trials):
    """Best flat partition of a scope over several seeded trials."""
    best, best_len = None, math.inf
    for _ in range(trials):
        member = _louvain(scope, rng, max_iters)
        length = scope.objective(member)
        # fine-tune: re-run item moves from the found partition
        for _ in range(max_iters):
            cand = _louvain(scope, rng, max_iters, init=member)
            cand_len = scope.objective(cand)
            if cand_len < length - TOL:
                member, length = cand, cand_len
            else:
                break
        if length < best_len - TOL:
            best, best_len = member, length
    return _relabel(best), best_len


def _local_positions(f, items):
    """Map node index -> position within ``items`` (or -1)."""
    pos = np.full(f.n, -1, dtype=np.int64)
    pos[items] = np.arange(len(items))
    return pos


def _node_scope(f, nodes, base):
    nodes = np.asarray(nodes, dtype=np.int64)
    pos = _local_positions(f, nodes)
    sub = f.adjacency[nodes].tocoo()
    col = pos[sub.col]
    keep = col >= 0
    adj = sp.csr_matrix((sub.data[keep], (sub.row[keep], col[keep])), shape=(len(nodes), len(nodes)))
    adj.sum_duplicates()
    weight = f.node_visit_rate[nodes]
    # a node's total outgoing flow equals its visit rate
    ext = np.maximum(weight - np.asarray(adj.sum(axis=1)).ravel(), 0.0)
    return _Scope(weight, adj, ext, base)


def _children_scope(f, groups, base):
    """Scope whose items are the modules covering node sets ``groups``."""
    nodes = np.concatenate(groups)
    label = np.full(f.n, -1, dtype=np.int64)
    for k, g in enumerate(groups):
        label[g] = k
    sub = f.adjacency[nodes].tocoo()
    r = label[nodes[sub.row]]
    c = label[sub.col]
    inside = c >= 0
    cross = inside & (r != c)
    k = len(groups)
    adj = sp.csr_matrix((sub.data[cross], (r[cross], c[cross])), shape=(k, k))
    adj.sum_duplicates()
    out_of_parent = np.bincount(r[~inside], sub.data[~inside], k)
    exit_ = out_of_parent + np.asarray(adj.sum(axis=1)).ravel()
    return _Scope(exit_, adj, out_of_parent, base)


def _exit_rate(f, nodes):
    sc = _node_scope(f, nodes, 0.0)
    return float(sc.ext.sum())


class _Refiner:
    def __init__(self, f, rng, max_iters, trials):
        self.f, self.rng, self.max_iters, self.trials = f, rng, max_iters, trials

    def refine(self, module, exit_rate, depth=0):
        if module.is_leaf and len(module.nodes) > 1:
            self._try_split(module, exit_rate)
        if not module.is_leaf:
            self._try_group(module, exit_rate)
            for child in module.children:
                self.refine(child, _exit_rate(self.f, child.all_nodes()), depth + 1)

    def _try_split(self, module, exit_rate):
        nodes = np.asarray(module.nodes, dtype=np.int64)
        sc = _node_scope(self.f, nodes, exit_rate)
        member, _ = _two_level(sc, self.rng, self.max_iters, self.trials)
        k = int(member.max()) + 1
        if k < 2:
            return False
        p, q = sc.module_stats(member)
        old = codebook_bits(np.concatenate([[exit_rate], sc.weight]))
        new = codebook_bits(np.concatenate([[exit_rate], q]))
        new += sum(codebook_bits(np.concatenate([[q[j]], sc.weight[member == j]])) for j in range(k))
        if new >= old - TOL:
            return False
        module.children = [Module(nodes=nodes[member == j].tolist()) for j in range(k)]
        module.nodes = []
        logger.debug("split module of %d nodes into %d submodules (-%.3g bits)",
                     len(nodes), k, old - new)
        return True

    def _try_group(self, module, exit_rate):
        for _ in range(self.max_iters):
            kids = module.children
            if len(kids) < 3:
                return
            groups = [np.asarray(c.all_nodes(), dtype=np.int64) for c in kids]
            sc = _children_scope(self.f, groups, exit_rate)
            member, _ = _two_level(sc, self.rng, self.max_iters, self.trials)
            k = int(member.max()) + 1
            if not 1 < k < len(kids):
                return
            p, q = sc.module_stats(member)
            sizes = np.bincount(member, minlength=k)
            top = [q[j] if sizes[j] > 1 else sc.weight[member == j][0] for j in range(k)]
            old = codebook_bits(np.concatenate([[exit_rate], sc.weight]))
            new = codebook_bits(np.concatenate([[exit_rate], top]))
            new += sum(codebook_bits(np.concatenate([[q[j]], sc.weight[member == j]]))
                       for j in range(k) if sizes[j] > 1)
            if new >= old - TOL:
                return
            module.children = [
                Module(children=[kids[i] for i in np.flatnonzero(member == j)])
                if sizes[j] > 1 else kids[int(np.flatnonzero(member == j)[0])]
                for j in range(k)
            ]
            logger.debug("grouped %d modules under %d index codebooks (-%.3g bits)",
                         len(kids), k, old - new)


def optimize_partition(f, seed=0, max_iters=100, trials=5):
    """Search for a hierarchy minimizing the hierarchical map equation.

    Deterministic for a fixed ``seed``.  Never returns a hierarchy longer
    than the one-module baseline.
    """
    rng = np.random.default_rng(seed)
    root_scope = _Scope(f.node_visit_rate, f.adjacency, np.zeros(f.n), 0.0)
    member, flat_len = _two_level(root_scope, rng, max_iters, trials)
    one_len = float(-plogp(f.node_visit_rate).sum())
    k = int(member.max()) + 1
    if k == 1 or flat_len >= one_len - TOL:
        root = Module(children=[Module(nodes=list(range(f.n)))])
    else:
        root = Module(children=[Module(nodes=np.flatnonzero(member == j).tolist()) for j in range(k)])

    refiner = _Refiner(f, rng, max_iters, trials)
    if len(root.children) == 1:
        refiner.refine(root.children[0], 0.0)
    else:
        refiner.refine(root, 0.0)
        # the first level may have changed; revisit index levels at the root
        refiner._try_group(root, 0.0)

    def relabel(m):
        if m.is_leaf:
            m.nodes = [int(f.nodes[k]) for k in m.nodes]
        for c in m.children:
            relabel(c)
    relabel(root)
    h = HierarchyPartition(root).canonicalize()
    logger.info("hierarchy: %d first-level modules, %d leaf modules, depth %d",
                len(root.children), len(leaf_modules(h)), h.depth())
    return h


# ---------------------------------------------------------------------------
# Tree file


def write_tree(h, words, path, meta=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, TREE_MAGIC, meta)
        root = h.root if not h.root.is_leaf else Module(children=[h.root])
        for p, m in HierarchyPartition(root).iter_leaves():
            label = ":".join(str(k) for k in p)
            for v in sorted(m.nodes):
                fh.write(f"{label}\t{words[v]}\n")


def read_tree(path, words):
    """Load a ``HLSM-TREE v1`` file, mapping words through ``words``."""
    lines = read_lines(path)
    meta, i = read_header(lines, TREE_MAGIC, path)
    index = {w: k for k, w in enumerate(words)}
    root = Module()
    for lineno in range(i, len(lines)):
        line = lines[lineno]
        if not line or line.startswith("#"):
            continue
        label, sep, word = line.partition("\t")
        if not sep or word not in index:
            raise FormatError(f"{path}:{lineno + 1}: bad tree line")
        m = root
        for step in (int(x) for x in label.split(":")):
            while len(m.children) < step:
                m.children.append(Module())
            m = m.children[step - 1]
        m.nodes.append(index[word])
    return HierarchyPartition(root), meta
