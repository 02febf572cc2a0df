"""Recursive construction of the topic tree.

Each node factorizes its document representation into N topics, assigns
every document to its strongest topic, and derives each child's
representation by reweighting the root representation's rows with the
topic's hierarchy-expanded term vector. Traversal is depth-first and keeps
at most one branch of representations alive, which an instrumented gauge
verifies: the number of simultaneously live representation matrices never
exceeds max_depth + 1.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .corpus import DocTermRepresentation, Vocabulary
from .errors import ConfigurationError, ContractError, ShapeError
from .nmf import NmfConfig, factorize

log = logging.getLogger(__name__)

REWEIGHT_HIERARCHY = "hierarchy"
REWEIGHT_ONES = "ones"


@dataclass
class TrainConfig:
    """Hyperparameters for one tree-building run.

    Defaults follow the best-performing configuration for mid-size corpora:
    threshold 0.1 with 500-term neighborhoods, 10 topics per node, 3 levels.
    `reweight_mode` "ones" disables parent guidance entirely (plain recursive
    factorization of root-representation rows), kept as a test mode.
    """

    n_topics: int = 10
    max_depth: int = 3
    min_docs: int = 50
    alpha: float = 0.1
    k_s: int = 500
    k_h: int = 500
    seed: int = 42
    space: str = "hyperbolic"
    reweight_mode: str = REWEIGHT_HIERARCHY
    top_terms: int = 10
    nmf_max_iter: int = 300
    nmf_tol: float = 1e-5
    nmf_init: str = "random-uniform"

    def validate(self):
        if self.n_topics < 2:
            raise ConfigurationError("n_topics must be >= 2")
        if self.max_depth < 1:
            raise ConfigurationError("max_depth must be >= 1")
        if self.min_docs < self.n_topics:
            raise ConfigurationError("min_docs must be >= n_topics")
        if self.reweight_mode not in (REWEIGHT_HIERARCHY, REWEIGHT_ONES):
            raise ConfigurationError(f"unknown reweight_mode {self.reweight_mode!r}")
        if self.top_terms < 1:
            raise ConfigurationError("top_terms must be >= 1")


@dataclass
class TopicNode:
    """One topic: its term weights, ranked terms, documents, and children."""

    node_id: str
    level: int
    topic_index: int
    term_weights: np.ndarray | None
    top_terms: list[tuple[int, float]]
    doc_ids: list[str]
    children: list["TopicNode"] = field(default_factory=list)


@dataclass
class TopicTree:
    roots: list[TopicNode]
    config: dict
    provenance: dict

    def nodes(self):
        """All nodes in depth-first preorder."""
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def nodes_at_level(self, level: int) -> list[TopicNode]:
        return [n for n in self.nodes() if n.level == level]

    @property
    def n_nodes(self) -> int:
        return sum(1 for _ in self.nodes())

    @property
    def depth(self) -> int:
        return max((n.level for n in self.nodes()), default=0)


class LiveMatrixGauge:
    """Counts representation matrices currently alive; records the peak."""

    def __init__(self):
        self.count = 0
        self.peak = 0

    @contextmanager
    def live(self):
        self.count += 1
        self.peak = max(self.peak, self.count)
        try:
            yield
        finally:
            self.count -= 1


def assign_documents(w: np.ndarray) -> list[list[int]]:
    """Partition row indices by each row's strongest topic.

    Ties go to the lowest topic index. Rows that are entirely zero have no
    association to any topic and are excluded from every cell (and logged).
    """
    w = np.asarray(w)
    if w.size and w.min() < 0:
        raise ContractError("document-topic matrix must be nonnegative")
    parts: list[list[int]] = [[] for _ in range(w.shape[1])]
    nonzero = w.any(axis=1)
    best = np.argmax(w, axis=1)
    for i in np.flatnonzero(nonzero):
        parts[best[i]].append(int(i))
    n_dropped = int(w.shape[0] - nonzero.sum())
    if n_dropped:
        log.info("%d documents had all-zero topic rows and were left unassigned", n_dropped)
    return parts


def parent_child_reweight(h: np.ndarray, i: int, mh) -> np.ndarray:
    """A topic's term weights expanded through the hierarchy adjacency.

    Entry j sums H[i][w] over every term w whose hierarchy neighborhood
    contains j, boosting terms hierarchically related to the topic's own.
    """
    h = np.atleast_2d(h)
    if not 0 <= i < h.shape[0]:
        raise ShapeError(f"topic index {i} out of range for {h.shape[0]} topics")
    entries = getattr(mh, "entries", mh)
    if entries.shape != (h.shape[1], h.shape[1]):
        raise ShapeError(
            f"hierarchy matrix is {entries.shape}, expected {(h.shape[1], h.shape[1])}"
        )
    return np.asarray(entries.T @ h[i]).ravel()


def next_level_representation(a_parent, m_ti: np.ndarray):
    """Columnwise reweighting of a representation: every row scaled by m_ti."""
    values = a_parent.values if isinstance(a_parent, DocTermRepresentation) else a_parent
    m_ti = np.asarray(m_ti).ravel()
    if values.shape[1] != m_ti.shape[0]:
        raise ShapeError(
            f"representation has {values.shape[1]} columns, reweight vector {m_ti.shape[0]}"
        )
    out = values.multiply(m_ti[None, :]).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    if isinstance(a_parent, DocTermRepresentation):
        return DocTermRepresentation(values=out, doc_ids=list(a_parent.doc_ids))
    return out


def top_words(h: np.ndarray, i: int, n: int) -> list[tuple[int, float]]:
    """The n heaviest terms of topic i, descending, index-ascending on ties."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    h = np.atleast_2d(h)
    if not 0 <= i < h.shape[0]:
        raise ShapeError(f"topic index {i} out of range for {h.shape[0]} topics")
    row = h[i]
    order = np.lexsort((np.arange(row.shape[0]), -row))[: min(n, row.shape[0])]
    return [(int(j), float(row[j])) for j in order]


def build_hierarchy(a0: DocTermRepresentation, mh, config: TrainConfig) -> TopicTree:
    """Depth-first recursive factorization into a topic tree.

    Level 1 factorizes the root representation directly (empty documents
    excluded). For each topic at any level: documents are assigned by
    strongest association, the matching rows are taken from the root
    representation, scaled by the topic's hierarchy-expanded term vector,
    and recursed on. Recursion stops beyond max_depth or below min_docs
    documents; topics whose reweight vector vanishes become leaves.
    """
    config.validate()
    values = a0.values.tocsr()
    n, m = values.shape
    if config.reweight_mode == REWEIGHT_HIERARCHY:
        entries = getattr(mh, "entries", mh)
        if entries.shape != (m, m):
            raise ShapeError(f"hierarchy matrix is {entries.shape}, expected {(m, m)}")
    gauge = LiveMatrixGauge()
    counters = {"unassigned_docs": 0}
    nmf_config = NmfConfig(
        n_topics=config.n_topics,
        max_iter=config.nmf_max_iter,
        tol=config.nmf_tol,
        seed=config.seed,
        init=config.nmf_init,
    )

    def expand(matrix, row_map: np.ndarray, level: int, prefix: str) -> list[TopicNode]:
        pair = factorize(matrix, nmf_config)
        parts = assign_documents(pair.W)
        counters["unassigned_docs"] += matrix.shape[0] - sum(len(p) for p in parts)
        nodes = []
        for i in range(config.n_topics):
            node_id = f"{prefix}{i}"
            rows = np.asarray(parts[i], dtype=np.int64)
            global_rows = row_map[rows]
            node = TopicNode(
                node_id=node_id,
                level=level,
                topic_index=i,
                term_weights=pair.H[i].copy(),
                # zero-weight terms say nothing about the topic; keep them out
                top_terms=[(j, w) for j, w in top_words(pair.H, i, config.top_terms) if w > 0],
                doc_ids=[a0.doc_ids[r] for r in global_rows],
            )
            if level + 1 <= config.max_depth and len(global_rows) >= config.min_docs:
                if config.reweight_mode == REWEIGHT_ONES:
                    m_ti = np.ones(m)
                else:
                    m_ti = parent_child_reweight(pair.H, i, mh)
                if m_ti.any():
                    with gauge.live():
                        child = values[global_rows].multiply(m_ti[None, :]).tocsr()
                        child.eliminate_zeros()
                        node.children = expand(child, global_rows, level + 1, node_id + ".")
                else:
                    log.debug("topic %s has an all-zero reweight vector; leaf", node_id)
            nodes.append(node)
        return nodes

    provenance = {
        "seed": config.seed,
        "hyperparameters": asdict(config),
        "n_documents": n,
        "vocab_size": m,
    }
    with gauge.live():  # the root representation itself
        root_rows = np.flatnonzero(np.diff(values.indptr) > 0)
        provenance["excluded_empty_rows"] = int(n - root_rows.size)
        if root_rows.size < config.min_docs:
            log.warning(
                "only %d nonzero document rows (< min_docs=%d); empty tree",
                root_rows.size, config.min_docs,
            )
            provenance["diagnostic"] = (
                f"root has {root_rows.size} nonzero rows, fewer than min_docs={config.min_docs}"
            )
            provenance["peak_live_matrices"] = gauge.peak
            provenance["unassigned_docs"] = 0
            return TopicTree(roots=[], config=asdict(config), provenance=provenance)
        with gauge.live():  # level-1 input: the nonzero rows
            root_matrix = values[root_rows]
            roots = expand(root_matrix, root_rows, 1, "")
    provenance["peak_live_matrices"] = gauge.peak
    provenance["unassigned_docs"] = counters["unassigned_docs"]
    return TopicTree(roots=roots, config=asdict(config), provenance=provenance)


def tree_to_payload(tree: TopicTree, terms: list[str], top_k: int | None = None) -> dict:
    """The serializable tree structure: config plus a flat preorder node list."""
    nodes = []
    for node in tree.nodes():
        top = node.top_terms if top_k is None else node.top_terms[:top_k]
        nodes.append(
            {
                "id": node.node_id,
                "level": node.level,
                "top_terms": [
                    {"term": terms[j], "weight": w} for j, w in top
                ],
                "doc_ids": list(node.doc_ids),
                "children": [c.node_id for c in node.children],
            }
        )
    return {"config": dict(tree.config), "nodes": nodes}


def tree_from_payload(payload: dict, vocabulary: Vocabulary) -> TopicTree:
    """Rebuild a TopicTree from its payload; term weights stay unset unless
    factor dumps are attached separately."""
    by_id: dict[str, TopicNode] = {}
    for entry in payload["nodes"]:
        top_terms = []
        for item in entry["top_terms"]:
            idx = vocabulary.index.get(item["term"])
            if idx is None:
                raise ContractError(
                    f"tree term {item['term']!r} is not in the corpus vocabulary"
                )
            top_terms.append((idx, float(item["weight"])))
        by_id[entry["id"]] = TopicNode(
            node_id=entry["id"],
            level=int(entry["level"]),
            topic_index=int(entry["id"].rsplit(".", 1)[-1]),
            term_weights=None,
            top_terms=top_terms,
            doc_ids=list(entry["doc_ids"]),
        )
    roots = []
    for entry in payload["nodes"]:
        node = by_id[entry["id"]]
        node.children = [by_id[cid] for cid in entry["children"]]
        if node.level == 1:
            roots.append(node)
    return TopicTree(roots=roots, config=dict(payload.get("config", {})), provenance={})
