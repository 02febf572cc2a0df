"""Poincare-ball geometry over a vocabulary of pretrained word vectors.

Loads embedding files, computes ball distances and k-nearest-neighbor
structures, and assembles the two sparse term-term matrices the pipeline
runs on: a real-valued similarity matrix (neighborhood-normalized,
thresholded) and a binary hierarchy matrix (k-NN adjacency). A Euclidean
mode swaps the ball metric for cosine similarity, leaving everything
downstream unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .corpus import Vocabulary
from .errors import ConfigurationError, ContractError, EmbeddingParseError

log = logging.getLogger(__name__)

HYPERBOLIC = "hyperbolic"
EUCLIDEAN = "euclidean"
SPACES = (HYPERBOLIC, EUCLIDEAN)

# Vectors at or outside the unit sphere are pulled back to this norm.
_BALL_RADIUS = 1.0 - 1e-5
_LOW_COVERAGE = 0.10


def _sq_norms(x: np.ndarray) -> np.ndarray:
    """Row-wise squared Euclidean norms, accumulated dimension by dimension.

    Sequential accumulation keeps results bit-identical to a scalar loop,
    which the test oracles rely on.
    """
    x = np.atleast_2d(x)
    acc = np.zeros(x.shape[0])
    for k in range(x.shape[1]):
        acc = acc + x[:, k] * x[:, k]
    return acc


def poincare_distance(u, v) -> float:
    """Ball distance arcosh(1 + 2|u-v|^2 / ((1-|u|^2)(1-|v|^2))).

    Requires |u| < 1 and |v| < 1. Rounding can push the arcosh argument
    slightly below 1; it is clamped there, giving distance 0.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    diff_sq = float(_sq_norms(u - v)[0])
    denom = (1.0 - float(_sq_norms(u)[0])) * (1.0 - float(_sq_norms(v)[0]))
    arg = 1.0 + 2.0 * diff_sq / denom
    if arg < 1.0:
        arg = 1.0
    return float(np.arccosh(arg))


def poincare_distances(point: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Distances from one ball point to each row of `points`."""
    point = np.asarray(point, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    diff_sq = _sq_norms(points - point[None, :])
    denom = (1.0 - float(_sq_norms(point)[0])) * (1.0 - _sq_norms(points))
    arg = 1.0 + 2.0 * diff_sq / denom
    np.maximum(arg, 1.0, out=arg)
    return np.arccosh(arg)


def euclidean_cosine(u, v) -> float:
    """Cosine similarity in [-1, 1]; defined as 0 when either vector is zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = float(np.sqrt(_sq_norms(u)[0]))
    nv = float(np.sqrt(_sq_norms(v)[0]))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _cosine_row(point: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Cosine similarity of `point` against each row; zero rows map to 0."""
    norms = np.sqrt(_sq_norms(points))
    pn = float(np.sqrt(_sq_norms(point)[0]))
    if pn == 0.0:
        return np.zeros(points.shape[0])
    sims = points @ point
    nonzero = norms > 0.0
    out = np.zeros(points.shape[0])
    out[nonzero] = sims[nonzero] / (norms[nonzero] * pn)
    return out


@dataclass
class EmbeddingTable:
    """Dense vectors for the vocabulary terms found in an embedding file.

    `matrix` holds one row per covered term; `term_indices` maps those rows
    back to vocabulary positions (ascending). Immutable after construction
    and safe to share across threads.
    """

    dim: int
    space: str
    vocab_size: int
    term_indices: np.ndarray  # ascending vocabulary indices, one per row
    matrix: np.ndarray  # (n_covered, dim)
    covered: frozenset[int] = field(repr=False)
    _row_of: dict[int, int] = field(repr=False)

    @property
    def coverage(self) -> float:
        return len(self.term_indices) / self.vocab_size if self.vocab_size else 0.0

    def vector(self, term_index: int) -> np.ndarray:
        """Vector for one vocabulary index; raises on uncovered terms."""
        row = self._row_of.get(term_index)
        if row is None:
            raise ContractError(f"term index {term_index} has no embedding")
        return self.matrix[row]

    def distances_from(self, term_index: int) -> np.ndarray:
        """Distance from one covered term to every covered term (row order)."""
        point = self.vector(term_index)
        if self.space == HYPERBOLIC:
            return poincare_distances(point, self.matrix)
        return 1.0 - _cosine_row(point, self.matrix)


@dataclass
class Neighborhood:
    """Ranked nearest terms around a center, center itself at rank 0."""

    center: int
    members: list[tuple[int, float]]

    def member_indices(self) -> list[int]:
        return [t for t, _ in self.members]


@dataclass
class TermSimilarityMatrix:
    """Sparse m x m term similarity with entries in [0, 1].

    Row w holds neighborhood-normalized similarities of w to terms in its
    own k_s-neighborhood that passed the alpha threshold; the matrix is
    asymmetric by construction. Uncovered terms keep a bare unit diagonal.
    """

    entries: sparse.csr_matrix
    alpha: float
    k_s: int


@dataclass
class TermHierarchyMatrix:
    """Sparse binary m x m adjacency: (w, w') = 1 iff w' is in w's k_h-neighborhood."""

    entries: sparse.csr_matrix
    k_h: int


def load_embeddings(path, vocab: Vocabulary, space: str = HYPERBOLIC) -> EmbeddingTable:
    """Read a word-vector text file, keeping only vocabulary terms.

    Format: optional "<count> <dim>" header, then one term per line followed
    by `dim` decimal values. In hyperbolic mode vectors with norm >= 1 are
    radially projected back inside the ball. Coverage below 10% of the
    vocabulary logs a warning but is not an error.
    """
    if space not in SPACES:
        raise ConfigurationError(f"unknown space {space!r}; expected one of {SPACES}")
    vectors: dict[int, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                except ValueError:
                    pass
                else:
                    continue  # header line
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise EmbeddingParseError("line has no vector components", lineno)
            if len(parts) != dim + 1:
                raise EmbeddingParseError(
                    f"expected {dim} components, found {len(parts) - 1}", lineno
                )
            term = parts[0]
            idx = vocab.index.get(term)
            if idx is None or idx in vectors:
                continue
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=float)
            except ValueError as exc:
                raise EmbeddingParseError(f"bad vector component: {exc}", lineno) from None
            vectors[idx] = vec

    if dim is None:
        dim = 0
    indices = np.array(sorted(vectors), dtype=np.int64)
    matrix = (
        np.vstack([vectors[i] for i in indices])
        if len(indices)
        else np.zeros((0, max(dim, 1)))
    )
    if space == HYPERBOLIC and len(indices):
        norms = np.sqrt(_sq_norms(matrix))
        outside = norms >= 1.0
        if outside.any():
            matrix[outside] *= (_BALL_RADIUS / norms[outside])[:, None]
            log.info("projected %d vectors back inside the unit ball", int(outside.sum()))

    table = EmbeddingTable(
        dim=dim,
        space=space,
        vocab_size=len(vocab),
        term_indices=indices,
        matrix=matrix,
        covered=frozenset(int(i) for i in indices),
        _row_of={int(t): r for r, t in enumerate(indices)},
    )
    level = logging.WARNING if table.coverage < _LOW_COVERAGE else logging.INFO
    log.log(
        level,
        "embedding coverage %.1f%% (%d of %d vocabulary terms)",
        100.0 * table.coverage, len(indices), len(vocab),
    )
    return table


def knn(table: EmbeddingTable, w: int, k: int) -> Neighborhood:
    """The k nearest covered terms to w, w itself at rank 0.

    Neighborhood size k counts the center, so k = 1 yields the center alone.
    Distance ties between candidates break toward the lower vocabulary index.
    If fewer than k terms are covered, all of them are returned.
    """
    if k < 1:
        raise ConfigurationError("neighborhood size must be >= 1")
    if w not in table.covered:
        raise ContractError(f"term index {w} has no embedding")
    dists = table.distances_from(w)
    others = table.term_indices != w
    cand_idx = table.term_indices[others]
    cand_dist = dists[others]
    order = np.lexsort((cand_idx, cand_dist))[: max(k - 1, 0)]
    members = [(w, 0.0)] + [(int(cand_idx[j]), float(cand_dist[j])) for j in order]
    return Neighborhood(center=w, members=members)


def neighborhood_similarity(
    nbhd: Neighborhood, table: EmbeddingTable, center_max: bool = False
) -> list[tuple[int, float]]:
    """Similarity of the center to each member, normalized by neighborhood spread.

    Each distance from the center is divided by the maximum distance over all
    unordered member pairs, then flipped: s = 1 - d / max. With the center a
    member of its own neighborhood this lands every value in [0, 1], the
    center itself at exactly 1. If all members coincide the similarity is 1
    everywhere. `center_max` swaps the exact pairwise maximum for the cheaper
    maximum over center-to-member distances only.
    """
    if len(nbhd.members) < 2:
        raise ContractError("neighborhood similarity needs at least 2 members")
    idx = nbhd.member_indices()
    rows = np.vstack([table.vector(i) for i in idx])
    if table.space == HYPERBOLIC:
        center_dists = poincare_distances(rows[0], rows)
    else:
        center_dists = 1.0 - _cosine_row(rows[0], rows)
    max_dist = float(center_dists.max())
    if not center_max:
        for i in range(1, len(idx)):
            if table.space == HYPERBOLIC:
                row = poincare_distances(rows[i], rows[i + 1 :])
            else:
                row = 1.0 - _cosine_row(rows[i], rows[i + 1 :])
            if row.size:
                max_dist = max(max_dist, float(row.max()))
    if max_dist == 0.0:
        return [(i, 1.0) for i in idx]
    sims = 1.0 - center_dists / max_dist
    return [(i, float(s)) for i, s in zip(idx, sims)]


def _map_over_terms(func, term_indices, workers: int):
    # Rows are independent; a thread pool changes wall-clock order only,
    # never the per-row results, so output stays deterministic.
    if workers <= 1:
        return [func(int(w)) for w in term_indices]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, (int(w) for w in term_indices)))


def build_similarity_matrix(
    table: EmbeddingTable,
    k_s: int,
    alpha: float,
    center_max: bool = False,
    workers: int = 1,
) -> TermSimilarityMatrix:
    """Sparse term-similarity matrix over k_s-neighborhoods, thresholded at alpha.

    Hyperbolic tables use the neighborhood-normalized ball similarity;
    Euclidean tables use cosine similarity clamped at 0. Entries below alpha
    are dropped, the diagonal is 1 for every term, and rows of terms without
    embeddings carry only that diagonal. `workers` > 1 fans the per-term
    computation out over threads.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must be in [0, 1], got {alpha}")
    if k_s < 1:
        raise ConfigurationError("k_s must be >= 1")
    m = table.vocab_size

    def row_for(w: int):
        nbhd = knn(table, w, k_s)
        if len(nbhd.members) < 2:
            return None
        if table.space == HYPERBOLIC:
            sims = neighborhood_similarity(nbhd, table, center_max=center_max)
        else:
            sims = [(i, max(0.0, 1.0 - d)) for i, d in nbhd.members]
            sims[0] = (w, 1.0)
        terms = np.array([i for i, _ in sims], dtype=np.int64)
        values = np.array([s for _, s in sims])
        keep = values >= alpha
        keep[0] = True  # diagonal survives every threshold
        return terms[keep], values[keep]

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diag_done = np.zeros(m, dtype=bool)
    results = _map_over_terms(row_for, table.term_indices, workers)
    for w, result in zip(table.term_indices, results):
        if result is None:
            continue
        terms, values = result
        rows.append(np.full(terms.size, int(w), dtype=np.int64))
        cols.append(terms)
        vals.append(values)
        diag_done[int(w)] = True
    missing = np.flatnonzero(~diag_done)
    if missing.size:
        rows.append(missing)
        cols.append(missing)
        vals.append(np.ones(missing.size))
    entries = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m),
    )
    entries.eliminate_zeros()
    entries.sort_indices()
    return TermSimilarityMatrix(entries=entries, alpha=alpha, k_s=k_s)


def build_hierarchy_matrix(
    table: EmbeddingTable, k_h: int, workers: int = 1
) -> TermHierarchyMatrix:
    """Binary k-NN adjacency over the vocabulary, unit diagonal everywhere."""
    if k_h < 1:
        raise ConfigurationError("k_h must be >= 1")
    m = table.vocab_size

    def row_for(w: int):
        return np.array(knn(table, w, k_h).member_indices(), dtype=np.int64)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    diag_done = np.zeros(m, dtype=bool)
    results = _map_over_terms(row_for, table.term_indices, workers)
    for w, members in zip(table.term_indices, results):
        rows.append(np.full(members.size, int(w), dtype=np.int64))
        cols.append(members)
        diag_done[int(w)] = True
    missing = np.flatnonzero(~diag_done)
    if missing.size:
        rows.append(missing)
        cols.append(missing)
    row_idx = np.concatenate(rows)
    col_idx = np.concatenate(cols)
    entries = sparse.csr_matrix(
        (np.ones(row_idx.size), (row_idx, col_idx)), shape=(m, m)
    )
    entries.sort_indices()
    return TermHierarchyMatrix(entries=entries, k_h=k_h)
