"""Non-negative matrix factorization with multiplicative updates.

Minimizes 0.5 * ||A - WH||_F^2 over nonnegative factors using the classic
multiplicative update rules, which never increase the objective. That
monotonicity is the property the test suite leans on, so the objective
value after every iteration is recorded on the result.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import svds

from .errors import ConfigurationError, ContractError, ShapeError

log = logging.getLogger(__name__)

_EPS = 1e-12

INIT_RANDOM = "random-uniform"
INIT_NNDSVD = "nndsvd-like"


@dataclass
class NmfConfig:
    n_topics: int
    max_iter: int = 300
    tol: float = 1e-5
    seed: int = 42
    init: str = INIT_RANDOM

    def validate(self):
        if self.n_topics < 1:
            raise ConfigurationError("n_topics must be >= 1")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ConfigurationError("tol must be > 0")
        if self.init not in (INIT_RANDOM, INIT_NNDSVD):
            raise ConfigurationError(f"unknown init {self.init!r}")


@dataclass
class FactorPair:
    """Document-topic and topic-term factors plus the fitting trace."""

    W: np.ndarray
    H: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def _is_sparse(a) -> bool:
    return sparse.issparse(a)


def _sq_frobenius(a) -> float:
    if _is_sparse(a):
        return float(a.data @ a.data) if a.nnz else 0.0
    return float(np.square(a).sum())


def _objective(norm_a_sq: float, a, w, h) -> float:
    # 0.5*||A - WH||^2 without forming WH densely:
    # ||A||^2 - 2*sum(W o (A H^T)) + sum((W^T W) o (H H^T))
    cross = float(np.sum(w * (a @ h.T)))
    gram = float(np.sum((w.T @ w) * (h @ h.T)))
    return 0.5 * max(norm_a_sq - 2.0 * cross + gram, 0.0)


def _init_random(a, k: int, rng: np.random.Generator):
    n, m = a.shape
    mean = (a.sum() / (n * m)) if n * m else 0.0
    scale = np.sqrt(mean / k) if mean > 0 else 1e-6
    w = rng.random((n, k)) * scale
    h = rng.random((k, m)) * scale
    return w, h


def _init_nndsvd(a, k: int, rng: np.random.Generator):
    """SVD-seeded nonnegative init; zeros are lifted slightly so the
    multiplicative updates can still move every entry."""
    n, m = a.shape
    dense = a.toarray() if _is_sparse(a) else np.asarray(a, dtype=float)
    if 1 <= k < min(n, m):
        v0 = rng.random(min(n, m))
        u, s, vt = svds(sparse.csr_matrix(dense), k=k, v0=v0)
        order = np.argsort(s)[::-1]
        u, s, vt = u[:, order], s[order], vt[order]
    else:
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
        u, s, vt = u[:, :k], s[:k], vt[:k]
    w = np.zeros((n, k))
    h = np.zeros((k, m))
    w[:, 0] = np.sqrt(s[0]) * np.abs(u[:, 0])
    h[0, :] = np.sqrt(s[0]) * np.abs(vt[0, :])
    for j in range(1, k):
        x, y = u[:, j], vt[j, :]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        mp = np.linalg.norm(xp) * np.linalg.norm(yp)
        mn = np.linalg.norm(xn) * np.linalg.norm(yn)
        if mp >= mn and mp > 0:
            w[:, j] = np.sqrt(s[j] * mp) * xp / np.linalg.norm(xp)
            h[j, :] = np.sqrt(s[j] * mp) * yp / np.linalg.norm(yp)
        elif mn > 0:
            w[:, j] = np.sqrt(s[j] * mn) * xn / np.linalg.norm(xn)
            h[j, :] = np.sqrt(s[j] * mn) * yn / np.linalg.norm(yn)
    mean = dense.mean()
    lift = 1e-6 * (mean if mean > 0 else 1.0)
    w[w < lift] = lift
    h[h < lift] = lift
    return w, h


def factorize(a, config: NmfConfig) -> FactorPair:
    """Factor a nonnegative matrix into W (docs x topics) and H (topics x terms).

    Deterministic for a fixed config: the seeded initialization plus the
    update rules involve no other randomness. An all-zero input short
    circuits to zero factors with a warning instead of failing.
    """
    config.validate()
    values = a.values if hasattr(a, "values") else a
    if not (_is_sparse(values) or isinstance(values, np.ndarray)):
        values = np.asarray(values, dtype=float)
    n, m = values.shape
    min_entry = values.data.min() if (_is_sparse(values) and values.nnz) else (
        values.min() if not _is_sparse(values) and values.size else 0.0
    )
    if min_entry < 0:
        raise ContractError("factorization input must be nonnegative")

    nnz = values.nnz if _is_sparse(values) else int(np.count_nonzero(values))
    if nnz == 0:
        log.warning("factorization input is all zeros; returning zero factors")
        pair = FactorPair(W=np.zeros((n, config.n_topics)), H=np.zeros((config.n_topics, m)))
        pair.objective_history = [0.0]
        pair.converged = True
        return pair

    rng = np.random.default_rng(config.seed)
    if config.init == INIT_RANDOM:
        w, h = _init_random(values, config.n_topics, rng)
    else:
        w, h = _init_nndsvd(values, config.n_topics, rng)

    norm_a_sq = _sq_frobenius(values)
    history = [_objective(norm_a_sq, values, w, h)]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        w *= (values @ h.T) / np.maximum(w @ (h @ h.T), _EPS)
        h *= (values.T @ w).T / np.maximum((w.T @ w) @ h, _EPS)
        obj = _objective(norm_a_sq, values, w, h)
        history.append(obj)
        prev = history[-2]
        if prev > 0 and abs(prev - obj) / prev < config.tol:
            converged = True
            break
        if obj == 0.0:
            converged = True
            break
    return FactorPair(W=w, H=h, objective_history=history, n_iter=it, converged=converged)


def reconstruction_error(a, w, h) -> float:
    """Frobenius norm of (A - WH), computed without materializing WH."""
    values = a.values if hasattr(a, "values") else a
    n, m = values.shape
    if w.shape[0] != n or h.shape[1] != m or w.shape[1] != h.shape[0]:
        raise ShapeError(
            f"inconsistent shapes: A {values.shape}, W {w.shape}, H {h.shape}"
        )
    norm_a_sq = _sq_frobenius(values)
    cross = float(np.sum(w * (values @ h.T)))
    gram = float(np.sum((w.T @ w) * (h @ h.T)))
    return float(np.sqrt(max(norm_a_sq - 2.0 * cross + gram, 0.0)))
