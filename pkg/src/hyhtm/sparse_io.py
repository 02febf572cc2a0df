"""Binary sparse-matrix persistence and the content-addressed matrix cache.

Matrices are stored as a flat sequence of triplet records, little-endian
u32 row, u32 col, f64 value, in row-major order. Cache files are keyed by
a hash of the inputs and hyperparameters that produced the matrix, so a
hit is guaranteed to be bitwise identical to a cold rebuild.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
from scipy import sparse

TRIPLET_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("val", "<f8")])


def save_triplets(path, matrix):
    """Write a sparse matrix as little-endian (u32 row, u32 col, f64 value) records."""
    coo = matrix.tocsr().tocoo()  # csr round-trip canonicalizes row-major order
    records = np.empty(coo.nnz, dtype=TRIPLET_DTYPE)
    records["row"] = coo.row.astype("<u4")
    records["col"] = coo.col.astype("<u4")
    records["val"] = coo.data.astype("<f8")
    with open(path, "wb") as fh:
        records.tofile(fh)


def load_triplets(path, shape) -> sparse.csr_matrix:
    """Read a triplet file back into CSR form; shape is supplied by the caller."""
    records = np.fromfile(path, dtype=TRIPLET_DTYPE)
    matrix = sparse.csr_matrix(
        (records["val"], (records["row"].astype(np.int64), records["col"].astype(np.int64))),
        shape=shape,
    )
    matrix.sort_indices()
    return matrix


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def bytes_sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def cache_key(kind: str, **parts) -> str:
    """Stable cache key from a matrix kind and its producing parameters."""
    payload = json.dumps({"kind": kind, **parts}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:40]


class MatrixCache:
    """Directory of triplet files addressed by cache_key."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.bin"

    def has(self, key: str) -> bool:
        return self.path_for(key).exists()

    def load(self, key: str, shape) -> sparse.csr_matrix | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        return load_triplets(path, shape)

    def save(self, key: str, matrix):
        tmp = self.path_for(key).with_suffix(".tmp")
        save_triplets(tmp, matrix)
        os.replace(tmp, self.path_for(key))
