"""
Reference embeddings whose pairwise distances the latent space is fit to.

Three kinds are supported:

- ``identity``: the training data itself.
- ``pca``: projection onto the top-k principal axes of the training data.
- ``external``: coordinates read from a CSV, one row per training point
  (e.g. a UMAP or t-SNE layout computed elsewhere).

During training the reference rows for a minibatch are sliced out of the
precomputed ``E`` by training-set row index; ``transform`` is only needed to
map new, raw points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import PointCloud, load_csv
from .exceptions import InputError
from .linalg import as_matrix, sym_eigen

__all__ = [
    "ReferenceEmbedding",
    "fit_identity",
    "fit_pca",
    "fit_external",
    "transform",
    "pca_k_range",
]


@dataclass(frozen=True)
class ReferenceEmbedding:
    kind: str
    E: np.ndarray
    mean: np.ndarray | None = None
    components: np.ndarray | None = None  # k x D, orthonormal rows
    explained_variance: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.E.shape[1]

    def rows(self, idx) -> np.ndarray:
        """Reference coordinates of training rows ``idx``."""
        idx = np.asarray(idx, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.E.shape[0]):
            raise InputError("reference row index out of range")
        return self.E[idx]


def _points(X):
    return X.points if isinstance(X, PointCloud) else as_matrix(X, "X")


def fit_identity(X) -> ReferenceEmbedding:
    x = _points(X)
    if x.shape[1] == 0:
        raise InputError("data has no features")
    return ReferenceEmbedding("identity", x.copy())


def fit_pca(X, k) -> ReferenceEmbedding:
    """PCA reference with ``k`` components.

    Uses the D x D covariance when ``D <= n`` and the n x n Gram matrix
    otherwise. ``explained_variance`` holds all ``min(n - 1, D)`` component
    variances (unbiased, divisor ``n - 1``), not just the top ``k``.
    """
    x = _points(X)
    n, D = x.shape
    if n < 2:
        raise InputError("PCA needs at least 2 points")
    kmax = min(n - 1, D)
    if not 1 <= k <= kmax:
        raise InputError(f"k must be in [1, {kmax}], got {k}")
    mean = x.mean(axis=0)
    xc = x - mean
    if D <= n:
        eig = sym_eigen(xc.T @ xc / (n - 1))
        variances = eig.eigenvalues[:kmax]
        comps = eig.eigenvectors[:, :k].T
    else:
        eig = sym_eigen(xc @ xc.T / (n - 1))
        variances = eig.eigenvalues[:kmax]
        lam = np.maximum(eig.eigenvalues[:k], 0.0)
        if np.any(lam <= 1e-12 * max(lam[0], 1e-300)):
            raise InputError(f"data rank is below k={k}")
        comps = (xc.T @ eig.eigenvectors[:, :k]) / np.sqrt(lam * (n - 1))
        comps = comps.T
        # Re-orthonormalize to wash out rounding in the dual mapping.
        q, r = np.linalg.qr(comps.T)
        comps = (q * np.sign(np.diag(r))).T
    return ReferenceEmbedding(
        "pca", xc @ comps.T, mean=mean, components=comps,
        explained_variance=np.maximum(variances, 0.0),
    )


def fit_external(path, n_rows=None) -> ReferenceEmbedding:
    """Load a precomputed embedding; ``n_rows`` is the training-set size to check."""
    cloud = load_csv(path, has_labels=False)
    if n_rows is not None and cloud.n != n_rows:
        raise InputError(
            f"external embedding has {cloud.n} rows but the training set has {n_rows}"
        )
    return ReferenceEmbedding("external", cloud.points)


def transform(ref: ReferenceEmbedding, batch=None, *, indices=None) -> np.ndarray:
    """Reference coordinates for a batch.

    Pass raw points as ``batch`` (identity / pca), or training-row
    ``indices`` (any kind; required for ``external``).
    """
    if indices is not None:
        return ref.rows(indices)
    if batch is None:
        raise InputError("need either batch or indices")
    if ref.kind == "external":
        raise InputError("external references can only be queried by training-row indices")
    b = as_matrix(batch, "batch")
    if ref.kind == "identity":
        if b.shape[1] != ref.E.shape[1]:
            raise InputError("batch dimension does not match the reference")
        return b
    if b.shape[1] != ref.mean.shape[0]:
        raise InputError("batch dimension does not match the fitted PCA")
    return (b - ref.mean) @ ref.components.T


def pca_k_range(D) -> tuple[int, int]:
    """Component counts a sweep may choose: from ceil(0.8 D) up to D."""
    return int(np.ceil(0.8 * D)), int(D)
