"""
Loss values on plain arrays.

These are the scalar definitions used for reporting and as a cross-check of
the differentiable versions that ``mmae.train`` records on the tape.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InputError
from .linalg import as_matrix, pairwise_distances
from .tda import mst

__all__ = ["loss_recon", "loss_mm", "loss_mm_distances", "loss_spae", "loss_topoae"]

SPAE_EPS_FLOOR = 1e-9


def loss_recon(X, X_hat) -> float:
    """Mean over rows of the squared Euclidean reconstruction error."""
    X, X_hat = as_matrix(X, "X"), as_matrix(X_hat, "X_hat")
    if X.shape != X_hat.shape:
        raise InputError(f"shape mismatch {X.shape} vs {X_hat.shape}")
    r = X - X_hat
    return float(np.sum(r * r) / X.shape[0])


def loss_mm_distances(D_Z, D_E) -> float:
    """(1/n^2) * sum over all ordered pairs, diagonal included."""
    D_Z, D_E = np.asarray(D_Z, float), np.asarray(D_E, float)
    if D_Z.shape != D_E.shape:
        raise InputError(f"shape mismatch {D_Z.shape} vs {D_E.shape}")
    r = D_Z - D_E
    return float(np.mean(r * r))


def loss_mm(Z, E) -> float:
    """Manifold-matching penalty between the distance matrices of ``Z`` and ``E``.

    ``Z`` and ``E`` must have the same number of rows; their column counts
    are independent.
    """
    Z, E = as_matrix(Z, "Z"), as_matrix(E, "E")
    if Z.shape[0] != E.shape[0]:
        raise InputError(f"row mismatch: {Z.shape[0]} vs {E.shape[0]}")
    return loss_mm_distances(pairwise_distances(Z), pairwise_distances(E))


def spae_pairs(D_E, eps_floor=SPAE_EPS_FLOOR):
    """Upper-triangle pairs kept by the SPAE loss, and how many were dropped."""
    iu, ju = np.triu_indices(D_E.shape[0], k=1)
    keep = D_E[iu, ju] >= eps_floor
    return iu[keep], ju[keep], int((~keep).sum())


def loss_spae(Z, E, eps_floor=SPAE_EPS_FLOOR) -> float:
    """Population variance of log(d_Z / d_E) over pairs i < j.

    Pairs whose reference distance is below ``eps_floor`` are skipped.
    """
    Z, E = as_matrix(Z, "Z"), as_matrix(E, "E")
    if Z.shape[0] != E.shape[0]:
        raise InputError(f"row mismatch: {Z.shape[0]} vs {E.shape[0]}")
    if Z.shape[0] < 3:
        raise InputError("SPAE needs a batch of at least 3 points")
    D_Z, D_E = pairwise_distances(Z), pairwise_distances(E)
    iu, ju, _ = spae_pairs(D_E, eps_floor)
    if iu.size == 0:
        return 0.0
    logr = np.log(np.maximum(D_Z[iu, ju], 1e-12)) - np.log(D_E[iu, ju])
    return float(np.var(logr))


def topo_pairs(D_X, D_Z):
    """Index arrays of the MST edges of ``D_X`` and of ``D_Z``."""
    ex, ez = mst(D_X), mst(D_Z)
    px = (np.array([e[0] for e in ex], dtype=np.intp), np.array([e[1] for e in ex], dtype=np.intp))
    pz = (np.array([e[0] for e in ez], dtype=np.intp), np.array([e[1] for e in ez], dtype=np.intp))
    return px, pz


def loss_topoae(D_X, D_Z) -> float:
    """H0 topological loss: squared distance gaps on both spaces' MST edges, halved."""
    D_X, D_Z = np.asarray(D_X, float), np.asarray(D_Z, float)
    if D_X.shape != D_Z.shape:
        raise InputError(f"shape mismatch {D_X.shape} vs {D_Z.shape}")
    (xi, xj), (zi, zj) = topo_pairs(D_X, D_Z)
    return float(
        0.5 * np.sum((D_X[xi, xj] - D_Z[xi, xj]) ** 2)
        + 0.5 * np.sum((D_Z[zi, zj] - D_X[zi, zj]) ** 2)
    )
