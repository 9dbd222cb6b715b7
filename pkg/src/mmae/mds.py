"""
Classical (Torgerson) multidimensional scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .linalg import pairwise_distances, sym_eigen
from .losses import loss_mm_distances
from .tda import check_distance_matrix

__all__ = ["MdsResult", "classical_mds", "mds_stress"]


@dataclass(frozen=True)
class MdsResult:
    Y: np.ndarray
    eigenvalues: np.ndarray
    negative_mass: float
    zero_filled: tuple = ()

    @property
    def is_euclidean(self) -> bool:
        return self.negative_mass == 0.0


def classical_mds(D, d, *, eig_tol=1e-10) -> MdsResult:
    """Embed a distance matrix in ``d`` dimensions.

    B = -1/2 J D^2 J with J the centering matrix; the coordinates are the top
    ``d`` eigenvectors of B scaled by sqrt(max(lambda, 0)).

    Parameters
    ----------
    D : (n, n) array_like
        Symmetric, non-negative, zero diagonal.
    d : int
        Output dimension, ``1 <= d <= n - 1``.
    eig_tol : float
        Eigenvalues below ``eig_tol * max|lambda|`` in magnitude count as zero
        when measuring the negative mass.

    Returns
    -------
    MdsResult
        ``negative_mass`` is sum(|lambda| for lambda < 0) / sum(|lambda|).
        Columns of ``Y`` whose eigenvalue is not positive are zero and their
        indices are listed in ``zero_filled``.
    """
    D = check_distance_matrix(D)
    n = D.shape[0]
    if not 1 <= d <= n - 1:
        raise InputError(f"d must be in [1, {n - 1}], got {d}")
    D2 = D * D
    row = D2.mean(axis=1)
    B = -0.5 * (D2 - row[:, None] - row[None, :] + D2.mean())
    eig = sym_eigen(B)
    lam = eig.eigenvalues
    cutoff = eig_tol * max(np.abs(lam).max(), 1e-300)
    neg = lam[lam < -cutoff]
    total = np.abs(lam[np.abs(lam) > cutoff]).sum()
    negative_mass = float(np.abs(neg).sum() / total) if total > 0 else 0.0
    top = lam[:d]
    Y = eig.eigenvectors[:, :d] * np.sqrt(np.maximum(top, 0.0))
    zero_filled = tuple(int(i) for i in np.flatnonzero(top <= 0))
    return MdsResult(Y, lam, negative_mass, zero_filled)


def mds_stress(D, Y) -> float:
    """(1/n^2) * sum (D - D_Y)^2, the same functional as the manifold-matching loss."""
    D = np.asarray(D, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != D.shape[0]:
        raise InputError("Y row count does not match D")
    return loss_mm_distances(pairwise_distances(Y), D)
