"""
Dense linear-algebra kernel.

Matrices are plain ``float64`` numpy arrays. This module adds the few things
the rest of the package needs on top of numpy: validated construction, a
symmetric eigensolver with a fixed output convention (descending eigenvalues,
sign-normalized eigenvectors), Euclidean distance matrices, and a seedable
counter-based random generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, NumericalError

__all__ = [
    "SymmetricEigen",
    "as_matrix",
    "matmul",
    "sym_eigen",
    "jacobi_eigen",
    "pairwise_distances",
    "make_rng",
    "EXPANDED_FORM_THRESHOLD",
]

# Above this many rows, distances use |x|^2 + |y|^2 - 2<x, y>.
EXPANDED_FORM_THRESHOLD = 512


def as_matrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise InputError."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} contains NaN or Inf")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


@dataclass(frozen=True)
class SymmetricEigen:
    """Eigenpairs of a symmetric matrix.

    ``eigenvalues`` are sorted in descending order and ``eigenvectors[:, i]``
    is the unit eigenvector for ``eigenvalues[i]``. Each eigenvector's
    largest-magnitude entry is made positive so the output is deterministic.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _normalize_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _check_square(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def jacobi_eigen(a, max_sweeps=100, tol=1e-12) -> SymmetricEigen:
    """Cyclic Jacobi eigendecomposition.

    Sweeps over all off-diagonal pairs, annihilating each with a plane
    rotation, until the off-diagonal Frobenius norm drops below
    ``tol * ||A||_F``.

    Raises
    ------
    NumericalError
        If the tolerance is not reached within ``max_sweeps`` sweeps.
    """
    a = _check_square(a).copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)

    def off_norm(m):
        return np.sqrt(max(np.sum(m * m) - np.sum(np.diag(m) ** 2), 0.0))

    for _ in range(max_sweeps):
        if off_norm(a) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if off_norm(a) > tol * scale:
            raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return SymmetricEigen(vals[order], _normalize_signs(v[:, order]))


def sym_eigen(a, method="lapack") -> SymmetricEigen:
    """Full eigendecomposition of a symmetric matrix.

    The input is symmetrized as ``(A + A.T) / 2`` first.

    Parameters
    ----------
    a : (n, n) array_like
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls ``numpy.linalg.eigh``; ``"jacobi"`` runs the
        pure-numpy cyclic Jacobi solver. Both return the same convention.
    """
    if method == "jacobi":
        return jacobi_eigen(a)
    if method != "lapack":
        raise InputError(f"unknown eigen method {method!r}")
    a = _check_square(a)
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    order = np.argsort(-vals, kind="stable")
    return SymmetricEigen(vals[order], _normalize_signs(vecs[:, order]))


def pairwise_distances(points) -> np.ndarray:
    """Euclidean distance matrix of the rows of ``points``.

    Small inputs subtract rows directly; above ``EXPANDED_FORM_THRESHOLD``
    rows the Gram expansion is used. Squared distances are clamped at zero
    before the square root, the diagonal is exactly zero and the result is
    exactly symmetric.
    """
    x = as_matrix(points, "points")
    n = x.shape[0]
    if n <= EXPANDED_FORM_THRESHOLD:
        sq = np.empty((n, n))
        for i in range(n):
            diff = x - x[i]
            sq[i] = np.einsum("ij,ij->i", diff, diff)
    else:
        norms = np.einsum("ij,ij->i", x, x)
        sq = norms[:, None] + norms[None, :] - 2.0 * (x @ x.T)
        sq = 0.5 * (sq + sq.T)
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    return np.sqrt(sq)


def make_rng(seed) -> np.random.Generator:
    """Seeded generator backed by the Philox 4x64 counter-based bit generator.

    Philox streams are fully specified by (key, counter), so a given seed
    produces the same draws on every platform.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))
