"""
Zero-dimensional persistent homology of finite metric spaces.

For a Vietoris-Rips filtration every vertex is born at 0 and each merge of
two components happens at the weight of a minimum-spanning-tree edge, so the
H0 diagram is just the sorted MST weights (the one infinite bar is dropped).
Diagrams are therefore stored as 1-D arrays of death times.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .datasets import format_float
from .exceptions import InputError

__all__ = [
    "check_distance_matrix",
    "mst",
    "h0_diagram",
    "wasserstein_h0",
    "bottleneck_h0",
    "save_diagram_csv",
    "load_diagram_csv",
]


def check_distance_matrix(D, atol=1e-9) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError(f"distance matrix must be square, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise InputError("distance matrix contains NaN or Inf")
    if np.any(D < 0):
        raise InputError("distance matrix has negative entries")
    scale = max(1.0, float(D.max(initial=0.0)))
    if np.any(np.abs(D - D.T) > atol * scale):
        raise InputError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(D)) > atol * scale):
        raise InputError("distance matrix has a non-zero diagonal")
    return D


def mst(D) -> list[tuple[int, int, float]]:
    """Minimum spanning tree of the complete graph on ``D`` (Prim, O(n^2)).

    Edges are compared by the tuple ``(weight, i, j)`` with ``i < j``, which
    is a strict total order, so the tree is unique even with tied weights.

    Returns
    -------
    list of (i, j, weight)
        ``n - 1`` edges with ``i < j``, in the order Prim adds them.
    """
    D = check_distance_matrix(D)
    n = D.shape[0]
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_w = D[0].copy()
    best_from = np.zeros(n, dtype=np.intp)
    edges = []
    for _ in range(n - 1):
        cand_w = np.where(in_tree, np.inf, best_w)
        wmin = cand_w.min()
        tied = np.flatnonzero(cand_w == wmin)
        if tied.size == 1:
            v = int(tied[0])
        else:
            v = min(tied, key=lambda t: (min(best_from[t], t), max(best_from[t], t)))
            v = int(v)
        u = int(best_from[v])
        edges.append((min(u, v), max(u, v), float(D[u, v])))
        in_tree[v] = True
        row = D[v]
        better = (~in_tree) & (row < best_w)
        # Equal weight: keep whichever endpoint pair sorts first.
        same = (~in_tree) & (row == best_w)
        if same.any():
            for t in np.flatnonzero(same):
                old = (min(best_from[t], t), max(best_from[t], t))
                new = (min(v, t), max(v, t))
                if new < old:
                    better[t] = True
        best_w[better] = row[better]
        best_from[better] = v
    return edges


def h0_diagram(D) -> np.ndarray:
    """Finite H0 death times of the Rips filtration, sorted ascending."""
    return np.sort(np.array([w for _, _, w in mst(D)], dtype=np.float64))


def _as_diagram(A):
    a = np.asarray(A, dtype=np.float64).reshape(-1)
    if np.any(~np.isfinite(a)) or np.any(a < 0):
        raise InputError("diagram deaths must be finite and non-negative")
    return a


def _augmented_costs(a, b):
    # Rows: a-points then diagonal slots for b; columns: b-points then
    # diagonal slots for a. Point-to-point cost is |a_i - b_j| (births are 0,
    # so this is also the l-inf distance); point-to-diagonal cost is death / 2.
    m, n = a.size, b.size
    C = np.full((m + n, n + m), np.inf)
    C[:m, :n] = np.abs(a[:, None] - b[None, :])
    C[:m, n:] = np.where(np.eye(m, dtype=bool), (a / 2.0)[:, None], np.inf)
    C[m:, :n] = np.where(np.eye(n, dtype=bool), (b / 2.0)[None, :], np.inf)
    C[m:, n:] = 0.0
    return C


def wasserstein_h0(A, B, q=1.0) -> float:
    """q-Wasserstein distance between two H0 diagrams (exact assignment)."""
    if q < 1:
        raise InputError("q must be >= 1")
    a, b = _as_diagram(A), _as_diagram(B)
    if a.size + b.size == 0:
        return 0.0
    C = _augmented_costs(a, b) ** q
    rows, cols = linear_sum_assignment(C)
    # fsum is order independent, which makes the result exactly symmetric.
    return float(math.fsum(C[rows, cols]) ** (1.0 / q))


def _has_perfect_matching(C, thresh):
    adj = csr_matrix((C <= thresh).astype(np.int8))
    match = maximum_bipartite_matching(adj, perm_type="column")
    return bool(np.all(match >= 0))


def bottleneck_h0(A, B) -> float:
    """Bottleneck distance between two H0 diagrams.

    Binary search over the sorted candidate costs for the smallest threshold
    admitting a perfect matching in the augmented bipartite graph.
    """
    a, b = _as_diagram(A), _as_diagram(B)
    if a.size + b.size == 0:
        return 0.0
    C = _augmented_costs(a, b)
    cand = np.unique(np.concatenate([[0.0], C[np.isfinite(C)].ravel()]))
    lo, hi = 0, cand.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(C, cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def save_diagram_csv(path, deaths) -> None:
    lines = ["birth,death"] + [f"0,{format_float(d)}" for d in np.asarray(deaths).ravel()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_diagram_csv(path) -> np.ndarray:
    from .datasets import load_csv

    pairs = load_csv(path).points
    if pairs.shape[1] != 2:
        raise InputError("diagram CSV must have birth,death columns")
    return np.sort(pairs[:, 1])
