"""
Embedding-quality metrics comparing input-space and latent-space distances.

Global geometry: distance correlation (Pearson correlation of pairwise
distances) and triplet accuracy. Density: KL divergence between kernel
density estimates. Local neighbourhoods: trustworthiness and continuity.
Topology: Wasserstein distance between H0 persistence diagrams.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import PointCloud, format_float
from .exceptions import InputError
from .linalg import make_rng, pairwise_distances
from .reference import ReferenceEmbedding, transform
from .tda import h0_diagram, wasserstein_h0

__all__ = [
    "MetricReport",
    "EvalConfig",
    "distance_correlation",
    "triplet_accuracy",
    "kl_density",
    "trustworthiness",
    "continuity",
    "neighbor_ranks",
    "w0",
    "compute_metrics",
    "evaluate",
]

TIE_TOL = 1e-12


def _pair(D_X, D_Z, min_n=1):
    D_X = np.asarray(D_X, dtype=np.float64)
    D_Z = np.asarray(D_Z, dtype=np.float64)
    if D_X.shape != D_Z.shape or D_X.ndim != 2 or D_X.shape[0] != D_X.shape[1]:
        raise InputError(f"distance matrices must be square and equal-sized: {D_X.shape} vs {D_Z.shape}")
    if D_X.shape[0] < min_n:
        raise InputError(f"need at least {min_n} points")
    return D_X, D_Z


def distance_correlation(D_X, D_Z) -> float:
    """Pearson correlation between the upper-triangular distance entries.

    Returns NaN (with a RuntimeWarning) when either side has zero variance.
    """
    D_X, D_Z = _pair(D_X, D_Z, 3)
    iu = np.triu_indices(D_X.shape[0], k=1)
    a, b = D_X[iu], D_Z[iu]
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        warnings.warn("distance correlation undefined: zero variance", RuntimeWarning, stacklevel=2)
        return float("nan")
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def _sample_triplets(rng, n, m):
    i = rng.integers(0, n, m)
    j = rng.integers(0, n - 1, m)
    j = j + (j >= i)
    k = rng.integers(0, n - 2, m)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    k = k + (k >= lo)
    k = k + (k >= hi)
    return i, j, k


def _all_triplets(n):
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    keep = (i != j) & (i != k) & (j != k)
    return i[keep], j[keep], k[keep]


def triplet_accuracy(D_X, D_Z, n_triplets=20000, seed=0, *, exhaustive=False) -> float:
    """Fraction of anchored triples (i, j, k) whose distance order is kept.

    A triple is preserved when ``sign(D[i,j] - D[i,k])`` agrees in both
    spaces; an exact tie in X counts as preserved only if Z also ties within
    1e-12. ``exhaustive=True`` scores all n(n-1)(n-2) ordered triples.
    """
    D_X, D_Z = _pair(D_X, D_Z, 3)
    n = D_X.shape[0]
    if exhaustive:
        i, j, k = _all_triplets(n)
    else:
        if n_triplets < 1:
            raise InputError("n_triplets must be >= 1")
        i, j, k = _sample_triplets(make_rng(seed), n, int(n_triplets))
    dx = D_X[i, j] - D_X[i, k]
    dz = D_Z[i, j] - D_Z[i, k]
    tie_z = np.abs(dz) <= TIE_TOL
    ok = np.where(dx == 0, tie_z, (np.sign(dx) == np.sign(dz)) & ~tie_z)
    return float(ok.mean())


def _kernel_density(D, sigma):
    n = D.shape[0]
    m = D.max()
    if m <= 0:
        return np.full(n, 1.0 / n)
    K = np.exp(-((D / m) ** 2) / sigma)
    np.fill_diagonal(K, 0.0)
    dens = K.sum(axis=1)
    return dens / dens.sum()


def kl_density(D_X, D_Z, sigma=0.1) -> float:
    """KL(p || q) between Gaussian-kernel densities over points at bandwidth ``sigma``.

    Each matrix is divided by its own maximum first, so the value is
    invariant to a uniform rescaling of either space.
    """
    if sigma <= 0:
        raise InputError("sigma must be positive")
    D_X, D_Z = _pair(D_X, D_Z, 2)
    p = _kernel_density(D_X, sigma)
    q = _kernel_density(D_Z, sigma)
    mask = p > 0
    with np.errstate(divide="ignore"):
        val = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    return max(val, 0.0)


def neighbor_ranks(D) -> np.ndarray:
    """``R[i, j]`` = rank of j among i's neighbours (self 0, nearest 1); ties by index."""
    D = np.array(D, dtype=np.float64)
    n = D.shape[0]
    np.fill_diagonal(D, -np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    R = np.empty((n, n), dtype=np.int64)
    R[np.arange(n)[:, None], order] = np.arange(n)[None, :]
    return R


def _check_k(n, k):
    if not (1 <= k and 2 * k < n):
        raise InputError(f"k must satisfy 1 <= k < n/2 (n={n}), got {k}")


def _rank_penalty(R_from, R_to, n, k):
    # Points in R_to's k-NN but not R_from's, penalized by their R_from rank.
    in_to = (R_to >= 1) & (R_to <= k)
    in_from = (R_from >= 1) & (R_from <= k)
    intruders = in_to & ~in_from
    s = float(np.sum(R_from[intruders] - k))
    return 1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * s


def trustworthiness(D_X, D_Z, k) -> float:
    D_X, D_Z = _pair(D_X, D_Z)
    n = D_X.shape[0]
    _check_k(n, k)
    return _rank_penalty(neighbor_ranks(D_X), neighbor_ranks(D_Z), n, k)


def continuity(D_X, D_Z, k) -> float:
    D_X, D_Z = _pair(D_X, D_Z)
    n = D_X.shape[0]
    _check_k(n, k)
    return _rank_penalty(neighbor_ranks(D_Z), neighbor_ranks(D_X), n, k)


def w0(D_X, D_Z, q=1.0) -> float:
    """Wasserstein distance between the H0 diagrams of the two spaces."""
    return wasserstein_h0(h0_diagram(D_X), h0_diagram(D_Z), q)


@dataclass
class EvalConfig:
    sigmas: tuple = (0.1,)
    ks: tuple = (5, 10, 50, 100)
    n_triplets: int = 20000
    seed: int = 0
    w0_order: float = 1.0


@dataclass
class MetricReport:
    rec: float
    dc: float
    ta: float
    kl: dict = field(default_factory=dict)
    trust: dict = field(default_factory=dict)
    cont: dict = field(default_factory=dict)
    w0: float = 0.0
    flags: list = field(default_factory=list)

    @property
    def trust_mean(self) -> float:
        return float(np.mean(list(self.trust.values()))) if self.trust else float("nan")

    @property
    def cont_mean(self) -> float:
        return float(np.mean(list(self.cont.values()))) if self.cont else float("nan")

    def to_dict(self) -> dict:
        out = {"rec": self.rec, "dc": self.dc, "ta": self.ta}
        for s, v in self.kl.items():
            out[f"kl.{s:g}"] = v
        for k, v in self.trust.items():
            out[f"trust.k{k}"] = v
        out["trust"] = self.trust_mean
        for k, v in self.cont.items():
            out[f"cont.k{k}"] = v
        out["cont"] = self.cont_mean
        out["w0"] = self.w0
        return out

    def to_json(self) -> str:
        """Flat JSON object, numbers at 17 significant digits, NaN as null."""
        def num(v):
            return "null" if not math.isfinite(v) else format_float(v)

        items = [f'  "{k}": {num(v)}' for k, v in self.to_dict().items()]
        items.append(f'  "flags": {json.dumps(list(self.flags))}')
        return "{\n" + ",\n".join(items) + "\n}\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        d = json.loads(text)
        num = lambda v: float("nan") if v is None else float(v)  # noqa: E731
        kl = {float(key[3:]): num(v) for key, v in d.items() if key.startswith("kl.")}
        trust = {int(key[7:]): num(v) for key, v in d.items() if key.startswith("trust.k")}
        cont = {int(key[6:]): num(v) for key, v in d.items() if key.startswith("cont.k")}
        return cls(num(d["rec"]), num(d["dc"]), num(d["ta"]), kl, trust, cont, num(d["w0"]),
                   list(d.get("flags", [])))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def compute_metrics(D_X, D_Z, rec=float("nan"), config: EvalConfig | None = None) -> MetricReport:
    """All metrics for a pair of distance matrices.

    Trust/continuity are reported only for the ``config.ks`` satisfying
    ``k < n/2``; skipped scales are listed in ``flags``.
    """
    config = config or EvalConfig()
    D_X, D_Z = _pair(D_X, D_Z, 3)
    n = D_X.shape[0]
    flags = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        dc = distance_correlation(D_X, D_Z)
    if caught:
        flags.append("dc_undefined")
    ta = triplet_accuracy(D_X, D_Z, config.n_triplets, config.seed)
    kl = {float(s): kl_density(D_X, D_Z, s) for s in config.sigmas}
    RX, RZ = neighbor_ranks(D_X), neighbor_ranks(D_Z)
    trust, cont = {}, {}
    for k in config.ks:
        if 1 <= k and 2 * k < n:
            trust[int(k)] = _rank_penalty(RX, RZ, n, k)
            cont[int(k)] = _rank_penalty(RZ, RX, n, k)
        else:
            flags.append(f"k{k}_skipped")
    return MetricReport(float(rec), dc, ta, kl, trust, cont, w0(D_X, D_Z, config.w0_order), flags)


def evaluate(X_test, params, ref_for_distances="input", config: EvalConfig | None = None,
             reference: ReferenceEmbedding | None = None) -> MetricReport:
    """Encode ``X_test`` and score the latent space.

    Input-space distances come from the raw test points (``"input"``) or
    from their reference coordinates (``"reference"``, needs an identity or
    PCA ``reference``). ``rec`` is the per-coordinate mean squared
    reconstruction error.
    """
    from .train import decode, encode

    X = X_test.points if isinstance(X_test, PointCloud) else np.asarray(X_test, dtype=np.float64)
    Z = encode(params, X)
    X_hat = decode(params, Z)
    rec = float(np.mean((X - X_hat) ** 2))
    if ref_for_distances == "input":
        D_X = pairwise_distances(X)
    elif ref_for_distances == "reference":
        if reference is None:
            raise InputError("ref_for_distances='reference' needs a fitted reference")
        D_X = pairwise_distances(transform(reference, X))
    else:
        raise InputError(f"unknown ref_for_distances {ref_for_distances!r}")
    return compute_metrics(D_X, pairwise_distances(Z), rec, config)
