"""
Synthetic benchmark clouds, CSV ingestion and train/test splitting.

All generators take a ``seed`` and draw from :func:`mmae.linalg.make_rng`, so
the same arguments always produce a bitwise identical cloud.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InputError, ParseError
from .linalg import make_rng

__all__ = [
    "PointCloud",
    "gen_nested_spheres",
    "gen_linked_tori",
    "gen_concentric_spheres",
    "random_orthonormal",
    "load_csv",
    "save_csv",
    "split",
    "split_indices",
    "format_float",
]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise InputError(f"points must be 2-D, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InputError("points contain NaN or Inf")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise InputError(
                    f"labels must have length {pts.shape[0]}, got shape {lab.shape}"
                )
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "PointCloud":
        idx = np.asarray(idx, dtype=np.intp)
        labels = None if self.labels is None else self.labels[idx]
        return PointCloud(self.points[idx], labels)


def _sphere_surface(rng, n, d, radius):
    g = rng.standard_normal((n, d))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def gen_nested_spheres(
    n_per_sphere=500,
    n_small=10,
    d=101,
    small_radius=5.0,
    big_radius=25.0,
    noise_sd=0.0,
    seed=0,
    *,
    n_big=None,
    center_sd=None,
) -> PointCloud:
    """Small spheres scattered inside one enclosing sphere.

    Each of the ``n_small`` inner spheres is a (d-1)-sphere of radius
    ``small_radius`` around a centre drawn from N(0, center_sd^2 I); the
    enclosing sphere of radius ``big_radius`` is centred at the origin.
    Surface points are uniform, then Gaussian noise with sd ``noise_sd`` is
    added to every coordinate.

    Labels are ``0..n_small-1`` for the inner spheres and ``n_small`` for the
    enclosing one. The enclosing sphere gets ``n_big`` points, by default
    ``n_per_sphere * n_small``. ``center_sd`` defaults to ``10 / sqrt(d)``,
    which keeps the inner centres at norm about 10 for any ``d``.
    """
    if n_per_sphere < 1 or n_small < 0:
        raise InputError("n_per_sphere must be >= 1 and n_small >= 0")
    if d < 2:
        raise InputError("d must be >= 2")
    if small_radius <= 0 or big_radius <= 0:
        raise InputError("radii must be positive")
    if noise_sd < 0:
        raise InputError("noise_sd must be >= 0")
    if n_big is None:
        n_big = n_per_sphere * max(n_small, 1)
    if n_big < 1:
        raise InputError("n_big must be >= 1")
    if center_sd is None:
        center_sd = 10.0 / math.sqrt(d)

    rng = make_rng(seed)
    centers = rng.normal(0.0, center_sd, size=(n_small, d))
    blocks, labels = [], []
    for s in range(n_small):
        blocks.append(centers[s] + _sphere_surface(rng, n_per_sphere, d, small_radius))
        labels.append(np.full(n_per_sphere, s))
    blocks.append(_sphere_surface(rng, n_big, d, big_radius))
    labels.append(np.full(n_big, n_small))
    pts = np.vstack(blocks)
    if noise_sd > 0:
        pts = pts + rng.normal(0.0, noise_sd, size=pts.shape)
    return PointCloud(pts, np.concatenate(labels))


def random_orthonormal(rng, ambient_d, k) -> np.ndarray:
    """``ambient_d x k`` matrix with orthonormal columns (Gram-Schmidt on Gaussians)."""
    q = rng.standard_normal((ambient_d, k))
    for j in range(k):
        for i in range(j):
            q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
        q[:, j] /= np.linalg.norm(q[:, j])
    return q


def _torus_angles(rng, n, R, r):
    # Rejection sampling for area-uniform points: the area element is
    # proportional to R + r cos(phi).
    theta = np.empty(0)
    phi = np.empty(0)
    while theta.size < n:
        m = 2 * (n - theta.size) + 16
        t = rng.uniform(0.0, 2 * np.pi, m)
        p = rng.uniform(0.0, 2 * np.pi, m)
        keep = rng.uniform(0.0, R + r, m) < R + r * np.cos(p)
        theta = np.concatenate([theta, t[keep]])
        phi = np.concatenate([phi, p[keep]])
    return theta[:n], phi[:n]


def gen_linked_tori(
    n_per_torus=500, R=5.0, r=1.0, ambient_d=100, seed=0, *, noise_sd=0.0
) -> PointCloud:
    """Two tori forming a Hopf link, isometrically embedded in ``ambient_d`` dims.

    Torus 0 lies around the z axis (centre circle in the xy-plane at the
    origin); torus 1 has its centre circle in the xz-plane around (R, 0, 0),
    so each centre circle passes through the other's hole.
    """
    if ambient_d < 3:
        raise InputError("ambient_d must be >= 3")
    if not R > r > 0:
        raise InputError("need R > r > 0")
    if n_per_torus < 1:
        raise InputError("n_per_torus must be >= 1")
    rng = make_rng(seed)

    th, ph = _torus_angles(rng, n_per_torus, R, r)
    ring = R + r * np.cos(ph)
    a = np.column_stack([ring * np.cos(th), ring * np.sin(th), r * np.sin(ph)])

    th, ph = _torus_angles(rng, n_per_torus, R, r)
    ring = R + r * np.cos(ph)
    b = np.column_stack([R + ring * np.cos(th), r * np.sin(ph), ring * np.sin(th)])

    pts3 = np.vstack([a, b])
    if noise_sd > 0:
        pts3 = pts3 + rng.normal(0.0, noise_sd, size=pts3.shape)
    labels = np.repeat([0, 1], n_per_torus)
    if ambient_d == 3:
        return PointCloud(pts3, labels)
    q = random_orthonormal(rng, ambient_d, 3)
    return PointCloud(pts3 @ q.T, labels)


def gen_concentric_spheres(
    n_per_shell=500, n_shells=5, d=1000, radii=None, noise_sd=0.0, seed=0
) -> PointCloud:
    """Spherical shells sharing the origin as centre; label = shell index.

    ``radii`` defaults to ``1, 2, ..., n_shells``.
    """
    if n_per_shell < 1 or n_shells < 1:
        raise InputError("n_per_shell and n_shells must be >= 1")
    if d < 2:
        raise InputError("d must be >= 2")
    if radii is None:
        radii = np.arange(1, n_shells + 1, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    if radii.shape != (n_shells,):
        raise InputError(f"expected {n_shells} radii, got {radii.size}")
    if radii[0] <= 0 or np.any(np.diff(radii) <= 0):
        raise InputError("radii must be positive and strictly increasing")
    rng = make_rng(seed)
    pts = np.vstack([_sphere_surface(rng, n_per_shell, d, rad) for rad in radii])
    if noise_sd > 0:
        pts = pts + rng.normal(0.0, noise_sd, size=pts.shape)
    return PointCloud(pts, np.repeat(np.arange(n_shells), n_per_shell))


# -- CSV ---------------------------------------------------------------------


def load_csv(path, has_labels=False) -> PointCloud:
    """Read a header + numeric-rows CSV. With ``has_labels`` the last column
    holds integer labels."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        width = len(header)
        if width == 0 or (has_labels and width < 2):
            raise ParseError("header has too few columns", row=1)
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise ParseError(f"expected {width} fields, got {len(rec)}", row=lineno)
            cells = rec[:-1] if has_labels else rec
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise ParseError("non-numeric cell", row=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", row=lineno)
            if has_labels:
                try:
                    labels.append(int(rec[-1]))
                except ValueError:
                    raise ParseError(f"label {rec[-1]!r} is not an integer", row=lineno) from None
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows", row=2)
    pts = np.array(rows, dtype=np.float64)
    return PointCloud(pts, np.array(labels, dtype=np.int64) if has_labels else None)


def format_float(v) -> str:
    return format(float(v), ".17g")


def save_csv(path, data, labels=None) -> None:
    """Write ``data`` (a PointCloud or an n x d array) with a ``x0,...,[label]`` header."""
    if isinstance(data, PointCloud):
        pts, labels = data.points, data.labels if labels is None else labels
    else:
        pts = np.asarray(data, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
    header = [f"x{j}" for j in range(pts.shape[1])]
    if labels is not None:
        header.append("label")
    lines = [",".join(header)]
    for i, row in enumerate(pts):
        cells = [format_float(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- splitting ---------------------------------------------------------------


def split_indices(n, test_fraction, seed=0, labels=None):
    """Sorted ``(train_idx, test_idx)``; stratified by ``labels`` when given."""
    if not 0.0 < test_fraction < 1.0:
        raise InputError("test_fraction must be in (0, 1)")
    rng = make_rng(seed)
    groups = [np.arange(n)] if labels is None else [
        np.flatnonzero(labels == c) for c in np.unique(labels)
    ]
    test = []
    for idx in groups:
        n_test = int(math.floor(test_fraction * idx.size + 0.5))
        test.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test)).astype(np.intp)
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def split(cloud: PointCloud, test_fraction, seed=0):
    train_idx, test_idx = split_indices(cloud.n, test_fraction, seed, cloud.labels)
    return cloud.subset(train_idx), cloud.subset(test_idx)
