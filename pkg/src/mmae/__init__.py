"""
mmae: manifold-matching autoencoders in numpy.

Submodules
----------
linalg     dense kernels, symmetric eigensolver, distance matrices, RNG
autodiff   reverse-mode tape used to train the autoencoders
datasets   synthetic benchmarks, CSV I/O, stratified splits
reference  identity / PCA / external reference embeddings
losses     reconstruction, manifold-matching, SPAE and TopoAE losses on arrays
train      MLP autoencoder, Adam, training loop, checkpoints
tda        H0 persistence via MST, Wasserstein and bottleneck distances
metrics    DC, triplet accuracy, KL density, trust/continuity, W0
mds        classical multidimensional scaling
cli        ``mmae`` command line entry point
"""

from .datasets import (
    PointCloud,
    gen_concentric_spheres,
    gen_linked_tori,
    gen_nested_spheres,
    load_csv,
    save_csv,
    split,
)
from .exceptions import InputError, MMAEError, NumericalError, ParseError
from .linalg import make_rng, pairwise_distances, sym_eigen
from .losses import loss_mm, loss_recon, loss_spae, loss_topoae
from .mds import classical_mds, mds_stress
from .metrics import EvalConfig, MetricReport, compute_metrics, evaluate
from .reference import fit_external, fit_identity, fit_pca, transform
from .tda import bottleneck_h0, h0_diagram, mst, wasserstein_h0
from .train import TrainConfig, decode, encode, fit, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
