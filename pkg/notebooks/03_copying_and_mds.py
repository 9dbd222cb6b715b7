#!/usr/bin/env python3
# %% [markdown]
# # Copying a 2-D layout, and matching classical MDS
#
# The reference embedding does not have to be the input space. Here the
# target is a hand-made 2-D layout of a 10-D cloud, and the autoencoder is
# asked to reproduce its pairwise distances. Unlike the layout itself, the
# trained encoder can place points it has never seen.

# %%
import numpy as np

from mmae import (
    PointCloud,
    TrainConfig,
    classical_mds,
    encode,
    fit,
    gen_concentric_spheres,
    make_rng,
    mds_stress,
    pairwise_distances,
)
from mmae.metrics import distance_correlation
from mmae.reference import ReferenceEmbedding

cloud = gen_concentric_spheres(n_per_shell=100, n_shells=5, d=10, seed=0)
Y = classical_mds(pairwise_distances(cloud.points), 2).Y
r = np.linalg.norm(Y, axis=1)
theta = np.arctan2(Y[:, 1], Y[:, 0]) + 0.5 * r
E = np.column_stack([r * np.cos(theta), r * np.sin(theta)])

# %%
D_E = pairwise_distances(E)
for lam in (1.0, 10.0):
    cfg = TrainConfig(latent_dim=2, lam=lam, epochs=200, batch_size=64,
                      reference={"kind": "external", "path": "<in-memory>"})
    result = fit(cfg, cloud, ref=ReferenceEmbedding("external", E))
    Z = encode(result.params, cloud.points)
    print(f"lam={lam:5.1f}: DC(latent, layout) = "
          f"{distance_correlation(D_E, pairwise_distances(Z)):.4f}")

# %% [markdown]
# ## Against classical MDS
#
# With the input space as reference and a large weight, the latent distances
# minimize the same squared-gap functional that measures MDS stress, only
# estimated one minibatch at a time.

# %%
x = make_rng(10).standard_normal((300, 3)) * np.array([3.0, 2.0, 1.0])
D = pairwise_distances(x)
mds = mds_stress(D, classical_mds(D, 2).Y)
for lam in (1.0, 10.0, 100.0):
    result = fit(TrainConfig(latent_dim=2, lam=lam, epochs=200, batch_size=64), PointCloud(x))
    stress = mds_stress(D, encode(result.params, x))
    print(f"lam={lam:6.1f}: stress {stress:.4f}  (classical MDS {mds:.4f}, ratio {stress / mds:.2f})")
