#!/usr/bin/env python3
# %% [markdown]
# # How many PCA components should the reference keep?
#
# A PCA reference with k components trades fidelity for denoising. On the
# nested spheres, keeping few components throws away the directions that
# separate the small spheres from the big one, and the latent layout
# degrades accordingly.

# %%
import numpy as np

from mmae import TrainConfig, fit, gen_nested_spheres, split
from mmae.metrics import EvalConfig, evaluate

cloud = gen_nested_spheres(n_per_sphere=100, n_small=10, d=101, seed=0, n_big=100)
train, test = split(cloud, 0.2, seed=0)

# %%
print("  k   mean DC   sd")
for k in (1, 10, 50, 100):
    dcs = []
    for seed in range(3):
        cfg = TrainConfig(latent_dim=2, epochs=200, batch_size=64, seed=seed,
                          reference={"kind": "pca", "k": k})
        dcs.append(evaluate(test, fit(cfg, train).params, config=EvalConfig(ks=(5,))).dc)
    print(f"{k:3d}   {np.mean(dcs):.3f}   {np.std(dcs, ddof=1):.3f}")

# %% [markdown]
# For the full random search over batch size, learning rate, weight and
# component count, use the command line:
#
# ```
# mmae generate spheres --n 100 --n-big 100 --test-fraction 0.2 --out data
# mmae sweep --config base.json --data data/train.csv --out sweep
# ```
#
# where `base.json` holds e.g. `{"epochs": 100, "reference": {"kind": "pca", "k": 81}}`.
