#!/usr/bin/env python3
"""Stylize a fresh image, then remix the styles three ways.

Remixing only ever touches the weight vectors:
  * convex combination sweeps alpha from 1.0 to 0.0 for a smooth transition,
  * Gaussian perturbation explores a style's neighborhood (the renormalized
    vector may pick up negative entries, which is fine),
  * collection transfer aggregates the whole registry (average or uniform).
Each panel grid is written to demos/_output/toy2/.
"""

import numpy as np

from stylemix.autodiff import no_grad
from stylemix.images import save_image
from stylemix.remix import convex_combination, cst_weights, perturb_weights
from stylemix.toydata import content_image

from _shared import ensure_toy_checkpoint, output_path

model, _ = ensure_toy_checkpoint()
names = model.registry.names()
content = content_image(np.random.default_rng(42), 64)


def grid(images, path, pad=2):
    rows = max(img.shape[1] for img in images) + 2 * pad
    total = sum(img.shape[2] + 2 * pad for img in images)
    canvas = np.ones((3, rows, total), dtype=np.float32)
    x = pad
    for img in images:
        canvas[:, pad:pad + img.shape[1], x:x + img.shape[2]] = np.clip(img, 0, 1)
        x += img.shape[2] + 2 * pad
    save_image(canvas, path)
    return path


def stylized(w):
    with no_grad():
        return model.stylize(content[None], w).data[0]


w_a = model.style_weights(names[0]).data
w_b = model.style_weights(names[1]).data

# Plain stylization with each registered style.
print(f"styles: {names}")
print("pure styles ->", grid([content, stylized(w_a), stylized(w_b)],
                             output_path("toy2", "pure_styles.png")))

# Convex combination: the same sweep the interpolation figure uses.
alphas = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0]
sweep = [stylized(convex_combination(w_a, w_b, a)) for a in alphas]
print(f"alpha sweep {alphas} ->", grid(sweep, output_path("toy2", "combination_sweep.png")))

# Noise perturbation around the first style.
c = model.config.basis_channels
variants = [stylized(perturb_weights(w_a, mu=1.0 / c, sigma=0.005, seed=s)) for s in (1, 2, 3)]
neg = perturb_weights(w_a, mu=1.0 / c, sigma=0.005, seed=1)
print(f"perturbed weights sum to {neg.sum():.6f}, min entry {neg.min():.4f}")
print("perturbations ->", grid([stylized(w_a)] + variants,
                               output_path("toy2", "perturbations.png")))

# Collection transfer: the registry's average vs the uniform point.
cst = [stylized(cst_weights(model.registry, mode)) for mode in ("average", "uniform")]
print("collection transfer ->", grid(cst, output_path("toy2", "collection_transfer.png")))
