#!/usr/bin/env python3
"""Map a six-style registry: correlation matrix, PCA, and exact t-SNE.

The style weights live on a 64-simplex, so we can compare styles directly
in weight space.  Pearson correlation shows which styles share basis
slices; PCA to ten dimensions followed by t-SNE gives the 2-D scatter the
mixer UI displays.
"""

import numpy as np

from stylemix.remix import correlation_matrix, embed_styles
from stylemix.plots import (
    render_correlation_png,
    render_embedding_png,
    write_correlation_table,
    write_embedding_table,
)
from stylemix.toydata import STYLE_KINDS

from _shared import ensure_toy_checkpoint, output_path

# Six distinct textures give the embedding something to organise.
model, _ = ensure_toy_checkpoint(name="toy6", styles=STYLE_KINDS[:6],
                                 total_iters=1100, segment=150, seed=1)

matrix, names = correlation_matrix(model.registry)
print("correlation matrix:")
for name, row in zip(names, matrix):
    print(f"  {name:>14}: " + " ".join(f"{v:+.2f}" for v in row))
write_correlation_table(matrix, names, output_path("toy6", "correlation.csv"))
render_correlation_png(matrix, names, output_path("toy6", "correlation.png"))

result = embed_styles(model, pca_dims=10, seed=0)
print(f"\nt-SNE over PCA-{result.pca_dims} scores at perplexity {result.perplexity}: "
      f"KL {result.initial_kl:.3f} -> {result.final_kl:.3f}")
for name, (x, y) in zip(result.names, result.coords):
    print(f"  {name:>14}: ({x:8.2f}, {y:8.2f})")
write_embedding_table(result.coords, result.names, output_path("toy6", "embedding.csv"))
render_embedding_png(result.coords, result.names, output_path("toy6", "embedding.png"))
print(f"\ntables and plots -> {output_path('toy6', '')}")
