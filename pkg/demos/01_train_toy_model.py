#!/usr/bin/env python3
"""Train the two-style toy model and look at its learning dynamics.

The run follows the two-phase schedule: first the autoencoder alone, then
one segment per style with the style set grown incrementally, then T+1
finetuning (one reconstruction step, T style steps, repeat).  The loss log
written next to the checkpoint has one record per iteration, which we plot
per branch.
"""

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from _shared import ensure_toy_checkpoint, output_path

model, ckpt_dir = ensure_toy_checkpoint()

log = [json.loads(line) for line in open(os.path.join(ckpt_dir, "loss_log.jsonl"))]
recon = [(e["iter"], e["loss"]) for e in log if e["branch"] == "reconstruction"]
styles = sorted({e["style"] for e in log if e["style"]})

fig, axes = plt.subplots(1, 2, figsize=(11, 4))
axes[0].plot(*zip(*recon), lw=0.8)
axes[0].set_yscale("log")
axes[0].set_title("reconstruction loss")
axes[0].set_xlabel("iteration")
for name in styles:
    pts = [(e["iter"], e["loss"]) for e in log if e["style"] == name]
    axes[1].plot(*zip(*pts), lw=0.8, label=name)
axes[1].set_yscale("log")
axes[1].set_title("stylizing loss per style")
axes[1].set_xlabel("iteration")
axes[1].legend()
fig.tight_layout()
out = output_path("toy2", "losses.png")
fig.savefig(out, dpi=120)
print(f"model has {model.num_parameters():,} parameters over {len(model.registry)} styles")
print(f"loss curves -> {out}")
