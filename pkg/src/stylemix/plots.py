"""Table and PNG export for the analysis results."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_embedding_table",
    "write_correlation_table",
    "render_embedding_png",
    "render_correlation_png",
]


def write_embedding_table(coords: np.ndarray, names: list[str], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["style", "x", "y"])
        for name, (x, y) in zip(names, coords):
            writer.writerow([name, f"{x:.8g}", f"{y:.8g}"])


def write_correlation_table(matrix: np.ndarray, names: list[str], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["style"] + list(names))
        for name, row in zip(names, matrix):
            writer.writerow([name] + [f"{v:.8g}" for v in row])


def render_embedding_png(coords: np.ndarray, names: list[str], path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(coords[:, 0], coords[:, 1], s=60, c=np.arange(len(names)), cmap="tab20")
    for name, (x, y) in zip(names, coords):
        ax.annotate(name, (x, y), textcoords="offset points", xytext=(6, 4), fontsize=8)
    ax.set_title("style embedding (2-D)")
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_correlation_png(matrix: np.ndarray, names: list[str], path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(matrix, vmin=-1.0, vmax=1.0, cmap="coolwarm")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(names)), names, fontsize=8)
    ax.set_title("style weight correlation")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
