"""Style-weight manipulation and embedding analysis.

Remixing never touches the network: new styles are new weight vectors.
Convex combination interpolates two styles, Gaussian perturbation explores
a style's neighborhood (renormalized by the sum, so entries may go
negative), and collection transfer aggregates the whole registry.  The
analysis half offers Pearson correlation of the weight vectors, PCA, an
exact t-SNE for small style sets, and analytic FLOPs accounting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, MultiStyleModel, StyleRegistry

__all__ = [
    "convex_combination",
    "perturb_weights",
    "cst_weights",
    "block_onehot_weights",
    "correlation_matrix",
    "PCAResult",
    "pca_reduce",
    "TSNEResult",
    "tsne_embed",
    "EmbeddingResult",
    "embed_styles",
    "conv_macs",
    "FlopsReport",
    "flops_count",
]


# ---------------------------------------------------------------------------
# Weight manipulation


def _check_simplex(name: str, w: np.ndarray, tol: float = 1e-4) -> None:
    if abs(float(w.sum()) - 1.0) > tol or np.any(w < -tol):
        raise ValueError(f"{name}: weight vector must lie on the simplex "
                         f"(sum={float(w.sum()):.6f}, min={float(w.min()):.6f})")


def convex_combination(w_l: np.ndarray, w_k: np.ndarray, alpha: float) -> np.ndarray:
    """alpha * w_l + (1 - alpha) * w_k; stays on the simplex.

    The endpoints are returned exactly (bitwise) so sweeps that end at
    alpha 1 or 0 reproduce the pure styles.
    """
    w_l = np.asarray(w_l, dtype=np.float32)
    w_k = np.asarray(w_k, dtype=np.float32)
    if w_l.shape != w_k.shape:
        raise ValueError(f"convex_combination: shapes {w_l.shape} and {w_k.shape} differ")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"convex_combination: alpha must be in [0, 1], got {alpha}")
    _check_simplex("convex_combination (first operand)", w_l)
    _check_simplex("convex_combination (second operand)", w_k)
    if alpha == 1.0:
        return w_l.copy()
    if alpha == 0.0:
        return w_k.copy()
    return (np.float32(alpha) * w_l + np.float32(1.0 - alpha) * w_k).astype(np.float32)


def perturb_weights(w: np.ndarray, mu: float, sigma: float, seed: int,
                    max_retries: int = 5) -> np.ndarray:
    """Add per-entry Gaussian noise N(mu, sigma^2), then divide by the sum.

    The result sums to one but entries may be negative; that is legal and
    produces usable off-simplex styles.  Draws whose sum is within 1e-6 of
    zero are rejected and redrawn, up to ``max_retries`` times.
    """
    w = np.asarray(w, dtype=np.float64)
    if sigma < 0:
        raise ValueError(f"perturb_weights: sigma must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        v = w + rng.normal(mu, sigma, size=w.shape)
        total = float(v.sum())
        if abs(total) >= 1e-6:
            return (v / total).astype(np.float32)
    raise RuntimeError(f"perturb_weights: drew {max_retries} vectors with near-zero sum; "
                       "mu and sigma leave no mass to normalise")


def cst_weights(registry: StyleRegistry, mode: str = "average") -> np.ndarray:
    """Collection-transfer weights: the registry average, or the uniform point.

    Averaging simplex points stays on the simplex; the uniform mode ignores
    the registry contents and only needs any registered style to size the
    vector.
    """
    if mode not in ("average", "uniform"):
        raise ValueError(f"cst_weights: mode must be 'average' or 'uniform', got {mode!r}")
    layers = list(registry)
    if not layers:
        raise ValueError("cst_weights: the style registry is empty")
    c = layers[0].theta.shape[0]
    if mode == "uniform":
        return np.full(c, 1.0 / c, dtype=np.float32)
    stacked = np.stack([layer.forward().data for layer in layers])
    return stacked.mean(axis=0).astype(np.float32)


def block_onehot_weights(style_index: int, num_styles: int, channels: int) -> np.ndarray:
    """Fixed block weights giving each style a disjoint slice of the basis.

    Block ``style_index`` (size channels/num_styles) gets the uniform value
    num_styles/channels so the vector still sums to one; everything else is
    exactly zero.  These vectors are meant to be registered non-learnable.
    """
    if channels % num_styles:
        raise ValueError(f"block_onehot_weights: {channels} channels do not divide "
                         f"evenly into {num_styles} blocks")
    if not (0 <= style_index < num_styles):
        raise ValueError(f"block_onehot_weights: style_index {style_index} out of range "
                         f"for {num_styles} styles")
    block = channels // num_styles
    w = np.zeros(channels, dtype=np.float32)
    w[style_index * block:(style_index + 1) * block] = num_styles / channels
    return w


# ---------------------------------------------------------------------------
# Embedding analysis


def correlation_matrix(registry: StyleRegistry) -> tuple[np.ndarray, list[str]]:
    """Pearson correlation between the styles' weight vectors.

    Works on the softmaxed weights (the space styles are manipulated in),
    not the logits.  Symmetric with a unit diagonal.
    """
    layers = list(registry)
    if len(layers) < 2:
        raise ValueError(f"correlation_matrix needs at least 2 styles, got {len(layers)}")
    rows = np.stack([layer.forward().data.astype(np.float64) for layer in layers])
    centered = rows - rows.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    for layer, nrm in zip(layers, norms):
        if nrm == 0.0:
            raise ValueError(f"correlation_matrix: style {layer.name!r} has constant weights")
    mat = (centered @ centered.T) / np.outer(norms, norms)
    return mat, [layer.name for layer in layers]


@dataclass
class PCAResult:
    """Scores, orthonormal components (rows), and per-component variance."""

    scores: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    singular_values: np.ndarray


def pca_reduce(data: np.ndarray, k: int) -> PCAResult:
    """Project centered data onto its top-k principal components.

    Components are orthonormal rows ordered by decreasing explained
    variance; signs are canonicalized so each component's
    largest-magnitude entry is positive.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError(f"pca_reduce: data must be [N >= 2, d], got shape {data.shape}")
    n, d = data.shape
    if not (1 <= k <= min(n, d)):
        raise ValueError(f"pca_reduce: k={k} out of range for {n}x{d} data")
    centered = data - data.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # Deterministic sign: flip each component so its peak entry is positive.
    peaks = vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)]
    signs = np.where(peaks < 0, -1.0, 1.0)
    vt = vt * signs[:, None]
    components = vt[:k]
    scores = centered @ components.T
    return PCAResult(scores=scores, components=components,
                     explained_variance=(s[:k] ** 2) / (n - 1), singular_values=s.copy())


@dataclass
class TSNEResult:
    coords: np.ndarray
    initial_kl: float
    final_kl: float
    perplexity: float
    seed: int
    iterations: int


def _conditional_probs(dist_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gaussian affinities at precision beta plus their Shannon entropy (nats)."""
    p = np.exp(-dist_row * beta)
    total = p.sum()
    if total <= 0:
        return np.zeros_like(p), 0.0
    p = p / total
    nz = p > 0
    entropy = -float(np.sum(p[nz] * np.log(p[nz])))
    return p, entropy


def _affinities(data: np.ndarray, perplexity: float, tol: float = 1e-4,
                max_evals: int = 64) -> np.ndarray:
    """Symmetrized joint affinities with per-point precision search."""
    n = data.shape[0]
    sq = (data * data).sum(axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (data @ data.T), 0.0)
    target = float(np.log(perplexity))
    p = np.zeros((n, n))
    fallback = False
    for i in range(n):
        row = np.delete(dist[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        probs, entropy = _conditional_probs(row, beta)
        evals = 1
        while abs(entropy - target) > tol and evals < max_evals:
            if entropy > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            probs, entropy = _conditional_probs(row, beta)
            evals += 1
        if abs(entropy - target) > tol:
            fallback = True
        p[i] = np.insert(probs, i, 0.0)
    if fallback:
        warnings.warn("t-SNE: entropy search did not converge for some points "
                      "(duplicates or degenerate distances); using the closest bandwidth found")
    p = (p + p.T) / (2.0 * n)
    return np.maximum(p, 1e-12)


def _kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    n = y.shape[0]
    sq = (y * y).sum(axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * (y @ y.T), 0.0))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    return float(np.sum(p * np.log(p / q)))


def tsne_embed(data: np.ndarray, perplexity: float = 5.0, seed: int = 0,
               iters: int = 500, learning_rate: float = 200.0) -> TSNEResult:
    """Exact O(N^2) t-SNE to 2 dimensions, deterministic given the seed.

    Early exaggeration multiplies the affinities by 4 for the first 100
    iterations; momentum switches from 0.5 to 0.8 at iteration 250.  The
    returned KL divergences are measured against the plain (unexaggerated)
    affinities, before and after optimization.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n < 3:
        raise ValueError(f"tsne_embed needs at least 3 points, got {n}")
    if not (0 < perplexity < n):
        raise ValueError(f"tsne_embed: perplexity must be in (0, {n}), got {perplexity}")

    p = _affinities(data, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    initial_kl = _kl_divergence(p, y)

    exaggeration_until = 100
    momentum_switch = 250
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(iters):
        p_eff = p * 4.0 if it < exaggeration_until else p
        sq = (y * y).sum(axis=1)
        num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * (y @ y.T), 0.0))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        pq = (p_eff - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)
        momentum = 0.5 if it < momentum_switch else 0.8
        gains = np.where(np.sign(grad) != np.sign(velocity), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0, keepdims=True)

    final_kl = _kl_divergence(p, y)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("tsne_embed: embedding diverged to non-finite coordinates")
    return TSNEResult(coords=y, initial_kl=initial_kl, final_kl=final_kl,
                      perplexity=perplexity, seed=seed, iterations=iters)


@dataclass
class EmbeddingResult:
    """2-D style map plus the reduction metadata."""

    coords: np.ndarray
    names: list[str]
    pca_dims: int
    perplexity: float
    seed: int
    initial_kl: float
    final_kl: float


def embed_styles(model: MultiStyleModel, pca_dims: int = 10, perplexity: float | None = None,
                 seed: int = 0, iters: int = 500) -> EmbeddingResult:
    """Correlate, reduce, and embed the registry's weight vectors in 2-D.

    PCA first compresses the weights to ``pca_dims`` (clamped to the data's
    rank budget), then exact t-SNE maps them to the plane.
    """
    layers = list(model.registry)
    if len(layers) < 3:
        raise ValueError(f"embed_styles needs at least 3 styles, got {len(layers)}")
    rows = np.stack([layer.forward().data.astype(np.float64) for layer in layers])
    k = max(1, min(pca_dims, rows.shape[0], rows.shape[1]))
    reduced = pca_reduce(rows, k).scores
    if perplexity is None:
        # Perplexity near N makes the affinities uniform and the near-point
        # init already optimal; scale it well below the style count.
        perplexity = max(1.5, min(5.0, (len(layers) - 1) / 2))
    ts = tsne_embed(reduced, perplexity=perplexity, seed=seed, iters=iters)
    return EmbeddingResult(coords=ts.coords, names=[l.name for l in layers], pca_dims=k,
                           perplexity=ts.perplexity, seed=seed,
                           initial_kl=ts.initial_kl, final_kl=ts.final_kl)


# ---------------------------------------------------------------------------
# Inference cost accounting


def conv_macs(c_out: int, c_in: int, k: int, h_out: int, w_out: int) -> int:
    """Multiply-adds of one convolution layer at the given output size."""
    return c_out * c_in * k * k * h_out * w_out


@dataclass
class FlopsReport:
    """Per-layer multiply-add counts for one stylizing forward pass."""

    layers: list[dict] = field(default_factory=list)

    @property
    def total_macs(self) -> int:
        return sum(layer["macs"] for layer in self.layers)

    @property
    def total_flops(self) -> int:
        """Counting one multiply-add as two floating point operations."""
        return 2 * self.total_macs


def flops_count(config: ModelConfig, size: int | tuple[int, int]) -> FlopsReport:
    """Analytic convolution cost of the stylizing branch at an input size."""
    h, w = (size, size) if isinstance(size, int) else size
    if h % 4 or w % 4:
        raise ValueError(f"flops_count: input size {h}x{w} must be divisible by 4")
    e0, e1, e2 = config.enc_channels
    c = config.basis_channels
    k = config.kernel_size
    spec = [
        ("enc1", 3, e0, h, w),
        ("enc2", e0, e1, h // 2, w // 2),
        ("enc3", e1, e2, h // 4, w // 4),
        ("basis", c, c, h // 4, w // 4),
        ("dec1", c, e1, h // 2, w // 2),
        ("dec2", e1, e0, h, w),
        ("out", e0, 3, h, w),
    ]
    report = FlopsReport()
    for name, cin, cout, ho, wo in spec:
        report.layers.append({"name": name, "c_in": cin, "c_out": cout,
                              "out_h": ho, "out_w": wo,
                              "macs": conv_macs(cout, cin, k, ho, wo)})
    return report
