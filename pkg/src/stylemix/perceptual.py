"""Fixed-weight feature extractor, gram matrices, and the training losses.

The extractor is a frozen four-block conv stack with named tap points
(conv1_2, conv2_2, conv3_2, conv4_2) at cumulative strides 1, 2, 4, 8.
Its weights are generated once from a seed (or converted from an external
network) and stored in the same manifest+blob archive format as model
checkpoints; they never receive gradients.  Random frozen features carry
enough texture statistics for desk-scale work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import archive
from .autodiff import ShapeError, Tensor, no_grad
from .nnops import ConvKernel, conv2d, relu

__all__ = [
    "TAP_NAMES",
    "TAP_STRIDES",
    "CONTENT_TAPS",
    "STYLE_TAPS",
    "FeatureExtractor",
    "LossWeights",
    "extract_features",
    "gram_matrix",
    "content_loss",
    "style_loss",
    "style_loss_against_grams",
    "target_grams",
    "perceptual_loss",
    "reconstruction_loss",
    "EXTRACTOR_KIND",
]

EXTRACTOR_KIND = "feature_extractor"

TAP_NAMES = ("conv1_2", "conv2_2", "conv3_2", "conv4_2")
TAP_STRIDES = {"conv1_2": 1, "conv2_2": 2, "conv3_2": 4, "conv4_2": 8}
CONTENT_TAPS = ("conv2_2",)
STYLE_TAPS = TAP_NAMES


@dataclass(frozen=True)
class LossWeights:
    """Content/style balance of the stylizing loss."""

    alpha: float = 1.0
    beta: float = 3e4

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"loss weights must be non-negative, got alpha={self.alpha}, beta={self.beta}")

    @classmethod
    def painting_mode(cls) -> "LossWeights":
        """Heavier style emphasis used for painting collections."""
        return cls(alpha=1.0, beta=6e4)


class FeatureExtractor:
    """Frozen conv stack with tap points at strides 1, 2, 4, 8.

    Each block is two 3x3 convs with ReLU; blocks 2 to 4 open with a
    stride-2 conv.  The tap is the activation after the block's second
    conv.
    """

    def __init__(self, weights: dict[str, np.ndarray], channels: tuple[int, ...], seed: int):
        self.channels = tuple(int(c) for c in channels)
        self.seed = int(seed)
        self._kernels: dict[str, ConvKernel] = {}
        for name, arr in weights.items():
            self._kernels[name] = ConvKernel(weights=Tensor(arr, requires_grad=False, name=name))
        expected = [f"conv{b}_{i}" for b in range(1, 5) for i in (1, 2)]
        missing = [n for n in expected if n not in self._kernels]
        if missing:
            raise ValueError(f"feature extractor is missing conv weights: {missing}")

    @classmethod
    def generate(cls, channels: tuple[int, int, int, int] = (16, 32, 64, 128),
                 seed: int = 7) -> "FeatureExtractor":
        """Deterministically sample a frozen extractor from ``seed``."""
        rng = np.random.default_rng(seed)
        weights = {}
        c_prev = 3
        for b, c in enumerate(channels, start=1):
            for i in (1, 2):
                c_in = c_prev if i == 1 else c
                fan_in = c_in * 9
                weights[f"conv{b}_{i}"] = rng.normal(
                    0.0, np.sqrt(2.0 / fan_in), size=(c, c_in, 3, 3)).astype(np.float32)
            c_prev = c
        return cls(weights, channels, seed)

    def features(self, img: Tensor, taps: tuple[str, ...] | None = None) -> dict[str, Tensor]:
        """Tap name -> feature tensor; gradients flow to the image only.

        ``taps`` restricts the output and stops the stack at the deepest
        requested tap; by default all four taps are returned.
        """
        if img.ndim != 4 or img.shape[1] != 3:
            raise ShapeError(f"extractor expects [n, 3, H, W] images, got shape {img.shape}")
        if img.shape[2] % 8 or img.shape[3] % 8:
            raise ShapeError(f"image dims {img.shape[2]}x{img.shape[3]} must be divisible by 8")
        wanted = TAP_NAMES if taps is None else taps
        unknown = [t for t in wanted if t not in TAP_NAMES]
        if unknown:
            raise ValueError(f"unknown tap names {unknown}; available: {list(TAP_NAMES)}")
        deepest = max(TAP_NAMES.index(t) for t in wanted) + 1
        out: dict[str, Tensor] = {}
        x = img
        for b in range(1, deepest + 1):
            k1 = self._kernels[f"conv{b}_1"]
            stride = 1 if b == 1 else 2
            x = relu(conv2d(x, ConvKernel(weights=k1.weights, stride=stride)))
            x = relu(conv2d(x, self._kernels[f"conv{b}_2"]))
            name = TAP_NAMES[b - 1]
            if name in wanted:
                out[name] = x
        return out

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(name, k.weights) for name, k in sorted(self._kernels.items())]

    def save(self, path: str) -> None:
        config = {"channels": list(self.channels), "seed": self.seed}
        archive.write_archive(path, EXTRACTOR_KIND, config,
                              [(name, t.data) for name, t in self.parameters()])

    @classmethod
    def load(cls, path: str) -> "FeatureExtractor":
        manifest, arrays = archive.read_archive(path, expect_kind=EXTRACTOR_KIND)
        cfg = manifest["config"]
        return cls(arrays, tuple(cfg["channels"]), cfg.get("seed", 0))


def extract_features(extractor: FeatureExtractor, img: Tensor) -> dict[str, Tensor]:
    return extractor.features(img)


def gram_matrix(features: Tensor) -> Tensor:
    """Unnormalized channel inner products: [n, C, H, W] -> [n, C, C].

    G = M M^T for the C x (H*W) flattening of each sample; the 1/n_l
    normalizer belongs to the style loss, not to G.
    """
    if features.ndim != 4:
        raise ShapeError(f"gram_matrix: expected [n, C, H, W], got shape {features.shape}")
    n, c, h, w = features.shape
    m = features.reshape((n, c, h * w))
    return m @ m.transpose((0, 2, 1))


def reconstruction_loss(output: Tensor, target: Tensor) -> Tensor:
    """Squared L2 distance over all pixels."""
    if output.shape != target.shape:
        raise ShapeError(f"reconstruction_loss: shapes {output.shape} and {target.shape} differ")
    d = output - target
    return (d * d).sum()


def content_loss(extractor: FeatureExtractor, output: Tensor, content: Tensor,
                 taps: tuple[str, ...] = CONTENT_TAPS) -> Tensor:
    """Squared feature distance at the content taps."""
    if output.shape != content.shape:
        raise ShapeError(f"content_loss: shapes {output.shape} and {content.shape} differ")
    fa = extractor.features(output)
    fb = extractor.features(content)
    total = None
    for tap in taps:
        d = fa[tap] - fb[tap]
        term = (d * d).sum()
        total = term if total is None else total + term
    return total


def target_grams(extractor: FeatureExtractor, style_img: Tensor,
                 taps: tuple[str, ...] = STYLE_TAPS) -> dict[str, np.ndarray]:
    """Per-tap gram matrices of a style image, computed once with gradients off."""
    with no_grad():
        feats = extractor.features(style_img)
        return {tap: gram_matrix(feats[tap]).data for tap in taps}


def style_loss_against_grams(extractor: FeatureExtractor, output: Tensor,
                             grams: dict[str, np.ndarray],
                             taps: tuple[str, ...] = STYLE_TAPS) -> Tensor:
    """Gram distance of ``output`` to precomputed single-image target grams.

    Each tap contributes ||G(output) - G(target)||^2 / n_l, where n_l is
    the unit count C*H*W of the output's tap.  Batched outputs compare every
    sample against the same target and the contributions are summed.
    """
    feats = extractor.features(output)
    total = None
    for tap in taps:
        f = feats[tap]
        n, c, h, w = f.shape
        target = grams[tap]
        if target.shape[0] != 1:
            raise ShapeError(f"style targets must be single-image grams, got batch {target.shape[0]}")
        g = gram_matrix(f)
        t = Tensor(np.repeat(target, n, axis=0), dtype=f.dtype) if n > 1 else Tensor(target, dtype=f.dtype)
        d = g - t
        term = (d * d).sum() / float(c * h * w)
        total = term if total is None else total + term
    return total


def style_loss(extractor: FeatureExtractor, output: Tensor, style_img: Tensor,
               taps: tuple[str, ...] = STYLE_TAPS) -> Tensor:
    """Gram distance between output and style image; sizes may differ."""
    if style_img.shape[0] != 1:
        raise ShapeError(f"style_loss: style image must have batch 1, got {style_img.shape[0]}")
    return style_loss_against_grams(extractor, output, target_grams(extractor, style_img, taps), taps)


def perceptual_loss(extractor: FeatureExtractor, output: Tensor, content: Tensor,
                    style_img: Tensor, weights: LossWeights = LossWeights()) -> Tensor:
    """alpha * content distance + beta * gram distance."""
    return stylizing_loss(extractor, output, content,
                          target_grams(extractor, style_img), weights)


def stylizing_loss(extractor: FeatureExtractor, output: Tensor, content: Tensor,
                   grams: dict[str, np.ndarray], weights: LossWeights = LossWeights(),
                   content_taps: tuple[str, ...] = CONTENT_TAPS,
                   style_taps: tuple[str, ...] = STYLE_TAPS) -> Tensor:
    """The full stylizing-branch objective from one shared feature extraction.

    Numerically identical to ``alpha * content_loss + beta *
    style_loss_against_grams`` but runs the extractor over ``output`` only
    once, which roughly halves the cost of a training step.
    """
    if output.shape != content.shape:
        raise ShapeError(f"stylizing_loss: shapes {output.shape} and {content.shape} differ")
    out_feats = extractor.features(output)
    with no_grad():
        content_feats = extractor.features(content, taps=content_taps)
    c_total = None
    for tap in content_taps:
        d = out_feats[tap] - Tensor(content_feats[tap].data, dtype=output.dtype)
        term = (d * d).sum()
        c_total = term if c_total is None else c_total + term
    s_total = None
    for tap in style_taps:
        f = out_feats[tap]
        n, c, h, w = f.shape
        target = grams[tap]
        g = gram_matrix(f)
        t = Tensor(np.repeat(target, n, axis=0), dtype=f.dtype) if n > 1 else Tensor(target, dtype=f.dtype)
        d = g - t
        term = (d * d).sum() / float(c * h * w)
        s_total = term if s_total is None else s_total + term
    return weights.alpha * c_total + weights.beta * s_total
