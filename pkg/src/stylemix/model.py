"""The multi-style transfer network.

A three-stage symmetric autoencoder surrounds a single shared basis layer:
encoder -> (weighted basis conv) -> decoder.  Every style is a vector of
weights over the basis's input-channel slices; the weighted convolution is
realised by scaling the feature map's channels and convolving with the
unweighted basis, which is algebraically identical to materialising the
weighted kernel bank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import archive
from .autodiff import ShapeError, Tensor
from .nnops import ConvKernel, HALF_STRIDE, conv2d, instance_norm, relu, softmax_vec, scale_channels, upsample_conv2d

__all__ = [
    "ModelConfig",
    "StyleBasis",
    "StyleWeightsLayer",
    "StyleRegistry",
    "MultiStyleModel",
    "weighted_basis",
    "apply_style",
    "save_checkpoint",
    "load_checkpoint",
    "MODEL_KIND",
]

MODEL_KIND = "multi_style_model"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``enc_channels`` are the encoder stage widths (stride 1, 2, 2); the last
    must equal ``basis_channels``, which is both the input and output width
    of the shared basis layer and the length of every style weight vector.
    """

    enc_channels: tuple[int, int, int] = (16, 32, 64)
    basis_channels: int = 64
    kernel_size: int = 3
    image_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "enc_channels", tuple(int(c) for c in self.enc_channels))
        if len(self.enc_channels) != 3 or any(c < 1 for c in self.enc_channels):
            raise ValueError(f"enc_channels must be three positive widths, got {self.enc_channels}")
        if self.enc_channels[-1] != self.basis_channels:
            raise ValueError(f"encoder output width {self.enc_channels[-1]} must equal "
                             f"basis_channels {self.basis_channels}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.image_size < 4 or self.image_size % 4:
            raise ValueError(f"image_size must be a positive multiple of 4, got {self.image_size}")

    @classmethod
    def desk(cls) -> "ModelConfig":
        """Small configuration that trains in minutes on a CPU."""
        return cls()

    @classmethod
    def paper_scale(cls) -> "ModelConfig":
        """Full-scale configuration: 256 basis channels at 512 pixels."""
        return cls(enc_channels=(32, 64, 256), basis_channels=256, image_size=512)

    def to_dict(self) -> dict:
        return {"enc_channels": list(self.enc_channels), "basis_channels": self.basis_channels,
                "kernel_size": self.kernel_size, "image_size": self.image_size}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(enc_channels=tuple(d["enc_channels"]), basis_channels=d["basis_channels"],
                   kernel_size=d["kernel_size"], image_size=d["image_size"])


def _he_init(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return (rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)).astype(dtype)


class _ConvBlock:
    """Conv with reflection padding, optionally followed by IN and ReLU."""

    def __init__(self, rng, name: str, c_in: int, c_out: int, k: int, stride,
                 dtype, normed: bool = True, activated: bool = True, biased: bool = False):
        self.name = name
        self.normed = normed
        self.activated = activated
        weights = Tensor(_he_init(rng, (c_out, c_in, k, k), dtype), requires_grad=True,
                         name=f"{name}.weights", dtype=dtype)
        bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True,
                      name=f"{name}.bias", dtype=dtype) if biased else None
        self.kernel = ConvKernel(weights=weights, bias=bias, stride=stride)
        if normed:
            self.gamma = Tensor(np.ones(c_out, dtype=dtype), requires_grad=True,
                                name=f"{name}.gamma", dtype=dtype)
            self.beta = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True,
                               name=f"{name}.beta", dtype=dtype)
        else:
            self.gamma = self.beta = None

    def __call__(self, x: Tensor) -> Tensor:
        y = upsample_conv2d(x, self.kernel) if self.kernel.stride == HALF_STRIDE else conv2d(x, self.kernel)
        if self.normed:
            y = instance_norm(y, self.gamma, self.beta)
        if self.activated:
            y = relu(y)
        return y

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = [(self.kernel.weights.name, self.kernel.weights)]
        if self.kernel.bias is not None:
            out.append((self.kernel.bias.name, self.kernel.bias))
        if self.normed:
            out.append((self.gamma.name, self.gamma))
            out.append((self.beta.name, self.beta))
        return out


class StyleBasis:
    """The shared bank of basis kernels with its own IN affine parameters.

    Exactly one instance exists per model; styles only ever reweight its
    input-channel slices.
    """

    def __init__(self, rng, channels: int, k: int, dtype):
        self.kernels = Tensor(_he_init(rng, (channels, channels, k, k), dtype),
                              requires_grad=True, name="basis.kernels", dtype=dtype)
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True,
                            name="basis.gamma", dtype=dtype)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True,
                           name="basis.beta", dtype=dtype)

    @property
    def channels(self) -> int:
        return self.kernels.shape[0]

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("basis.kernels", self.kernels), ("basis.gamma", self.gamma), ("basis.beta", self.beta)]


class StyleWeightsLayer:
    """One style's weight vector over the basis slices.

    When ``learnable``, ``theta`` holds pre-softmax logits and the forward
    pass applies softmax, so the weights always lie strictly inside the
    simplex.  When frozen (``learnable=False``), ``theta`` holds the weight
    vector itself, which allows exact zeros (block one-hot mode) and is
    validated to be on the simplex at construction.
    """

    def __init__(self, name: str, channels: int, learnable: bool = True,
                 weights: np.ndarray | None = None, dtype=np.float32):
        self.name = name
        self.learnable = bool(learnable)
        if self.learnable:
            if weights is not None:
                raise ValueError("learnable style layers initialise theta to all-equal logits; "
                                 "fixed weight vectors require learnable=False")
            self.theta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True,
                                name=f"style.{name}.theta", dtype=dtype)
        else:
            if weights is None:
                weights = np.full(channels, 1.0 / channels, dtype=dtype)
            w = np.asarray(weights, dtype=dtype)
            if w.shape != (channels,):
                raise ShapeError(f"style {name!r}: weight vector of shape {w.shape} "
                                 f"does not match {channels} basis channels")
            if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-5:
                raise ValueError(f"style {name!r}: fixed weights must lie on the simplex")
            self.theta = Tensor(w, requires_grad=False, name=f"style.{name}.theta", dtype=dtype)

    def forward(self) -> Tensor:
        """The simplex point this style occupies, differentiable when learnable."""
        if self.learnable:
            return softmax_vec(self.theta)
        return Tensor(self.theta.data, dtype=self.theta.dtype)


class StyleRegistry:
    """Ordered set of style layers; order is stable across save/load."""

    def __init__(self):
        self._layers: list[StyleWeightsLayer] = []
        self._by_name: dict[str, StyleWeightsLayer] = {}
        self.ref_images: dict[str, str | None] = {}

    def __len__(self) -> int:
        return len(self._layers)

    def __iter__(self):
        return iter(self._layers)

    def names(self) -> list[str]:
        return [layer.name for layer in self._layers]

    def get(self, name: str) -> StyleWeightsLayer:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown style {name!r}; registered styles: {self.names()}") from None

    def add(self, layer: StyleWeightsLayer, ref_image: str | None = None) -> StyleWeightsLayer:
        if layer.name in self._by_name:
            raise ValueError(f"style {layer.name!r} is already registered")
        self._layers.append(layer)
        self._by_name[layer.name] = layer
        self.ref_images[layer.name] = ref_image
        return layer


def weighted_basis(basis: StyleBasis, w: Tensor | np.ndarray) -> Tensor:
    """Materialise the per-style kernel bank: slice i of the basis scaled by w[i]."""
    if not isinstance(w, Tensor):
        w = Tensor(w, dtype=basis.kernels.dtype)
    if w.shape != (basis.channels,):
        raise ShapeError(f"weighted_basis: weight vector of shape {w.shape} does not match "
                         f"{basis.channels} basis input channels")
    return scale_channels(basis.kernels, w)


def apply_style(features: Tensor, basis: StyleBasis, w: Tensor | np.ndarray) -> Tensor:
    """Transfer features through the weighted basis layer.

    Implemented by scaling feature channels and convolving with the
    unweighted basis; materialising the weighted bank first gives the same
    output and is kept as a test oracle via :func:`weighted_basis`.
    """
    if not isinstance(w, Tensor):
        w = Tensor(w, dtype=features.dtype)
    if features.ndim != 4 or features.shape[1] != basis.channels:
        raise ShapeError(f"apply_style: features of shape {features.shape} do not match "
                         f"{basis.channels} basis channels")
    scaled = scale_channels(features, w)
    y = conv2d(scaled, ConvKernel(weights=basis.kernels, stride=1))
    return relu(instance_norm(y, basis.gamma, basis.beta))


class MultiStyleModel:
    """Encoder, decoder, shared style basis, and the style registry."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        e0, e1, e2 = config.enc_channels
        k = config.kernel_size
        self.encoder = [
            _ConvBlock(rng, "enc1", 3, e0, k, 1, dtype),
            _ConvBlock(rng, "enc2", e0, e1, k, 2, dtype),
            _ConvBlock(rng, "enc3", e1, e2, k, 2, dtype),
        ]
        self.basis = StyleBasis(rng, config.basis_channels, k, dtype)
        self.decoder = [
            _ConvBlock(rng, "dec1", config.basis_channels, e1, k, HALF_STRIDE, dtype),
            _ConvBlock(rng, "dec2", e1, e0, k, HALF_STRIDE, dtype),
            _ConvBlock(rng, "out", e0, 3, k, 1, dtype, normed=False, activated=False, biased=True),
        ]
        self.registry = StyleRegistry()

    # -- forward paths ------------------------------------------------------

    def _check_image(self, img: Tensor) -> None:
        if img.ndim != 4 or img.shape[1] != 3:
            raise ShapeError(f"expected an [n, 3, H, W] image tensor, got shape {img.shape}")
        if img.shape[2] % 4 or img.shape[3] % 4:
            raise ShapeError(f"image dims {img.shape[2]}x{img.shape[3]} must be divisible by 4")

    def _tensor(self, x) -> Tensor:
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype), dtype=self.dtype)

    def encode(self, img) -> Tensor:
        img = self._tensor(img)
        self._check_image(img)
        f = img
        for block in self.encoder:
            f = block(f)
        return f

    def decode(self, features: Tensor) -> Tensor:
        if features.ndim != 4 or features.shape[1] != self.config.basis_channels:
            raise ShapeError(f"decode: features of shape {features.shape} do not match "
                             f"{self.config.basis_channels} channels")
        y = features
        for block in self.decoder:
            y = block(y)
        return y

    def reconstruct(self, img) -> Tensor:
        """Autoencoder branch: encode then decode, bypassing the basis layer."""
        return self.decode(self.encode(img))

    def apply_style(self, features: Tensor, w) -> Tensor:
        return apply_style(features, self.basis, w)

    def stylize(self, img, w) -> Tensor:
        """Stylizing branch: encode, weighted-basis transfer, decode.

        ``w`` may be any finite vector of length ``basis_channels``; points
        off the simplex are legal (noise-perturbed styles produce them).
        The output is unclamped; clamping to [0, 1] happens at image export.
        """
        return self.decode(self.apply_style(self.encode(img), w))

    def style_weights(self, style) -> Tensor:
        """Simplex weights of a registered style (by name or layer)."""
        layer = self.registry.get(style) if isinstance(style, str) else style
        return layer.forward()

    # -- registry -----------------------------------------------------------

    def add_style(self, name: str, ref_image: str | None = None, learnable: bool = True,
                  weights: np.ndarray | None = None) -> StyleWeightsLayer:
        """Register a new style; grows the model by exactly basis_channels parameters."""
        layer = StyleWeightsLayer(name, self.config.basis_channels, learnable=learnable,
                                  weights=weights, dtype=self.dtype)
        return self.registry.add(layer, ref_image=ref_image)

    # -- parameter access ---------------------------------------------------

    def autoencoder_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for block in self.encoder + self.decoder:
            out.extend(block.parameters())
        return out

    def basis_parameters(self) -> list[tuple[str, Tensor]]:
        return self.basis.parameters()

    def parameters(self) -> list[tuple[str, Tensor]]:
        """All parameter tensors, in checkpoint order."""
        out = []
        for block in self.encoder:
            out.extend(block.parameters())
        out.extend(self.basis.parameters())
        for block in self.decoder:
            out.extend(block.parameters())
        for layer in self.registry:
            out.append((layer.theta.name, layer.theta))
        return out

    def num_parameters(self) -> int:
        return sum(t.size for _, t in self.parameters())


# ---------------------------------------------------------------------------
# Checkpoint persistence


def save_checkpoint(model: MultiStyleModel, path: str) -> None:
    """Write the model to a manifest+blob archive directory."""
    styles = [{"name": layer.name, "learnable": layer.learnable,
               "ref_image": model.registry.ref_images.get(layer.name)}
              for layer in model.registry]
    archive.write_archive(path, MODEL_KIND, model.config.to_dict(),
                          [(name, t.data) for name, t in model.parameters()],
                          styles=styles)


def load_checkpoint(path: str) -> MultiStyleModel:
    """Reconstruct a model bit-exactly from :func:`save_checkpoint` output."""
    manifest, arrays = archive.read_archive(path, expect_kind=MODEL_KIND)
    config = ModelConfig.from_dict(manifest["config"])
    model = MultiStyleModel(config, seed=0)
    for style in manifest.get("styles", []):
        theta = arrays.get(f"style.{style['name']}.theta")
        if theta is None:
            raise archive.ManifestError(f"style {style['name']!r} has no theta tensor in the archive")
        if style["learnable"]:
            model.add_style(style["name"], ref_image=style.get("ref_image"))
        else:
            model.add_style(style["name"], ref_image=style.get("ref_image"),
                            learnable=False, weights=theta)
    expected = dict(model.parameters())
    if set(expected) != set(arrays):
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        raise archive.ManifestError(f"archive tensors do not match the model: "
                                    f"missing {missing}, unexpected {extra}")
    for name, tensor in expected.items():
        if arrays[name].shape != tensor.data.shape:
            raise archive.TensorLayoutError(f"tensor {name!r}: archive shape {arrays[name].shape} "
                                            f"does not match model shape {tensor.data.shape}")
        tensor.data[...] = arrays[name]
    return model
