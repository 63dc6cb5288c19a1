"""Data ingestion, the learning-rate schedule, and two-phase training.

Training runs warming-up first (autoencoder only, then style sets grown one
style at a time), then finetuning with repeating cycles of one
reconstruction step and T style steps.  Every random draw comes from one
seeded generator, so a full run is a pure function of (seed, config,
dataset listing order).
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tape, Tensor, backward
from .images import ImageError, load_image, resize_chw
from .model import ModelConfig, MultiStyleModel
from .nnops import AdamState, adam_step
from .perceptual import (
    FeatureExtractor,
    LossWeights,
    reconstruction_loss,
    stylizing_loss,
    target_grams,
)

__all__ = [
    "TrainConfig",
    "DatasetSpec",
    "Trainer",
    "lr_at",
    "preprocess_content",
    "preprocess_style",
    "write_loss_log",
    "read_loss_log",
    "scalability_sweep",
]

_IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


@dataclass
class TrainConfig:
    """Everything a training run depends on.

    ``warmup_segment_iters`` is the per-segment length K of the warming-up
    schedule; ``style_rounds`` is the T of the T+1 finetuning cycle.  The
    full-scale settings from the source experiments are crop 512, style
    long side 600, batch 4, 300K total iterations; the defaults here are
    desk-scale.
    """

    content_dir: str = ""
    style_dir: str = ""
    model: ModelConfig = field(default_factory=ModelConfig.desk)
    batch_size: int = 2
    crop_size: int = 64
    style_long_side: int = 64
    lr0: float = 1e-3
    lr_decay: float = 0.8
    decay_every: int = 30000
    total_iters: int = 1000
    warmup_segment_iters: int = 200
    style_rounds: int = 2
    alpha: float = 1.0
    beta: float = 3e4
    seed: int = 0
    extractor_path: str | None = None
    extractor_seed: int = 7
    block_onehot: bool = False

    def __post_init__(self):
        for name in ("batch_size", "crop_size", "style_long_side", "decay_every",
                     "total_iters", "warmup_segment_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive")
        if self.style_rounds < 1:
            raise ValueError("TrainConfig.style_rounds (T) must be at least 1")
        if self.crop_size % 8:
            raise ValueError(f"crop_size must be divisible by 8, got {self.crop_size}")
        if not (0 < self.lr_decay <= 1) or self.lr0 <= 0:
            raise ValueError("learning rate schedule requires lr0 > 0 and 0 < lr_decay <= 1")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass
class DatasetSpec:
    """Stable listings of the content and style image files.

    The style listing order defines registry order, so it must not change
    between runs that are meant to be comparable.
    """

    content_files: list[str]
    style_files: list[str]

    def __post_init__(self):
        if not self.content_files:
            raise ValueError("DatasetSpec: content file list is empty")

    @classmethod
    def from_dirs(cls, content_dir: str, style_dir: str) -> "DatasetSpec":
        def listing(d):
            try:
                names = sorted(os.listdir(d))
            except OSError as e:
                raise ValueError(f"cannot list image directory {d}: {e}") from e
            return [os.path.join(d, n) for n in names if n.lower().endswith(_IMAGE_EXTENSIONS)]

        return cls(content_files=listing(content_dir), style_files=listing(style_dir))

    @property
    def style_names(self) -> list[str]:
        return [os.path.splitext(os.path.basename(p))[0] for p in self.style_files]


def lr_at(config: TrainConfig, iteration: int) -> float:
    """Step-decayed learning rate: lr0 * decay^(iteration // decay_every)."""
    if iteration < 0:
        raise ValueError(f"iteration must be non-negative, got {iteration}")
    return config.lr0 * config.lr_decay ** (iteration // config.decay_every)


def _round8(v: float) -> int:
    return max(8, int(np.floor(v / 8.0 + 0.5)) * 8)


def preprocess_content(path: str, crop_size: int, rng: np.random.Generator) -> np.ndarray:
    """Load, upscale if needed so min side >= crop_size, and randomly crop.

    The crop offsets come solely from ``rng``; an exact-size image yields
    the identity crop.
    """
    img = load_image(path)
    return _crop_content(img, crop_size, rng)


def _crop_content(img: np.ndarray, crop_size: int, rng: np.random.Generator) -> np.ndarray:
    _, h, w = img.shape
    if min(h, w) < crop_size:
        scale = crop_size / min(h, w)
        nh = max(crop_size, int(round(h * scale)))
        nw = max(crop_size, int(round(w * scale)))
        img = resize_chw(img, nh, nw)
        _, h, w = img.shape
    top = int(rng.integers(0, h - crop_size + 1))
    left = int(rng.integers(0, w - crop_size + 1))
    return np.ascontiguousarray(img[:, top:top + crop_size, left:left + crop_size])


def preprocess_style(path: str, long_side: int) -> np.ndarray:
    """Scale so the long side hits ``long_side``, then round dims to multiples of 8.

    Rounding is to the nearest multiple (half up) with a floor of 8, so the
    aspect ratio is preserved up to the rounding.
    """
    img = load_image(path)
    _, h, w = img.shape
    scale = long_side / max(h, w)
    nh = _round8(h * scale)
    nw = _round8(w * scale)
    return resize_chw(img, nh, nw)


def write_loss_log(path: str, entries: list[dict]) -> None:
    """Line-delimited JSON, one record per iteration."""
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry, sort_keys=True))
            f.write("\n")


def read_loss_log(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


class Trainer:
    """Drives both training phases over one model and one dataset.

    Adam moments live per parameter tensor, and each step updates exactly
    the parameters of its branch: reconstruction steps touch only the
    autoencoder; style steps touch the autoencoder, the basis, and the
    active style's theta (unless the weights are frozen).
    """

    def __init__(self, model: MultiStyleModel, data: DatasetSpec, config: TrainConfig,
                 extractor: FeatureExtractor | None = None):
        self.model = model
        self.data = data
        self.config = config
        if extractor is None:
            if config.extractor_path:
                extractor = FeatureExtractor.load(config.extractor_path)
            else:
                extractor = FeatureExtractor.generate(seed=config.extractor_seed)
        self.extractor = extractor
        self.rng = np.random.default_rng(config.seed)
        self.log: list[dict] = []
        self.global_iter = 0
        self._warmed_up = False
        self._style_cursor = 0
        self._content_cache: dict[str, np.ndarray] = {}
        self._style_grams: dict[str, dict[str, np.ndarray]] = {}
        self._adam: dict[int, AdamState] = {}

    # -- data ---------------------------------------------------------------

    def _content_base(self, path: str) -> np.ndarray:
        img = self._content_cache.get(path)
        if img is None:
            img = load_image(path)
            self._content_cache[path] = img
        return img

    def _batch(self) -> np.ndarray:
        files = self.data.content_files
        idx = self.rng.integers(0, len(files), size=self.config.batch_size)
        crops = [_crop_content(self._content_base(files[i]), self.config.crop_size, self.rng)
                 for i in idx]
        return np.stack(crops).astype(np.float32)

    def _grams_for(self, name: str) -> dict[str, np.ndarray]:
        grams = self._style_grams.get(name)
        if grams is None:
            path = self.data.style_files[self.data.style_names.index(name)]
            img = preprocess_style(path, self.config.style_long_side)
            grams = target_grams(self.extractor, Tensor(img[None]))
            self._style_grams[name] = grams
        return grams

    # -- optimization -------------------------------------------------------

    def _step_params(self, params: list[tuple[str, Tensor]], lr: float) -> None:
        for _, p in params:
            state = self._adam.get(id(p))
            if state is None:
                state = AdamState.for_params([p])
                self._adam[id(p)] = state
            adam_step([p], [p.grad], state, lr)

    def _reconstruction_step(self) -> None:
        lr = lr_at(self.config, self.global_iter)
        with Tape():
            batch = Tensor(self._batch())
            loss = reconstruction_loss(self.model.reconstruct(batch), batch)
            backward(loss)
            self._step_params(self.model.autoencoder_parameters(), lr)
        self.log.append({"iter": self.global_iter, "branch": "reconstruction",
                         "style": None, "loss": loss.item()})
        self.global_iter += 1

    def _style_step(self, name: str) -> None:
        lr = lr_at(self.config, self.global_iter)
        layer = self.model.registry.get(name)
        with Tape():
            batch = Tensor(self._batch())
            w = layer.forward()
            out = self.model.stylize(batch, w)
            loss = stylizing_loss(self.extractor, out, batch, self._grams_for(name),
                                  self.config.loss_weights)
            backward(loss)
            params = self.model.autoencoder_parameters() + self.model.basis_parameters()
            if layer.learnable:
                params = params + [(layer.theta.name, layer.theta)]
            self._step_params(params, lr)
        self.log.append({"iter": self.global_iter, "branch": "style",
                         "style": name, "loss": loss.item()})
        self.global_iter += 1

    # -- phases ---------------------------------------------------------------

    def warmup_phase(self) -> list[dict]:
        """K autoencoder iterations, then one K-long segment per added style.

        Segment j trains the style set {s_1 .. s_j} round-robin; s_j is
        registered at the start of its segment.  Requires an empty registry.
        """
        if len(self.model.registry):
            raise ValueError("warmup_phase requires an empty style registry")
        cfg = self.config
        names = self.data.style_names
        if not names:
            warnings.warn("no style images; warming up the autoencoder only")
        planned = cfg.warmup_segment_iters * (len(names) + 1)
        if planned > cfg.total_iters:
            warnings.warn(f"warming-up needs {planned} iterations but total_iters is "
                          f"{cfg.total_iters}; the schedule will overshoot")
        start = len(self.log)
        for _ in range(cfg.warmup_segment_iters):
            self._reconstruction_step()
        for j, name in enumerate(names, start=1):
            ref = self.data.style_files[j - 1]
            if cfg.block_onehot:
                from .remix import block_onehot_weights
                fixed = block_onehot_weights(j - 1, len(names), cfg.model.basis_channels)
                self.model.add_style(name, ref_image=ref, learnable=False, weights=fixed)
            else:
                self.model.add_style(name, ref_image=ref)
            active = names[:j]
            for i in range(cfg.warmup_segment_iters):
                self._style_step(active[i % j])
        self._warmed_up = True
        return self.log[start:]

    def finetune_phase(self, iterations: int) -> list[dict]:
        """Repeating cycle of one reconstruction step and T style steps.

        Styles are drawn round-robin across cycles through a cursor that
        persists for the life of the trainer.
        """
        if not self._warmed_up:
            raise ValueError("finetune_phase requires a completed warming-up phase")
        cfg = self.config
        names = self.data.style_names
        start = len(self.log)
        cycle = cfg.style_rounds + 1
        for it in range(iterations):
            if it % cycle == 0 or not names:
                self._reconstruction_step()
            else:
                self._style_step(names[self._style_cursor % len(names)])
                self._style_cursor += 1
        return self.log[start:]

    def train(self) -> list[dict]:
        """Warming-up followed by finetuning up to ``total_iters``."""
        self.warmup_phase()
        remaining = self.config.total_iters - self.global_iter
        if remaining > 0:
            self.finetune_phase(remaining)
        return self.log


def scalability_sweep(base_config: TrainConfig, data: DatasetSpec, subset_sizes: list[int],
                      eval_content: np.ndarray,
                      extractor: FeatureExtractor | None = None) -> dict[int, dict[str, float]]:
    """Train once per style-subset size and measure per-style final losses.

    Each run uses the first ``m`` styles of ``data`` and the same seed and
    hyperparameters; afterwards the full stylizing loss is evaluated on
    ``eval_content`` for every style in the subset.  Returns
    {subset_size: {style_name: loss}}.
    """
    results: dict[int, dict[str, float]] = {}
    for m in subset_sizes:
        if m > len(data.style_files):
            raise ValueError(f"subset size {m} exceeds the {len(data.style_files)} styles available")
        sub = DatasetSpec(content_files=list(data.content_files),
                          style_files=list(data.style_files[:m]))
        model = MultiStyleModel(base_config.model, seed=base_config.seed)
        trainer = Trainer(model, sub, base_config, extractor=extractor)
        trainer.train()
        results[m] = evaluate_style_losses(model, trainer.extractor, eval_content,
                                           sub.style_names, trainer, base_config.loss_weights)
    return results


def evaluate_style_losses(model: MultiStyleModel, extractor: FeatureExtractor,
                          content: np.ndarray, style_names: list[str],
                          trainer: Trainer, weights: LossWeights) -> dict[str, float]:
    """Full stylizing-branch loss per style on one fixed content image."""
    from .autodiff import no_grad
    out: dict[str, float] = {}
    batch = Tensor(content[None] if content.ndim == 3 else content)
    with no_grad():
        for name in style_names:
            w = model.style_weights(name)
            stylized = model.stylize(batch, w)
            loss = stylizing_loss(extractor, stylized, batch, trainer._grams_for(name), weights)
            out[name] = loss.item()
    return out
