"""stylemix: multi-style image transfer over a shared convolutional style basis.

A single bank of convolution kernels (the style basis) is shared by every
style; each style is a simplex-constrained weight vector over the basis's
input-channel slices.  The package bundles a tape-based autodiff engine,
the network and its perceptual losses, the two-phase trainer, style
remixing and embedding analysis, a CLI, and an HTTP inference service.
"""

from .autodiff import Tensor, Tape, backward, grad_check, no_grad
from .nnops import (
    AdamState,
    ConvKernel,
    adam_step,
    conv2d,
    instance_norm,
    relu,
    softmax_vec,
    upsample_conv2d,
)
from .model import (
    ModelConfig,
    MultiStyleModel,
    StyleBasis,
    StyleRegistry,
    StyleWeightsLayer,
    apply_style,
    load_checkpoint,
    save_checkpoint,
    weighted_basis,
)
from .perceptual import (
    FeatureExtractor,
    LossWeights,
    content_loss,
    extract_features,
    gram_matrix,
    perceptual_loss,
    reconstruction_loss,
    style_loss,
)
from .training import (
    DatasetSpec,
    TrainConfig,
    Trainer,
    lr_at,
    preprocess_content,
    preprocess_style,
    scalability_sweep,
)
from .remix import (
    EmbeddingResult,
    FlopsReport,
    block_onehot_weights,
    convex_combination,
    correlation_matrix,
    cst_weights,
    embed_styles,
    flops_count,
    pca_reduce,
    perturb_weights,
    tsne_embed,
)

__version__ = "0.1.0"
