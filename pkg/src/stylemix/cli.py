"""Command-line entry point: train, stylize, remix, embed, flops, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .archive import CheckpointError
from .autodiff import no_grad
from .images import ImageError, load_image, save_image
from .model import MultiStyleModel, load_checkpoint, save_checkpoint
from .remix import (
    convex_combination,
    correlation_matrix,
    cst_weights,
    embed_styles,
    flops_count,
    perturb_weights,
)
from .training import DatasetSpec, TrainConfig, Trainer, write_loss_log

__all__ = ["build_parser", "run", "main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stylemix",
                                     description="Multi-style transfer over a shared style basis")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the two-phase training and save a checkpoint")
    p_train.add_argument("--config", required=True, help="training config JSON")
    p_train.add_argument("--out", required=True, help="output checkpoint directory")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_sty = sub.add_parser("stylize", help="stylize one image with a registered style or raw weights")
    p_sty.add_argument("--ckpt", required=True)
    p_sty.add_argument("--in", dest="in_path", required=True, help="input PNG")
    p_sty.add_argument("--out", required=True, help="output PNG")
    group = p_sty.add_mutually_exclusive_group(required=True)
    group.add_argument("--style", help="registered style name")
    group.add_argument("--weights", help="comma-separated weight vector")

    p_remix = sub.add_parser("remix", help="stylize with combined, perturbed, or collection weights")
    p_remix.add_argument("--ckpt", required=True)
    p_remix.add_argument("--in", dest="in_path", required=True)
    p_remix.add_argument("--out", required=True)
    group = p_remix.add_mutually_exclusive_group(required=True)
    group.add_argument("--combine", metavar="A,B", help="two style names to interpolate")
    group.add_argument("--perturb", metavar="STYLE", help="style name to perturb with noise")
    group.add_argument("--cst", choices=("average", "uniform"), help="collection-transfer mode")
    group.add_argument("--weights", help="comma-separated raw weight vector")
    p_remix.add_argument("--alpha", type=float, default=0.5, help="combine: blend toward the first style")
    p_remix.add_argument("--mu", type=float, default=None, help="perturb: noise mean (default 1/channels)")
    p_remix.add_argument("--sigma", type=float, default=0.005, help="perturb: noise stddev")
    p_remix.add_argument("--seed", type=int, default=0, help="perturb: noise seed")

    p_embed = sub.add_parser("embed", help="correlation, PCA, and t-SNE over the style registry")
    p_embed.add_argument("--ckpt", required=True)
    p_embed.add_argument("--out", required=True, help="output directory for tables and PNGs")
    p_embed.add_argument("--seed", type=int, default=0)
    p_embed.add_argument("--perplexity", type=float, default=None)

    p_flops = sub.add_parser("flops", help="analytic multiply-add count of one stylizing pass")
    src = p_flops.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="training config JSON (model section is used)")
    src.add_argument("--ckpt", help="checkpoint directory")
    p_flops.add_argument("--size", type=int, default=None, help="input size (default: model image size)")

    p_serve = sub.add_parser("serve", help="HTTP inference service over a checkpoint")
    p_serve.add_argument("--ckpt", required=True)
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--max-inflight", type=int, default=2)
    p_serve.add_argument("--seed", type=int, default=0, help="embedding seed")
    p_serve.add_argument("--ui-dir", default=None, help="static assets directory (default: autodetect)")
    return parser


def _parse_weights(text: str, channels: int) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as e:
        raise ValueError(f"--weights must be comma-separated floats: {e}") from e
    if len(values) != channels:
        raise ValueError(f"--weights needs {channels} values, got {len(values)}")
    return np.asarray(values, dtype=np.float32)


def _stylize_to_file(model: MultiStyleModel, w: np.ndarray, in_path: str, out_path: str) -> None:
    img = load_image(in_path)
    if img.shape[1] % 4 or img.shape[2] % 4:
        raise ValueError(f"input image is {img.shape[1]}x{img.shape[2]}; dims must be divisible by 4")
    with no_grad():
        out = model.stylize(img[None], w)
    save_image(out.data[0], out_path)


def _cmd_train(args) -> int:
    config = TrainConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    data = DatasetSpec.from_dirs(config.content_dir, config.style_dir)
    model = MultiStyleModel(config.model, seed=config.seed)
    trainer = Trainer(model, data, config)
    log = trainer.train()
    save_checkpoint(model, args.out)
    write_loss_log(os.path.join(args.out, "loss_log.jsonl"), log)
    last = log[-1]["loss"] if log else float("nan")
    print(f"trained {len(log)} iterations over {len(data.style_files)} styles; "
          f"final loss {last:.4f}; checkpoint at {args.out}")
    return 0


def _cmd_stylize(args) -> int:
    model = load_checkpoint(args.ckpt)
    if args.style is not None:
        w = model.style_weights(args.style).data
    else:
        w = _parse_weights(args.weights, model.config.basis_channels)
    _stylize_to_file(model, w, args.in_path, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_remix(args) -> int:
    model = load_checkpoint(args.ckpt)
    c = model.config.basis_channels
    if args.combine is not None:
        names = [s.strip() for s in args.combine.split(",")]
        if len(names) != 2:
            raise ValueError("--combine expects exactly two style names, e.g. --combine a,b")
        w = convex_combination(model.style_weights(names[0]).data,
                               model.style_weights(names[1]).data, args.alpha)
    elif args.perturb is not None:
        base = model.style_weights(args.perturb).data
        mu = args.mu if args.mu is not None else 1.0 / c
        w = perturb_weights(base, mu=mu, sigma=args.sigma, seed=args.seed)
    elif args.cst is not None:
        w = cst_weights(model.registry, args.cst)
    else:
        w = _parse_weights(args.weights, c)
    _stylize_to_file(model, w, args.in_path, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_embed(args) -> int:
    from .plots import (
        render_correlation_png,
        render_embedding_png,
        write_correlation_table,
        write_embedding_table,
    )

    model = load_checkpoint(args.ckpt)
    os.makedirs(args.out, exist_ok=True)
    matrix, names = correlation_matrix(model.registry)
    write_correlation_table(matrix, names, os.path.join(args.out, "correlation.csv"))
    render_correlation_png(matrix, names, os.path.join(args.out, "correlation.png"))
    result = embed_styles(model, seed=args.seed, perplexity=args.perplexity)
    write_embedding_table(result.coords, result.names, os.path.join(args.out, "embedding.csv"))
    render_embedding_png(result.coords, result.names, os.path.join(args.out, "embedding.png"))
    meta = {"pca_dims": result.pca_dims, "perplexity": result.perplexity, "seed": result.seed,
            "initial_kl": result.initial_kl, "final_kl": result.final_kl}
    with open(os.path.join(args.out, "embedding_meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(f"wrote correlation and embedding tables/plots to {args.out} "
          f"(final KL {result.final_kl:.4f})")
    return 0


def _cmd_flops(args) -> int:
    if args.config:
        config = TrainConfig.load(args.config).model
    else:
        config = load_checkpoint(args.ckpt).config
    size = args.size if args.size is not None else config.image_size
    report = flops_count(config, size)
    for layer in report.layers:
        print(f"{layer['name']:>6}: {layer['c_in']:>4} -> {layer['c_out']:<4} "
              f"at {layer['out_h']}x{layer['out_w']:<5} {layer['macs']:>15,} MACs")
    print(f"total: {report.total_macs:,} MACs ({report.total_flops:,} FLOPs at 2 per MAC) "
          f"for one {size}x{size} stylizing pass")
    return 0


def _cmd_serve(args) -> int:
    from .service import create_app, find_ui_dir, serve

    model = load_checkpoint(args.ckpt)
    static_dir = args.ui_dir if args.ui_dir is not None else find_ui_dir()
    app = create_app(model, seed=args.seed, max_inflight=args.max_inflight, static_dir=static_dir)
    serve(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "stylize": _cmd_stylize,
    "remix": _cmd_remix,
    "embed": _cmd_embed,
    "flops": _cmd_flops,
    "serve": _cmd_serve,
}


def run(argv: list[str]) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError, CheckpointError, ImageError, RuntimeError) as e:
        print(f"stylemix {args.command}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
