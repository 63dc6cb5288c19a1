"""Helpers shared by the demo scripts: a cached toy checkpoint and paths."""

import os

from stylemix.model import MultiStyleModel, load_checkpoint, save_checkpoint
from stylemix.toydata import write_toy_dataset
from stylemix.training import DatasetSpec, TrainConfig, Trainer, write_loss_log

OUTPUT_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "_output")


def output_path(*parts: str) -> str:
    path = os.path.join(OUTPUT_DIR, *parts)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def ensure_toy_checkpoint(name: str = "toy2", styles=("stripes_h", "checker"),
                          total_iters: int = 700, segment: int = 140, seed: int = 0):
    """Train (once) and cache a small desk-scale checkpoint for the demos.

    Roughly a minute of CPU on the first call; afterwards the checkpoint is
    loaded from demos/_output/<name>/.
    """
    ckpt_dir = output_path(name, "ckpt")
    if os.path.exists(os.path.join(ckpt_dir, "manifest.json")):
        return load_checkpoint(ckpt_dir), ckpt_dir
    data_root = output_path(name, "data")
    content_dir, style_dir = write_toy_dataset(data_root, n_content=5, styles=styles,
                                               size=64, seed=seed)
    cfg = TrainConfig(content_dir=content_dir, style_dir=style_dir, batch_size=1,
                      crop_size=64, style_long_side=64, total_iters=total_iters,
                      warmup_segment_iters=segment, seed=seed)
    model = MultiStyleModel(cfg.model, seed=cfg.seed)
    trainer = Trainer(model, DatasetSpec.from_dirs(content_dir, style_dir), cfg)
    print(f"training {name}: {len(styles)} styles, {total_iters} iterations ...")
    log = trainer.train()
    save_checkpoint(model, ckpt_dir)
    write_loss_log(os.path.join(ckpt_dir, "loss_log.jsonl"), log)
    print(f"saved checkpoint to {ckpt_dir}")
    return model, ckpt_dir
