"""End-to-end CLI pipeline on a tiny config plus per-command contracts."""

import json
import os

import numpy as np
import pytest

from stylemix.cli import run
from stylemix.images import load_image, save_image
from stylemix.model import ModelConfig, MultiStyleModel, save_checkpoint
from stylemix.remix import flops_count
from stylemix.toydata import content_image, write_toy_dataset
from stylemix.training import TrainConfig


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A trained tiny checkpoint plus a config and a test image."""
    root = tmp_path_factory.mktemp("cli")
    content_dir, style_dir = write_toy_dataset(str(root), n_content=3, size=16,
                                               styles=("stripes_h", "checker"))
    cfg = TrainConfig(content_dir=content_dir, style_dir=style_dir,
                      model=ModelConfig(enc_channels=(8, 8, 8), basis_channels=8, image_size=16),
                      batch_size=1, crop_size=16, style_long_side=16,
                      total_iters=10, warmup_segment_iters=2, seed=0)
    cfg_path = str(root / "config.json")
    cfg.save(cfg_path)
    ckpt = str(root / "ckpt")
    assert run(["train", "--config", cfg_path, "--out", ckpt]) == 0
    img_path = str(root / "input.png")
    save_image(content_image(np.random.default_rng(5), 16), img_path)
    return {"root": root, "cfg_path": cfg_path, "ckpt": ckpt, "img": img_path}


class TestTrainAndStylize:
    def test_train_wrote_checkpoint_and_log(self, workspace):
        assert os.path.exists(os.path.join(workspace["ckpt"], "manifest.json"))
        assert os.path.exists(os.path.join(workspace["ckpt"], "weights.bin"))
        log_path = os.path.join(workspace["ckpt"], "loss_log.jsonl")
        lines = [json.loads(l) for l in open(log_path)]
        assert len(lines) == 10

    def test_stylize_preserves_dims(self, workspace, tmp_path):
        out = str(tmp_path / "styled.png")
        code = run(["stylize", "--ckpt", workspace["ckpt"], "--style", "checker",
                    "--in", workspace["img"], "--out", out])
        assert code == 0
        assert load_image(out).shape == load_image(workspace["img"]).shape

    def test_stylize_with_raw_weights(self, workspace, tmp_path):
        out = str(tmp_path / "raw.png")
        weights = ",".join(["0.125"] * 8)
        assert run(["stylize", "--ckpt", workspace["ckpt"], "--weights", weights,
                    "--in", workspace["img"], "--out", out]) == 0
        assert os.path.exists(out)

    def test_unknown_style_fails_with_message(self, workspace, tmp_path, capsys):
        out = str(tmp_path / "nope.png")
        code = run(["stylize", "--ckpt", workspace["ckpt"], "--style", "nope",
                    "--in", workspace["img"], "--out", out])
        assert code == 1
        assert "unknown style" in capsys.readouterr().err

    def test_bad_flags_rejected(self, workspace):
        assert run(["stylize", "--ckpt", workspace["ckpt"], "--bogus", "x"]) != 0

    def test_unknown_command_rejected(self):
        assert run(["transmogrify"]) != 0


class TestRemix:
    def test_combine_differs_from_both_endpoints(self, workspace, tmp_path):
        mid = str(tmp_path / "mid.png")
        a = str(tmp_path / "a.png")
        b = str(tmp_path / "b.png")
        ck, img = workspace["ckpt"], workspace["img"]
        assert run(["remix", "--ckpt", ck, "--combine", "checker,stripes_h", "--alpha", "0.5",
                    "--in", img, "--out", mid]) == 0
        assert run(["stylize", "--ckpt", ck, "--style", "checker", "--in", img, "--out", a]) == 0
        assert run(["stylize", "--ckpt", ck, "--style", "stripes_h", "--in", img, "--out", b]) == 0
        mid_px = load_image(mid)
        assert not np.array_equal(mid_px, load_image(a))
        assert not np.array_equal(mid_px, load_image(b))

    def test_combine_alpha_one_matches_endpoint(self, workspace, tmp_path):
        alpha1 = str(tmp_path / "alpha1.png")
        pure = str(tmp_path / "pure.png")
        ck, img = workspace["ckpt"], workspace["img"]
        assert run(["remix", "--ckpt", ck, "--combine", "checker,stripes_h", "--alpha", "1.0",
                    "--in", img, "--out", alpha1]) == 0
        assert run(["stylize", "--ckpt", ck, "--style", "checker", "--in", img, "--out", pure]) == 0
        assert open(alpha1, "rb").read() == open(pure, "rb").read()

    def test_perturb_deterministic_per_seed(self, workspace, tmp_path):
        out1 = str(tmp_path / "p1.png")
        out2 = str(tmp_path / "p2.png")
        ck, img = workspace["ckpt"], workspace["img"]
        for out in (out1, out2):
            assert run(["remix", "--ckpt", ck, "--perturb", "checker", "--sigma", "0.01",
                        "--seed", "11", "--in", img, "--out", out]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_cst_modes(self, workspace, tmp_path):
        ck, img = workspace["ckpt"], workspace["img"]
        for mode in ("average", "uniform"):
            out = str(tmp_path / f"cst_{mode}.png")
            assert run(["remix", "--ckpt", ck, "--cst", mode, "--in", img, "--out", out]) == 0
            assert os.path.exists(out)


class TestEmbedAndFlops:
    def test_embed_writes_tables_and_plots(self, tmp_path):
        model = MultiStyleModel(ModelConfig(enc_channels=(8, 8, 8), basis_channels=8,
                                            image_size=16), seed=0)
        rng = np.random.default_rng(0)
        for i in range(4):
            layer = model.add_style(f"s{i}")
            layer.theta.data[:] = rng.normal(size=8).astype(np.float32)
        ckpt = str(tmp_path / "ckpt4")
        save_checkpoint(model, ckpt)
        out_dir = str(tmp_path / "analysis")
        assert run(["embed", "--ckpt", ckpt, "--out", out_dir, "--seed", "3"]) == 0
        for name in ("correlation.csv", "correlation.png", "embedding.csv",
                     "embedding.png", "embedding_meta.json"):
            assert os.path.exists(os.path.join(out_dir, name)), name
        meta = json.load(open(os.path.join(out_dir, "embedding_meta.json")))
        assert meta["final_kl"] < meta["initial_kl"]

    def test_embed_needs_three_styles(self, workspace, tmp_path, capsys):
        code = run(["embed", "--ckpt", workspace["ckpt"], "--out", str(tmp_path / "x")])
        assert code == 1
        assert "at least 3" in capsys.readouterr().err

    def test_flops_matches_library_count(self, workspace, capsys):
        assert run(["flops", "--config", workspace["cfg_path"], "--size", "64"]) == 0
        printed = capsys.readouterr().out
        cfg = TrainConfig.load(workspace["cfg_path"]).model
        expected = flops_count(cfg, 64).total_macs
        assert f"{expected:,} MACs" in printed

    def test_flops_from_checkpoint(self, workspace, capsys):
        assert run(["flops", "--ckpt", workspace["ckpt"]]) == 0
        assert "MACs" in capsys.readouterr().out


class TestDeterminism:
    def test_train_is_reproducible_byte_for_byte(self, workspace, tmp_path):
        ck1 = str(tmp_path / "ck1")
        ck2 = str(tmp_path / "ck2")
        for ck in (ck1, ck2):
            assert run(["train", "--config", workspace["cfg_path"], "--out", ck]) == 0
        for name in ("weights.bin", "manifest.json", "loss_log.jsonl"):
            a = open(os.path.join(ck1, name), "rb").read()
            b = open(os.path.join(ck2, name), "rb").read()
            assert a == b, name

    def test_stylize_reproducible(self, workspace, tmp_path):
        outs = []
        for i in range(2):
            out = str(tmp_path / f"rep{i}.png")
            assert run(["stylize", "--ckpt", workspace["ckpt"], "--style", "checker",
                        "--in", workspace["img"], "--out", out]) == 0
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]
