import json

import numpy as np
import pytest

from lfdeocc import io_png
from lfdeocc.cli import main
from lfdeocc.lf_core import LightField
from lfdeocc.synthetic import bar_mask, plane_lightfield, random_texture, smooth_background


@pytest.fixture
def lf_dir(tmp_path):
    rng = np.random.default_rng(0)
    bg = smooth_background(rng, 48, 48)
    lf = LightField(np.broadcast_to(bg, (3, 3, 48, 48, 3)).copy())
    d = tmp_path / "lf"
    io_png.save_lightfield(lf, d)
    return d


@pytest.fixture
def mask_dir(tmp_path):
    d = tmp_path / "masks"
    d.mkdir()
    rng = np.random.default_rng(1)
    for i in range(2):
        m = bar_mask(rng, 24, 24)
        rgba = np.concatenate([m.rgb, m.alpha[:, :, None]], axis=2)
        io_png.save_image(d / f"mask{i}.png", rgba)
    return d


class TestImageIO:
    def test_png_round_trip_quantized(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.random((16, 16, 3)).astype(np.float32)
        p = tmp_path / "x.png"
        io_png.save_image(p, img)
        back = io_png.load_image(p)
        assert back.shape == (16, 16, 3)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6

    def test_gray_loads_single_channel(self, tmp_path):
        p = tmp_path / "g.png"
        io_png.save_image(p, np.zeros((8, 8)))
        assert io_png.load_image(p).shape == (8, 8, 1)

    def test_lightfield_round_trip(self, tmp_path, lf_dir):
        lf, manifest = io_png.load_lightfield(lf_dir)
        assert (lf.u, lf.v, lf.h, lf.w, lf.c) == (3, 3, 48, 48, 3)
        assert manifest["angular_rows"] == 3

    def test_missing_view_rejected(self, tmp_path, lf_dir):
        (lf_dir / "view_00_01.png").unlink()
        with pytest.raises(FileNotFoundError):
            io_png.load_lightfield(lf_dir)

    def test_mask_dir_rgba_and_pairs(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        rng = np.random.default_rng(3)
        m = bar_mask(rng, 16, 16)
        io_png.save_image(d / "a.png", np.concatenate([m.rgb, m.alpha[:, :, None]], axis=2))
        io_png.save_image(d / "b.png", m.rgb)
        io_png.save_image(d / "b_alpha.png", m.alpha)
        io_png.save_image(d / "noalpha.png", m.rgb)  # skipped: no alpha source
        masks = io_png.load_mask_dir(d)
        assert sorted(mk.id for mk in masks) == ["a", "b"]

    def test_empty_mask_dir_rejected(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        with pytest.raises(ValueError):
            io_png.load_mask_dir(d)


class TestSynthesizeCommand:
    def test_writes_samples_with_metadata(self, tmp_path, lf_dir, mask_dir):
        out = tmp_path / "out"
        rc = main(["synthesize", "--lf-dir", str(lf_dir), "--mask-dir", str(mask_dir),
                   "--out", str(out), "--count", "3", "--seed", "7"])
        assert rc == 0
        subs = io_png.list_sample_dirs(out)
        assert len(subs) == 3
        lf, gt, layers = io_png.load_sample(subs[0])
        assert gt.shape == (48, 48, 3)
        assert len(layers) == 1 and layers[0]["disparity"] > 0
        manifest = io_png.load_manifest(subs[0])
        assert 0 <= manifest["occlusion_rate"] <= 1

    def test_seed_replay_byte_identical(self, tmp_path, lf_dir, mask_dir):
        outs = []
        for sub in ("r1", "r2"):
            out = tmp_path / sub
            main(["synthesize", "--lf-dir", str(lf_dir), "--mask-dir", str(mask_dir),
                  "--out", str(out), "--count", "2", "--seed", "7"])
            blobs = b""
            for s in io_png.list_sample_dirs(out):
                import pathlib
                for p in sorted(pathlib.Path(s).glob("*.png")):
                    blobs += p.read_bytes()
            outs.append(blobs)
        assert outs[0] == outs[1]

    def test_seed_env_fallback(self, tmp_path, lf_dir, mask_dir, monkeypatch):
        monkeypatch.setenv("LFDEOCC_SEED", "7")
        out_env = tmp_path / "env"
        main(["synthesize", "--lf-dir", str(lf_dir), "--mask-dir", str(mask_dir),
              "--out", str(out_env), "--count", "1"])
        out_cli = tmp_path / "cli"
        main(["synthesize", "--lf-dir", str(lf_dir), "--mask-dir", str(mask_dir),
              "--out", str(out_cli), "--count", "1", "--seed", "7"])
        a = (out_env / "sample_00000" / "gt.png").read_bytes()
        b = (out_cli / "sample_00000" / "gt.png").read_bytes()
        assert a == b


class TestRefocusCommand:
    def test_sweep_finds_plane_disparity(self, tmp_path):
        tex = random_texture(np.random.default_rng(4), 64, 64, smooth=1.0)
        lf = plane_lightfield(tex, 3, 3, 2.0)
        d = tmp_path / "lf"
        io_png.save_lightfield(lf, d)
        out = tmp_path / "ref"
        rc = main(["refocus", "--lf-dir", str(d), "--sweep", "0:4:5",
                   "--method", "avg", "--out", str(out)])
        assert rc == 0
        table = json.loads((out / "sharpness.json").read_text())
        assert len(table) == 5
        best = max(table, key=lambda r: r["sharpness"])
        assert best["disparity"] == 2.0

    def test_single_disparity_median(self, tmp_path, lf_dir):
        out = tmp_path / "ref"
        rc = main(["refocus", "--lf-dir", str(lf_dir), "--disparity", "1.0",
                   "--method", "median", "--out", str(out)])
        assert rc == 0
        assert len(list(out.glob("*.png"))) == 1

    def test_missing_disparity_errors(self, tmp_path, lf_dir, capsys):
        rc = main(["refocus", "--lf-dir", str(lf_dir), "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestTrainInferEvaluate:
    def test_full_pipeline(self, tmp_path, lf_dir, mask_dir):
        data = tmp_path / "data"
        main(["synthesize", "--lf-dir", str(lf_dir), "--mask-dir", str(mask_dir),
              "--out", str(data), "--count", "2", "--seed", "1"])
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "network": {"base_depth": 4},
            "train": {"batch_size": 2, "patch": 32, "stride": 32, "epochs": 2},
        }))
        run = tmp_path / "run"
        rc = main(["train", "--data", str(data), "--config", str(cfg),
                   "--out", str(run), "--seed", "3"])
        assert rc == 0
        assert (run / "final.docn").exists()
        assert (run / "train_log.csv").exists()

        pred = tmp_path / "pred.png"
        rc = main(["infer", "--weights", str(run / "final.docn"),
                   "--lf-dir", str(io_png.list_sample_dirs(data)[0]),
                   "--out", str(pred)])
        assert rc == 0
        assert io_png.load_image(pred).shape == (48, 48, 3)

        row1 = tmp_path / "row1.json"
        rc = main(["evaluate", "--pred", str(pred),
                   "--gt", str(io_png.list_sample_dirs(data)[0] + "/gt.png"),
                   "--out", str(row1), "--scene", "s0"])
        assert rc == 0
        rep = tmp_path / "rep"
        rc = main(["report", "--rows", str(row1), str(row1), "--out", str(rep)])
        assert rc == 0
        table = json.loads((rep / "").with_name("rep.json").read_text())
        assert table["average"]["scene"] == "Average"

    def test_zero_epochs_writes_init(self, tmp_path, lf_dir, mask_dir):
        data = tmp_path / "data"
        main(["synthesize", "--lf-dir", str(lf_dir), "--mask-dir", str(mask_dir),
              "--out", str(data), "--count", "1", "--seed", "1"])
        run = tmp_path / "run0"
        rc = main(["train", "--data", str(data), "--out", str(run), "--epochs", "0"])
        assert rc == 0
        assert (run / "final.docn").exists()

    def test_evaluate_perfect_prediction(self, tmp_path):
        img = np.random.default_rng(5).random((32, 32, 3))
        p = tmp_path / "img.png"
        io_png.save_image(p, img)
        out = tmp_path / "row.json"
        rc = main(["evaluate", "--pred", str(p), "--gt", str(p), "--out", str(out)])
        assert rc == 0
        row = json.loads(out.read_text())
        assert row["l1"] == 0.0 and row["psnr"] == 99.0 and abs(row["ssim"] - 1.0) < 1e-9

    def test_infer_crops_indivisible_sizes(self, tmp_path, mask_dir):
        rng = np.random.default_rng(6)
        bg = smooth_background(rng, 50, 50)  # not a multiple of 16
        lf = LightField(np.broadcast_to(bg, (5, 5, 50, 50, 3)).copy())
        d = tmp_path / "lf5"
        io_png.save_lightfield(lf, d)
        from lfdeocc.model import NetworkConfig, build, save_weights
        w = tmp_path / "w.docn"
        save_weights(build(NetworkConfig(base_depth=4), seed=0), w)
        pred = tmp_path / "p.png"
        rc = main(["infer", "--weights", str(w), "--lf-dir", str(d), "--out", str(pred)])
        assert rc == 0
        assert io_png.load_image(pred).shape == (48, 48, 3)


class TestErrorHandling:
    def test_error_json_written(self, tmp_path):
        err = tmp_path / "err.json"
        rc = main(["--error-json", str(err),
                   "refocus", "--lf-dir", str(tmp_path / "missing"),
                   "--disparity", "1.0", "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error" in json.loads(err.read_text())

    def test_unknown_command_exits(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
