import json
import os
from pathlib import Path

import numpy as np
import pytest

from jpgnet.cli import build_parser, kernel_mosaic, main, parse_args
from jpgnet.filtering import identity_kernel_field
from jpgnet.imageio import load_image, save_image

SNAPSHOT = Path(__file__).parent / "snapshots"
TINY = {"base_width": 2, "batch_size": 2, "stage1_iters": 2, "gen_iters": 2, "stage2_iters": 2,
        "mask_bank_size": 6, "log_every": 0}


def _help(command=None):
    parser = build_parser()
    if command is None:
        return parser.format_help()
    for action in parser._subparsers._group_actions:
        return action.choices[command].format_help()


@pytest.fixture(autouse=True)
def wide_terminal(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")


@pytest.mark.parametrize("command", [None, "make-data", "train", "infer", "eval", "viz-uncertainty"])
def test_help_snapshot(command):
    text = _help(command)
    path = SNAPSHOT / f"help_{command or 'main'}.txt"
    if os.environ.get("JPGNET_UPDATE_SNAPSHOTS"):
        path.parent.mkdir(exist_ok=True)
        path.write_text(text)
    assert path.exists(), f"no snapshot {path.name}; rerun with JPGNET_UPDATE_SNAPSHOTS=1"
    assert text == path.read_text()


@pytest.mark.parametrize("command", ["make-data", "train", "infer", "eval", "viz-uncertainty"])
def test_help_lists_defaults(command):
    text = _help(command)
    assert "--seed" in text and "(default: 0)" in text and "--config" in text


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["make-data", "--n", "6", "--size", "16", "--out", str(root / "ds"), "--seed", "3"]) == 0
    (root / "cfg.json").write_text(json.dumps(TINY))
    for stage in ("pfu", "gen", "uaf"):
        rc = main(["train", "--stage", stage, "--data", str(root / "ds"), "--cfg", str(root / "cfg.json"),
                   "--ckpt-dir", str(root / "ck")])
        assert rc == 0
    mask = np.zeros((16, 16))
    mask[5:9, 3:10] = 1
    save_image(root / "mask.png", mask)
    save_image(root / "empty.png", np.zeros((16, 16)))
    return root


class TestMakeData:
    def test_files_and_manifest(self, tmp_path):
        assert main(["make-data", "--n", "4", "--size", "8", "--out", str(tmp_path / "d")]) == 0
        assert len(list((tmp_path / "d").glob("*.png"))) == 4
        assert len((tmp_path / "d" / "manifest.txt").read_text().splitlines()) == 4

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            main(["make-data", "--n", "3", "--size", "8", "--out", str(tmp_path / name), "--seed", "5"])
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_n_zero_is_usage_error(self, tmp_path, capsys):
        assert main(["make-data", "--n", "0", "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("jpgnet: error:") and "\n" not in err

    def test_missing_out(self):
        assert main(["make-data"]) == 2


class TestTrain:
    def test_uaf_without_pfu(self, workspace, tmp_path, capsys):
        rc = main(["train", "--stage", "uaf", "--data", str(workspace / "ds"), "--ckpt-dir", str(tmp_path)])
        assert rc == 4
        assert "pfu" in capsys.readouterr().err

    def test_zero_iters_is_init_and_repeatable(self, workspace, tmp_path):
        outs = []
        for name in ("a", "b"):
            rc = main(["train", "--stage", "pfu", "--data", str(workspace / "ds"), "--cfg", str(workspace / "cfg.json"),
                       "--iters", "0", "--ckpt-dir", str(tmp_path / name)])
            assert rc == 0
            outs.append((tmp_path / name / "pfu.ckpt").read_bytes())
        assert outs[0] == outs[1]

    def test_same_seed_same_checkpoint(self, workspace, tmp_path):
        args = ["train", "--stage", "pfu", "--data", str(workspace / "ds"), "--cfg", str(workspace / "cfg.json")]
        main(args + ["--ckpt-dir", str(tmp_path / "x")])
        assert (tmp_path / "x" / "pfu.ckpt").read_bytes() == (workspace / "ck" / "pfu.ckpt").read_bytes()
        assert (tmp_path / "x" / "pfu_loss.csv").read_text().startswith("iteration,loss")

    def test_image_size_mismatch(self, workspace, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({**TINY, "image_size": 32}))
        rc = main(["train", "--stage", "pfu", "--data", str(workspace / "ds"), "--cfg", str(tmp_path / "c.json"),
                   "--ckpt-dir", str(tmp_path)])
        assert rc == 4

    def test_bad_cfg_key(self, workspace, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"lr": 1}))
        rc = main(["train", "--stage", "pfu", "--data", str(workspace / "ds"), "--cfg", str(tmp_path / "c.json")])
        assert rc == 4

    def test_missing_data(self, tmp_path):
        assert main(["train", "--stage", "pfu", "--data", str(tmp_path / "nope"), "--ckpt-dir", str(tmp_path)]) == 3


class TestInfer:
    def test_outputs(self, workspace, tmp_path):
        rc = main(["infer", "--img", str(workspace / "ds" / "img_0000.png"), "--mask", str(workspace / "mask.png"),
                   "--ckpt-dir", str(workspace / "ck"), "--out", str(tmp_path / "o.png")])
        assert rc == 0
        assert [p.name for p in tmp_path.iterdir()] == ["o.png"]
        assert load_image(tmp_path / "o.png").shape == (16, 16, 3)

    def test_intermediates(self, workspace, tmp_path):
        rc = main(["infer", "--img", str(workspace / "ds" / "img_0000.png"), "--mask", str(workspace / "mask.png"),
                   "--ckpt-dir", str(workspace / "ck"), "--out", str(tmp_path / "o.png"), "--emit-intermediates",
                   "--pixels", "6,6;0,0"])
        assert rc == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["o.png", "o_filter.png", "o_generator.png", "o_kernels.png", "o_uncertainty.png"]

    def test_deterministic(self, workspace, tmp_path):
        for name in ("a.png", "b.png"):
            main(["infer", "--img", str(workspace / "ds" / "img_0001.png"), "--mask", str(workspace / "mask.png"),
                  "--ckpt-dir", str(workspace / "ck"), "--out", str(tmp_path / name)])
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_missing_checkpoint(self, workspace, tmp_path):
        rc = main(["infer", "--img", str(workspace / "ds" / "img_0000.png"), "--mask", str(workspace / "mask.png"),
                   "--ckpt-dir", str(tmp_path), "--out", str(tmp_path / "o.png")])
        assert rc == 4

    def test_shape_mismatch(self, workspace, tmp_path):
        save_image(tmp_path / "big.png", np.zeros((32, 32, 3)))
        save_image(tmp_path / "bigm.png", np.zeros((32, 32)))
        rc = main(["infer", "--img", str(tmp_path / "big.png"), "--mask", str(tmp_path / "bigm.png"),
                   "--ckpt-dir", str(workspace / "ck"), "--out", str(tmp_path / "o.png")])
        assert rc == 4

    def test_bad_pixel(self, workspace, tmp_path):
        rc = main(["infer", "--img", str(workspace / "ds" / "img_0000.png"), "--mask", str(workspace / "mask.png"),
                   "--ckpt-dir", str(workspace / "ck"), "--out", str(tmp_path / "o.png"), "--emit-intermediates",
                   "--pixels", "99,0"])
        assert rc == 2


class TestEval:
    def test_single_bucket(self, workspace, tmp_path, capsys):
        rc = main(["eval", "--data", str(workspace / "ds"), "--ckpt-dir", str(workspace / "ck"),
                   "--buckets", "B20", "--report", str(tmp_path / "r.csv")])
        assert rc == 0
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert rows[0] == "method,bucket,psnr,ssim,n,n_inf"
        assert {r.split(",")[1] for r in rows[1:]} == {"B20"}
        assert [r.split(",")[0] for r in rows[1:]] == ["input", "filtering", "naive_fusion", "smart_fusion",
                                                       "generator"]

    def test_deterministic(self, workspace, tmp_path):
        for name in ("a.csv", "b.csv"):
            main(["eval", "--data", str(workspace / "ds"), "--ckpt-dir", str(workspace / "ck"),
                  "--masks-per-image", "2", "--report", str(tmp_path / name), "--seed", "4"])
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()

    def test_bad_bucket(self, workspace, tmp_path):
        assert main(["eval", "--data", str(workspace / "ds"), "--ckpt-dir", str(workspace / "ck"),
                     "--buckets", "B90"]) == 2

    def test_empty_dataset(self, workspace, tmp_path):
        (tmp_path / "manifest.txt").write_text("")
        rc = main(["eval", "--data", str(tmp_path), "--ckpt-dir", str(workspace / "ck"),
                   "--report", str(tmp_path / "r.csv")])
        assert rc == 4


class TestVizUncertainty:
    def _run(self, workspace, out, *extra):
        return main(["viz-uncertainty", "--img", str(workspace / "ds" / "img_0000.png"),
                     "--mask", str(workspace / "mask.png"), "--ckpt", str(workspace / "ck" / "pfu.ckpt"),
                     "--out", str(out), *extra])

    def test_default_is_avg(self, workspace, tmp_path):
        assert self._run(workspace, tmp_path) == 0
        assert [p.name for p in tmp_path.iterdir()] == ["uncertainty_avg.png"]

    def test_all_four(self, workspace, tmp_path):
        assert self._run(workspace, tmp_path, "--reducer", "all") == 0
        assert len(list(tmp_path.glob("*.png"))) == 4
        u = load_image(tmp_path / "uncertainty_max.png")
        assert u.shape == (16, 16, 1) and 0.0 <= u.min() and u.max() <= 1.0

    def test_bad_reducer(self, workspace, tmp_path):
        assert self._run(workspace, tmp_path, "--reducer", "median") == 4


class TestConfigMerge:
    def test_config_fills_defaults_and_flags_win(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n": 7, "size": 12, "out": "from_config"}))
        args = parse_args(["make-data", "--config", str(cfg), "--size", "20"])
        assert (args.n, args.size, args.out) == (7, 20, "from_config")

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["make-data", "--config", str(cfg)]) == 4

    def test_missing_config(self, tmp_path):
        assert main(["make-data", "--config", str(tmp_path / "none.json")]) == 3

    def test_unparsable_config(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        assert main(["make-data", "--config", str(tmp_path / "c.json")]) == 4


def test_no_command():
    assert main([]) == 2


def test_kernel_mosaic_identity():
    ker = identity_kernel_field(4, 4, 3, 3)
    mos = kernel_mosaic(ker, [(1, 1), (2, 3)], 3, scale=2)
    assert mos.shape == (6, 13)
    assert mos[2:4, 2:4].min() == 1.0 and mos[:2, :2].max() == 0.0
