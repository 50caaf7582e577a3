"""Command-line entry point: ``jpgnet <command> [flags]``.

Every command accepts ``--config FILE``: a flat JSON object whose keys are
the command's flag names (dashes or underscores). Explicit flags win.
Exit codes: 0 ok, 2 usage, 3 I/O, 4 shape/config, 5 numeric.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .autograd import Tensor, no_grad
from .checkpoint import load_checkpoint
from .data import corrupt_batch, load_dataset, toy_dataset, write_dataset
from .errors import ConfigError, IOFormatError, JPGNetError, PrerequisiteError, ShapeError, UsageError
from .filtering import REDUCERS, compute_uncertainty_map
from .imageio import from_batch, load_image, save_image, to_batch
from .masks import BUCKETS, generate_irregular_mask
from .metrics import evaluate
from .networks import UNet, UNetConfig, build_unet, pfunet_forward
from .pipeline import Pipeline, diffusion_generator
from .training import TrainConfig, build_networks, save_net, train_generator, train_stage1, train_stage2, write_loss_csv

log = logging.getLogger("jpgnet")

STAGES = ("pfu", "gen", "uaf")
_ITER_KEY = {"pfu": "stage1_iters", "gen": "gen_iters", "uaf": "stage2_iters"}
_STAGE_TAG = {"pfu": 1, "gen": 2, "uaf": 3}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message} (see {self.prog} --help)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="jpgnet", description="Predictive filtering plus generative inpainting at desk scale.",
                formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        sp.add_argument("--config", default=None, help="JSON file of flag values; explicit flags win")
        sp.add_argument("--seed", type=int, default=0, help="random seed")
        return sp

    sp = add("make-data", "write a procedural toy dataset and its manifest")
    sp.add_argument("--n", type=int, default=100, help="number of images")
    sp.add_argument("--size", type=int, default=64, help="image side in pixels")
    sp.add_argument("--out", default=None, help="output directory (required)")
    sp.add_argument("--format", choices=("png", "ppm"), default="png", help="image file format")

    sp = add("train", "train one stage and write <ckpt-dir>/<stage>.ckpt plus a loss CSV")
    sp.add_argument("--stage", choices=STAGES, default=None, help="stage to train (required)")
    sp.add_argument("--data", default=None, help="dataset directory with manifest.txt (required)")
    sp.add_argument("--cfg", default=None, help="training config JSON (TrainConfig fields)")
    sp.add_argument("--ckpt-dir", "--out", dest="ckpt_dir", default="checkpoints", help="checkpoint directory")
    sp.add_argument("--iters", type=int, default=None, help="override the stage's iteration count")
    sp.add_argument("--generator", choices=("toy", "classical"), default="toy",
                    help="generator branch used by stage uaf")

    sp = add("infer", "restore one image with the trained pipeline")
    sp.add_argument("--img", default=None, help="input image (required)")
    sp.add_argument("--mask", default=None, help="mask image, nonzero = missing (required)")
    sp.add_argument("--ckpt-dir", dest="ckpt_dir", default="checkpoints", help="checkpoint directory")
    sp.add_argument("--out", default=None, help="output image path (required)")
    sp.add_argument("--emit-intermediates", action="store_true",
                    help="also write filtering, generator, uncertainty and kernel mosaic images")
    sp.add_argument("--pixels", default=None, help="kernel mosaic pixels as 'y,x;y,x' (default: image centre)")
    sp.add_argument("--generator", choices=("toy", "classical"), default="toy", help="generator branch")

    sp = add("eval", "score every method per hole-ratio bucket and write a CSV report")
    sp.add_argument("--data", default=None, help="dataset directory with manifest.txt (required)")
    sp.add_argument("--masks-per-image", type=int, default=1, help="masks drawn per image")
    sp.add_argument("--buckets", default=",".join(BUCKETS), help="comma-separated buckets")
    sp.add_argument("--ckpt-dir", dest="ckpt_dir", default="checkpoints", help="checkpoint directory")
    sp.add_argument("--report", default="report.csv", help="CSV report path")
    sp.add_argument("--generator", choices=("toy", "classical"), default="toy", help="generator branch")

    sp = add("viz-uncertainty", "render uncertainty maps from a kernel-network checkpoint")
    sp.add_argument("--img", default=None, help="input image (required)")
    sp.add_argument("--mask", default=None, help="mask image, nonzero = missing (required)")
    sp.add_argument("--ckpt", default=None, help="pfu checkpoint file (required)")
    sp.add_argument("--reducer", action="append", default=None,
                    help=f"one of {', '.join(REDUCERS)} or 'all'; repeatable (default: avg)")
    sp.add_argument("--out", default="uncertainty", help="output directory")
    return p


# -- argument plumbing --------------------------------------------------------


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command}")


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("no command given; see jpgnet --help")
    if args.config:
        sp = _subparser(parser, args.command)
        dests = {a.dest for a in sp._actions} - {"help", "config"}
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise IOFormatError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {args.config} must be a JSON object")
        values = {k.replace("-", "_"): v for k, v in raw.items()}
        unknown = sorted(set(values) - dests)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {unknown}")
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    for name in names:
        if getattr(args, name) in (None, ""):
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")


# -- helpers ------------------------------------------------------------------


def load_net(path, stage: str) -> UNet:
    """Rebuild a network from a checkpoint written by ``train``."""
    path = Path(path)
    if not path.is_file():
        raise PrerequisiteError(f"missing checkpoint for stage {stage}: {path}")
    ckpt = load_checkpoint(path)
    try:
        cfg = UNetConfig(**ckpt.meta["net_config"])
    except (KeyError, TypeError) as exc:
        raise IOFormatError(f"checkpoint {path} lacks a usable network config") from exc
    net = build_unet(cfg)
    state = ckpt.subset(stage)
    try:
        net.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise ShapeError(f"checkpoint {path} does not match its config: {exc}") from exc
    return net.eval()


def _generator(args, ckpt_dir: Path):
    if args.generator == "classical":
        return diffusion_generator()
    return load_net(ckpt_dir / "gen.ckpt", "gen")


def _read_pair(img_path, mask_path) -> tuple[np.ndarray, np.ndarray]:
    img = load_image(img_path)
    mask = load_image(mask_path)
    if mask.shape[:2] != img.shape[:2]:
        raise ShapeError(f"mask {mask.shape[:2]} does not match image {img.shape[:2]}")
    return img, (mask.max(axis=2) > 0).astype(np.float64)


def _check_input(net: UNet, img: np.ndarray, what: str) -> None:
    size = net.cfg.input_size
    if img.shape[:2] != (size, size):
        raise ShapeError(f"{what} is {img.shape[0]}x{img.shape[1]} but the checkpoint expects {size}x{size}")
    if img.shape[2] != net.cfg.in_channels:
        raise ShapeError(f"{what} has {img.shape[2]} channels, checkpoint expects {net.cfg.in_channels}")


def kernel_mosaic(kernels: np.ndarray, pixels, k: int, scale: int = 8) -> np.ndarray:
    """Channel-averaged K x K kernels at ``pixels`` side by side, each tile
    min-max stretched and enlarged ``scale`` times, 1-pixel gaps."""
    _, ck2, _, _ = kernels.shape
    c = ck2 // (k * k)
    tile = k * scale
    out = np.zeros((tile, len(pixels) * (tile + 1) - 1))
    for i, (y, x) in enumerate(pixels):
        w = kernels[0, :, y, x].reshape(c, k, k).mean(axis=0)
        lo, hi = w.min(), w.max()
        w = (w - lo) / (hi - lo) if hi > lo else np.zeros_like(w)
        out[:, i * (tile + 1):i * (tile + 1) + tile] = np.kron(w, np.ones((scale, scale)))
    return out


def _parse_pixels(spec, h, w):
    if not spec:
        return [(h // 2, w // 2)]
    pts = []
    for part in spec.split(";"):
        try:
            y, x = (int(v) for v in part.split(","))
        except ValueError as exc:
            raise UsageError(f"bad pixel {part!r}; expected 'y,x'") from exc
        if not (0 <= y < h and 0 <= x < w):
            raise UsageError(f"pixel {y},{x} is outside the {h}x{w} image")
        pts.append((y, x))
    return pts


# -- commands -----------------------------------------------------------------


def cmd_make_data(args) -> int:
    _require(args, "out")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.size < 1:
        raise UsageError("--size must be >= 1")
    images = toy_dataset(args.n, args.size, args.seed)
    paths = write_dataset(args.out, images, "." + args.format)
    print(f"wrote {len(paths)} images to {args.out}")
    return 0


def cmd_train(args) -> int:
    _require(args, "stage", "data")
    fields = {}
    if args.cfg:
        try:
            fields = json.loads(Path(args.cfg).read_text())
        except OSError as exc:
            raise IOFormatError(f"cannot read training config {args.cfg}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"training config {args.cfg} is not valid JSON: {exc}") from exc
    cfg = TrainConfig.from_dict(fields)
    # a non-default --seed beats the training config's seed
    if args.seed != 0 or "seed" not in fields:
        cfg.seed = args.seed
    if args.iters is not None:
        setattr(cfg, _ITER_KEY[args.stage], args.iters)
    ckpt_dir = Path(args.ckpt_dir)
    gen = None
    if args.stage == "uaf":
        # check prerequisites before touching the dataset
        pfu = load_net(ckpt_dir / "pfu.ckpt", "pfu").freeze()
        gen = _generator(args, ckpt_dir)
        if isinstance(gen, UNet):
            gen.freeze()
    data = load_dataset(args.data)
    size = data.shape[2]
    if "image_size" in fields and cfg.image_size != size:
        raise ShapeError(f"training config image_size {cfg.image_size} but dataset images are {size}x{size}")
    cfg.image_size = size
    cfg.validate()
    nets = build_networks(cfg, channels=data.shape[1])
    net = nets[args.stage]
    if args.stage == "pfu":
        losses = train_stage1(net, data, cfg)
    elif args.stage == "gen":
        losses = train_generator(net, data, cfg)
    else:
        if pfu.cfg.input_size != size:
            raise ShapeError(f"pfu checkpoint expects {pfu.cfg.input_size}px images, dataset has {size}px")
        losses = train_stage2(net, pfu, gen, data, cfg)
    rng = {"seed": cfg.seed, "stage_tag": _STAGE_TAG[args.stage], "iterations": len(losses),
           "batch_rng": "default_rng([seed, stage_tag, iteration])"}
    path = save_net(ckpt_dir / f"{args.stage}.ckpt", net, cfg, args.stage, {"rng": rng})
    write_loss_csv(ckpt_dir / f"{args.stage}_loss.csv", losses)
    final = f", final loss {losses[-1]:.5f}" if losses else ""
    print(f"stage {args.stage}: {len(losses)} iterations{final}; wrote {path}")
    return 0


def cmd_infer(args) -> int:
    _require(args, "img", "mask", "out")
    ckpt_dir = Path(args.ckpt_dir)
    pfu = load_net(ckpt_dir / "pfu.ckpt", "pfu")
    gen = _generator(args, ckpt_dir)
    uaf = load_net(ckpt_dir / "uaf.ckpt", "uaf")
    img, mask = _read_pair(args.img, args.mask)
    _check_input(pfu, img, "input image")
    x, m = to_batch(img), mask[None]
    outs = Pipeline(pfu, gen, uaf).eval().infer(corrupt_batch(x, m), m)
    out = Path(args.out)
    save_image(out, from_batch(np.clip(outs["smart_fusion"], 0, 1)))
    written = [out]
    if args.emit_intermediates:
        stem, ext = out.with_suffix(""), out.suffix or ".png"
        pixels = _parse_pixels(args.pixels, img.shape[0], img.shape[1])
        k = int(round(np.sqrt(outs["kernels"].shape[1] // img.shape[2])))
        extra = {
            "filter": from_batch(np.clip(outs["filtering"], 0, 1)),
            "generator": from_batch(np.clip(outs["generator"], 0, 1)),
            "uncertainty": outs["uncertainty"][0, 0],
            "kernels": kernel_mosaic(outs["kernels"], pixels, k),
        }
        for name, arr in extra.items():
            ext_ = ".pgm" if arr.ndim == 2 and ext.lower() == ".ppm" else ext
            written.append(save_image(Path(f"{stem}_{name}{ext_}"), arr))
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_eval(args) -> int:
    _require(args, "data")
    if args.masks_per_image < 1:
        raise UsageError("--masks-per-image must be >= 1")
    buckets = [b.strip() for b in args.buckets.split(",") if b.strip()]
    bad = [b for b in buckets if b not in BUCKETS]
    if not buckets or bad:
        raise UsageError(f"--buckets must be drawn from {', '.join(BUCKETS)}; got {args.buckets!r}")
    ckpt_dir = Path(args.ckpt_dir)
    pfu = load_net(ckpt_dir / "pfu.ckpt", "pfu")
    gen = _generator(args, ckpt_dir)
    uaf = load_net(ckpt_dir / "uaf.ckpt", "uaf")
    data = load_dataset(args.data)
    _check_input(pfu, from_batch(data), "dataset image")
    rng = np.random.default_rng(args.seed)
    size = data.shape[2]
    images, masks = [], []
    for i, img in enumerate(data):
        for j in range(args.masks_per_image):
            bucket = buckets[(i * args.masks_per_image + j) % len(buckets)]
            images.append(img)
            masks.append(generate_irregular_mask(size, size, bucket, rng).data)
    report = evaluate(Pipeline(pfu, gen, uaf).eval().run, np.stack(images), np.stack(masks), buckets)
    path = Path(args.report)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.to_csv())
    except OSError as exc:
        raise IOFormatError(f"cannot write report {path}: {exc}") from exc
    print(report.to_table())
    print(f"wrote {path}")
    return 0


def cmd_viz_uncertainty(args) -> int:
    _require(args, "img", "mask", "ckpt")
    names = args.reducer or ["avg"]
    if isinstance(names, str):
        names = [names]
    if "all" in names:
        names = list(REDUCERS)
    bad = [r for r in names if r not in REDUCERS]
    if bad:
        raise ConfigError(f"unknown reducer {bad[0]!r}; choose from {', '.join(REDUCERS)} or all")
    pfu = load_net(args.ckpt, "pfu")
    img, mask = _read_pair(args.img, args.mask)
    _check_input(pfu, img, "input image")
    with no_grad():
        _, kernels, _ = pfunet_forward(pfu, Tensor(corrupt_batch(to_batch(img), mask[None])))
    out = Path(args.out)
    for name in dict.fromkeys(names):
        u = compute_uncertainty_map(kernels.data, name).data[0, 0]
        print(f"wrote {save_image(out / f'uncertainty_{name}.png', u)}")
    return 0


COMMANDS = {
    "make-data": cmd_make_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "viz-uncertainty": cmd_viz_uncertainty,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        return COMMANDS[args.command](args)
    except JPGNetError as exc:
        print(f"jpgnet: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"jpgnet: error: {exc}", file=sys.stderr)
        return IOFormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
