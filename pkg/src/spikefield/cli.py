"""``spikefield`` command line: simulate, calibrate, reconstruct, train, render, eval, demo.

Exit status is 0 on success, 1 on a usage error and 2 when a command fails at
run time (missing file, malformed input, non-finite loss, ...).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SpikeFieldError

log = logging.getLogger("spikefield")

# desk-scale training: nine of these fit in ten minutes on one core
DESK_CONFIG = dict(iterations=700, batch_rays=128, n_coarse=16, n_fine=16, width=64, m_pos=6, density_bias=-4.0,
                   lr_start=5e-3, lr_end=2e-4)
DESK_FAST = dict(DESK_CONFIG, iterations=150)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------------------
# image helpers
# ---------------------------------------------------------------------------

def save_png(path, image, scale: float):
    """Write ``image * scale`` clipped to 0..255 as an 8-bit grayscale PNG."""
    from PIL import Image

    data = np.clip(np.rint(np.asarray(image, dtype=np.float64) * scale), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(os.fspath(path), format="PNG")


def load_image(path) -> np.ndarray:
    """Grayscale image as float in [0, 1] (PGM/PNG/anything Pillow reads)."""
    from PIL import Image

    with Image.open(os.fspath(path)) as im:
        arr = np.asarray(im.convert("I;16") if im.mode.startswith("I") else im.convert("L"), dtype=np.float64)
        top = 65535.0 if im.mode.startswith("I") else 255.0
    return arr / top


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    from .scenegen import builtin_scene, make_pose_ring, render_ground_truth
    from .sim import NonuniformityMap, SpikeCameraModel, simulate_stream
    from .stream import read_spm, write_spk

    if os.path.exists(args.scene):
        frame = load_image(args.scene) * args.theta
    else:
        try:
            scene = builtin_scene(args.scene, args.exposure)
        except KeyError as exc:
            raise SpikeFieldError(f"no scene file or builtin scene named {args.scene!r}") from exc
        cam = make_pose_ring(args.views, 4.0, 30.0, width=args.size, height=args.size)[args.view]
        frame = render_ground_truth(scene, cam)[0]
    h, w = frame.shape
    if args.nonuniformity is None:
        nonuni = NonuniformityMap.uniform(h, w)
    elif os.path.exists(args.nonuniformity):
        nonuni = NonuniformityMap(read_spm(args.nonuniformity))
    else:
        nonuni = NonuniformityMap.random(h, w, float(args.nonuniformity), seed=args.seed)
    model = SpikeCameraModel(args.theta, np.full((h, w), args.dark), nonuni,
                             shot_noise=args.shot_noise, photon_scale=args.photon_scale)
    stream = simulate_stream(frame, model, args.steps, seed=args.seed)
    n = write_spk(stream, args.out)
    log.info("wrote %s (%d bytes, %dx%dx%d)", args.out, n, w, h, args.steps)


def cmd_calibrate(args):
    from .sim import calibrate
    from .stream import read_spk, write_spm

    rec = calibrate(read_spk(args.dark), read_spk(args.lit1), args.l1, read_spk(args.lit2), args.l2,
                    literal=args.literal_eq7)
    write_spm(rec.ld_map, args.out_ld)
    write_spm(rec.nonuniformity.r, args.out_r)
    print(f"theta_ref = {rec.theta_ref:.6g}")
    print(f"reference_pixel = {rec.nonuniformity.reference[0]},{rec.nonuniformity.reference[1]}")
    print(f"mean_dark = {float(rec.ld_map.mean()):.6g}")


def cmd_reconstruct(args):
    from .recon import long_term_rate, tfi, tfp
    from .stream import read_spk

    stream = read_spk(args.input)
    t = stream.steps // 2 if args.t is None else args.t
    if args.method == "tfi":
        img = tfi(stream, t, args.theta)
    elif args.method == "tfp":
        img = tfp(stream, t, args.window, args.theta)
    else:
        img = long_term_rate(stream, args.theta)
    scale = 255.0 / args.theta if args.scale is None else args.scale
    save_png(args.out, img, scale)


def _train_config(path):
    from .trainer import TrainConfig, parse_config

    if path is None:
        return TrainConfig()
    return parse_config(Path(path).read_text())


def cmd_train(args):
    from .field import save_checkpoint
    from .scenegen import load_dataset
    from .trainer import train

    cfg = _train_config(args.config)
    if args.seed_given:
        cfg = cfg.with_(seed=args.seed)
    ds = load_dataset(args.data)

    def progress(i, loss):
        if i % 100 == 0 or i == cfg.iterations:
            log.info("iter %d loss %.6g", i, loss)

    coarse, fine, tlog = train(ds, cfg, progress)
    save_checkpoint(args.out, [coarse, fine])
    if args.log:
        with open(args.log, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "loss", "lr"])
            for row in zip(tlog.iteration, tlog.loss, tlog.lr):
                wr.writerow([row[0], repr(row[1]), repr(row[2])])


def _load_nets(path):
    from .field import load_checkpoint

    nets = load_checkpoint(path)
    if len(nets) != 2:
        raise SpikeFieldError(f"{path}: expected a coarse and a fine network, found {len(nets)}")
    return nets


def _pose_camera(path, width, height, focal):
    from .field import Camera

    pose = np.loadtxt(path, dtype=np.float64)
    return Camera(pose.reshape(4, 4), focal, width, height)


def cmd_render(args):
    from .scenegen import load_dataset
    from .trainer import render_view

    coarse, fine = _load_nets(args.ckpt)
    cfg = _train_config(args.config)
    if args.data is None and not os.path.exists(args.view):
        raise UsageError("--view as an index needs --data")
    if os.path.exists(args.view):
        if args.data is not None:
            ds = load_dataset(args.data)
            ref = ds.cameras[0]
            near, far, peak = ds.near, ds.far, ds.peak
        else:
            from .scenegen import make_pose_ring

            ref = make_pose_ring(1, 4.0, width=args.size, height=args.size)[0]
            near, far, peak = 2.0, 6.0, 1.0
        cam = _pose_camera(args.view, ref.width, ref.height, ref.focal)
    else:
        ds = load_dataset(args.data)
        cam = ds.cameras[int(args.view)]
        near, far, peak = ds.near, ds.far, ds.peak
    img = render_view(coarse, fine, cam, cfg, near, far)
    scale = 255.0 / peak if args.scale is None else args.scale
    save_png(args.out, img, scale)


EVAL_COLUMNS = ["view", "psnr_full", "psnr_obj", "ssim_full", "ssim_obj"]


def write_eval_csv(path_or_file, rows):
    ctx = open(path_or_file, "w", newline="") if isinstance(path_or_file, (str, os.PathLike)) else nullcontext(path_or_file)
    with ctx as fh:
        wr = csv.writer(fh)
        wr.writerow(EVAL_COLUMNS)
        for r in rows:
            wr.writerow([r["view"]] + [f"{r[k]:.6f}" for k in EVAL_COLUMNS[1:]])


def cmd_eval(args):
    from .scenegen import load_dataset
    from .trainer import evaluate

    coarse, fine = _load_nets(args.ckpt)
    cfg = _train_config(args.config)
    ds = load_dataset(args.data)
    views = None if args.views == "test" else list(range(len(ds.cameras)))
    rows = evaluate(coarse, fine, ds, cfg, views)
    write_eval_csv(args.out, rows)


def run_demo(out_dir, seed: int = 0, fast: bool = False, exposure="medium", stream=sys.stdout):
    """Dataset -> three trainings -> evaluation; returns {mode: mean test PSNR}."""
    from .field import save_checkpoint
    from .scenegen import builtin_dataset
    from .trainer import TrainConfig, dump_config, evaluate, render_view, train

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = builtin_dataset("benchmark", exposure, "medium", 48, 16, 256, seed=seed, out_dir=out / "data")
    base = TrainConfig(seed=seed, **(DESK_FAST if fast else DESK_CONFIG))
    results = {}
    for mode in ("spike", "tfi", "tfp"):
        t0 = time.time()
        cfg = base.with_(loss_mode=mode)
        (out / f"{mode}.cfg").write_text(dump_config(cfg))
        coarse, fine, _ = train(ds, cfg)
        save_checkpoint(out / f"{mode}.nrf", [coarse, fine])
        rows = evaluate(coarse, fine, ds, cfg)
        write_eval_csv(out / f"{mode}_eval.csv", rows)
        test = ds.indices("test")[0]
        save_png(out / f"{mode}_view{test:03d}.png", render_view(coarse, fine, ds.cameras[test], cfg, ds.near, ds.far),
                 255.0 / ds.peak)
        results[mode] = (float(np.mean([r["psnr_full"] for r in rows])),
                         float(np.mean([r["ssim_full"] for r in rows])), time.time() - t0)
    names = {"spike": "SpikeRender", "tfi": "IntensityMSE-TFI", "tfp": "IntensityMSE-TFP(32)"}
    print(f"{'loss':<22}{'test PSNR':>10}{'SSIM':>8}{'time s':>8}", file=stream)
    for mode, (p, s, dt) in results.items():
        print(f"{names[mode]:<22}{p:>10.2f}{s:>8.3f}{dt:>8.1f}", file=stream)
    return {m: v[0] for m, v in results.items()}


def cmd_demo(args):
    run_demo(args.out, seed=args.seed, fast=args.fast, exposure=args.exposure)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=None, help="cap BLAS threads (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="spikefield", description="Spike-camera radiance fields.")
    p.add_argument("--version", action="version", version=f"spikefield {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", parents=[common], help="simulate a spike stream")
    s.add_argument("--scene", required=True, help="grayscale image file or builtin scene name")
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--dark", type=float, default=0.0)
    s.add_argument("--nonuniformity", default=None, help=".spm map or sigma of a random map")
    s.add_argument("--shot-noise", type=_bool, default=False)
    s.add_argument("--photon-scale", type=float, default=100.0)
    s.add_argument("--steps", type=int, default=256)
    s.add_argument("--exposure", default="medium", help="builtin scenes: low|medium|high")
    s.add_argument("--view", type=int, default=0, help="builtin scenes: pose-ring index")
    s.add_argument("--views", type=int, default=16)
    s.add_argument("--size", type=int, default=48)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate", parents=[common], help="recover dark current and nonuniformity")
    s.add_argument("--dark", required=True)
    s.add_argument("--lit1", required=True)
    s.add_argument("--l1", type=float, required=True)
    s.add_argument("--lit2", required=True)
    s.add_argument("--l2", type=float, required=True)
    s.add_argument("--out-ld", required=True)
    s.add_argument("--out-r", required=True)
    s.add_argument("--literal-eq7", action="store_true", help="emit the reciprocal orientation of R")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("reconstruct", parents=[common], help="TFI / TFP / rate image from a stream")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--method", choices=["tfi", "tfp", "rate"], default="tfi")
    s.add_argument("--t", type=int, default=None, help="time step (default: middle)")
    s.add_argument("--window", type=int, default=32)
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--scale", type=float, default=None, help="PNG value per unit intensity (default 255/theta)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("train", parents=[common], help="fit coarse and fine fields to a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--log", default=None, help="optional CSV of per-iteration loss")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("render", parents=[common], help="render a view from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--view", required=True, help="dataset view index or a 4x4 pose text file")
    s.add_argument("--data", default=None)
    s.add_argument("--config", default=None, help="sample counts (n_coarse, n_fine)")
    s.add_argument("--size", type=int, default=48)
    s.add_argument("--scale", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of a checkpoint on a dataset")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--views", choices=["test", "all"], default="test")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("demo", parents=[common], help="full pipeline on the builtin scene")
    s.add_argument("--fast", action="store_true")
    s.add_argument("--exposure", default="medium")
    s.add_argument("--out", default="spikefield_demo")
    s.set_defaults(func=cmd_demo)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.command == "eval" and args.out == "-":
        args.out = sys.stdout
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=max(1, args.threads))
    else:
        limiter = nullcontext()
    try:
        with limiter:
            args.func(args)
    except UsageError as exc:
        print(f"spikefield {args.command}: {exc}", file=sys.stderr)
        return 1
    except (SpikeFieldError, OSError, ValueError) as exc:
        print(f"spikefield {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
